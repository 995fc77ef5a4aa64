"""Discrete optimal transport baselines under squared Euclidean cost.

* :func:`emd` -- exact plan. Equal-size uniform clouds reduce to an
  assignment problem (an optimal vertex of the Birkhoff polytope is a
  permutation), solved with the Jonker-Volgenant algorithm; anything else
  goes to the transportation LP.
* :func:`sinkhorn` -- entropic plan by log-domain Sinkhorn iterations with
  epsilon-scaling, referenced to the product measure:
  ``P_ij = a_i b_j exp((f_i + g_j - C_ij) / eps)``.
* :func:`linear_map_estimate`, :func:`barycentric_map` and
  :func:`color_convert` turn plans into point maps.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy import sparse
from scipy.optimize import linear_sum_assignment, linprog
from scipy.spatial import cKDTree
from scipy.spatial.distance import cdist
from scipy.special import logsumexp

from .datasets import PointCloud, as_points
from .errors import CapacityError, ConvergenceError, DegenerateDataError, ParameterError, ShapeError

EMD_MAX_POINTS = 4096


@dataclass
class TransportPlan:
    coupling: np.ndarray
    cost: float
    source_weights: np.ndarray
    target_weights: np.ndarray
    epsilon: float | None = None
    regularized_cost: float | None = None  # entropic objective, sinkhorn only
    marginal_violation: float = 0.0  # before the final feasibility rounding
    iterations: int = 0

    def marginal_error(self) -> float:
        rows = np.abs(self.coupling.sum(axis=1) - self.source_weights).max()
        cols = np.abs(self.coupling.sum(axis=0) - self.target_weights).max()
        return float(max(rows, cols))

    def to_dict(self) -> dict:
        return {
            "cost": self.cost,
            "epsilon": self.epsilon,
            "regularized_cost": self.regularized_cost,
            "marginal_violation": self.marginal_violation,
            "iterations": self.iterations,
            "source_weights": self.source_weights.tolist(),
            "target_weights": self.target_weights.tolist(),
            "coupling": self.coupling.tolist(),
        }


def cost_matrix(source, target) -> np.ndarray:
    x, y = as_points(source), as_points(target)
    if x.ndim != 2 or y.ndim != 2 or x.shape[1] != y.shape[1]:
        raise ShapeError(f"incompatible point sets {x.shape} and {y.shape}")
    return cdist(x, y, "sqeuclidean")


def _weights(w, n):
    if w is None:
        return np.full(n, 1.0 / n)
    w = np.asarray(w, dtype=np.float64)
    if w.shape != (n,) or np.any(w < 0) or abs(w.sum() - 1.0) > 1e-9:
        raise ParameterError("weights must be a probability vector matching the cloud")
    return w


def emd(source, target, a=None, b=None) -> TransportPlan:
    """Exact optimal transport plan between two weighted clouds (uniform by default)."""
    C = cost_matrix(source, target)
    n, m = C.shape
    if max(n, m) > EMD_MAX_POINTS:
        raise CapacityError(f"exact solver is limited to {EMD_MAX_POINTS} points per side "
                            f"(got {n} x {m}); use sinkhorn instead")
    uniform = a is None and b is None
    a, b = _weights(a, n), _weights(b, m)
    if uniform and n == m:
        rows, cols = linear_sum_assignment(C)
        P = np.zeros((n, m))
        P[rows, cols] = 1.0 / n
        cost = float(C[rows, cols].sum() / n)
        return TransportPlan(P, cost, a, b)
    # transportation LP: variables P_ij row-major, row and column sum constraints
    A_rows = sparse.kron(sparse.eye(n), np.ones((1, m)))
    A_cols = sparse.kron(np.ones((1, n)), sparse.eye(m))
    A_eq = sparse.vstack([A_rows, A_cols]).tocsr()
    res = linprog(C.ravel(), A_eq=A_eq, b_eq=np.concatenate([a, b]), bounds=(0, None),
                  method="highs")
    if res.status != 0:
        raise ConvergenceError(f"transportation LP failed: {res.message}", float("nan"))
    P = np.maximum(res.x.reshape(n, m), 0.0)
    return TransportPlan(P, float((P * C).sum()), a, b)


def _round_to_polytope(P, a, b):
    """Project a nearly feasible plan onto the exact marginals (Altschuler et al. 2017)."""
    r = P.sum(axis=1)
    P = P * np.minimum(1.0, a / np.where(r > 0, r, 1.0))[:, None]
    c = P.sum(axis=0)
    P = P * np.minimum(1.0, b / np.where(c > 0, c, 1.0))[None, :]
    # both residuals are nonnegative up to rounding
    err_r = np.maximum(a - P.sum(axis=1), 0.0)
    err_c = np.maximum(b - P.sum(axis=0), 0.0)
    total = err_r.sum()
    if total > 0:
        P = P + np.outer(err_r, err_c) / total
    return P


NEWTON_MAX_POINTS = 1500


def _log_plan(f, g, C, loga, logb, eps):
    return loga[:, None] + logb[None, :] + (f[:, None] + g[None, :] - C) / eps


def _softmin(C, h, logw, eps, buf):
    """Row-wise ``-eps * logsumexp(logw + (h - C) / eps)`` in a reusable buffer."""
    Z = buf[:C.shape[0], :C.shape[1]]
    np.subtract(h, C, out=Z)
    Z *= 1.0 / eps
    Z += logw
    top = Z.max(axis=1)
    top = np.where(np.isfinite(top), top, 0.0)
    Z -= top[:, None]
    np.exp(Z, out=Z)
    with np.errstate(divide="ignore"):
        return -eps * (np.log(Z.sum(axis=1)) + top)


def _violation(logP, a, b):
    P = np.exp(logP)
    return float(np.abs(P.sum(axis=1) - a).sum() + np.abs(P.sum(axis=0) - b).sum())


def _newton_polish(f, g, C, a, b, eps, tol, max_steps=50):
    """Damped Newton ascent on the entropic dual, for small stalled problems.

    The dual Hessian is singular along (1, -1); the last g coordinate is held
    fixed to remove that direction.
    """
    with np.errstate(divide="ignore"):
        loga, logb = np.log(a), np.log(b)

    def dual(f, g):
        return f @ a + g @ b - eps * np.exp(logsumexp(_log_plan(f, g, C, loga, logb, eps)))

    n, m = C.shape
    logP = _log_plan(f, g, C, loga, logb, eps)
    violation = _violation(logP, a, b)
    for _ in range(max_steps):
        if violation <= tol:
            break
        P = np.exp(logP)
        r, c = P.sum(axis=1), P.sum(axis=0)
        H = np.zeros((n + m - 1, n + m - 1))
        H[:n, :n] = np.diag(r)
        H[:n, n:] = P[:, :m - 1]
        H[n:, :n] = P[:, :m - 1].T
        H[n:, n:] = np.diag(c[:m - 1])
        rhs = eps * np.concatenate([a - r, (b - c)[:m - 1]])
        step = np.linalg.lstsq(H, rhs, rcond=None)[0]
        df, dg = step[:n], np.append(step[n:], 0.0)
        d0, t = dual(f, g), 1.0
        while t > 1e-6 and dual(f + t * df, g + t * dg) < d0:
            t *= 0.5
        f, g = f + t * df, g + t * dg
        logP = _log_plan(f, g, C, loga, logb, eps)
        violation = _violation(logP, a, b)
    return f, g, violation


def sinkhorn(source, target, epsilon: float, max_iters: int = 10000, tol: float = 1e-6,
             a=None, b=None, scaling: bool = True, check_every: int = 10) -> TransportPlan:
    """Entropic OT plan; stops once the L1 marginal violation is at most ``tol``.

    With ``scaling`` the regularisation starts near the cost scale and is
    halved stage by stage down to ``epsilon``, warm-starting the potentials;
    ``max_iters`` bounds the total number of iterations over all stages.
    Small problems whose final stage stalls (violation not halving over 200
    iterations) are finished by Newton steps on the same dual.
    """
    if epsilon <= 0:
        raise ParameterError(f"epsilon must be positive, got {epsilon}")
    C = cost_matrix(source, target)
    n, m = C.shape
    a, b = _weights(a, n), _weights(b, m)
    with np.errstate(divide="ignore"):
        loga, logb = np.log(a), np.log(b)
    f, g = np.zeros(n), np.zeros(m)

    eps_stages = [epsilon]
    if scaling:
        e = max(float(C.max()), epsilon)
        while e > epsilon * 2:
            eps_stages.insert(-1, e)
            e /= 2.0
    CT = np.ascontiguousarray(C.T)
    buf = np.empty((max(n, m), max(n, m)))
    it = 0
    violation = np.inf
    for stage, eps in enumerate(eps_stages):
        final = stage == len(eps_stages) - 1
        stage_tol = tol if final else max(tol, 1e-3)
        k = 0
        history = []
        while it < max_iters:
            f_new = _softmin(C, g, logb, eps, buf)
            if k > 0 and k % check_every == 0:
                # columns are exact after a g update, and the row sums of the
                # current plan are a * exp((f - f_new) / eps)
                rows = a * np.exp(np.minimum((f - f_new) / eps, 700.0))
                violation = float(np.abs(rows - a).sum())
                if violation <= stage_tol:
                    break
                history.append(violation)
                lag = 200 // check_every
                if (final and n + m <= NEWTON_MAX_POINTS and len(history) > lag
                        and violation > 0.5 * history[-1 - lag]):
                    f, g, violation = _newton_polish(f, g, C, a, b, eps, tol)
                    break
            f = f_new
            g = _softmin(CT, f, loga, eps, buf)
            it += 1
            k += 1
        if it >= max_iters and violation > stage_tol:
            logP = _log_plan(f, g, C, loga, logb, eps)
            with np.errstate(over="ignore"):
                violation = float(np.abs(np.exp(logsumexp(logP, axis=1)) - a).sum())
        if violation > stage_tol and (final or it >= max_iters):
            raise ConvergenceError(f"sinkhorn did not converge in {max_iters} iterations "
                                   f"(epsilon={epsilon})", violation)

    logP = _log_plan(f, g, C, loga, logb, epsilon)
    reg = float(f @ a + g @ b - epsilon * (np.exp(logsumexp(logP)) - 1.0))
    P = _round_to_polytope(np.exp(logP), a, b)
    return TransportPlan(P, float((P * C).sum()), a, b, epsilon=epsilon, regularized_cost=reg,
                         marginal_violation=violation, iterations=it)


def _self_transport(x, epsilon: float, tol: float = 1e-6, max_iters: int = 10000) -> float:
    """Entropic cost of a uniform cloud to itself.

    The plan is symmetric, so one potential suffices; averaging each update
    with the previous iterate converges in a handful of steps.
    """
    C = cost_matrix(x, x)
    n = C.shape[0]
    a = np.full(n, 1.0 / n)
    loga = np.log(a)
    buf = np.empty_like(C)
    f = _softmin(C, np.zeros(n), loga, epsilon, buf)
    for _ in range(max_iters):
        f_new = _softmin(C, f, loga, epsilon, buf)
        rows = a * np.exp(np.minimum((f - f_new) / epsilon, 700.0))
        violation = 2.0 * float(np.abs(rows - a).sum())
        if violation <= tol:
            break
        f = 0.5 * (f + f_new)
    else:
        raise ConvergenceError(f"symmetric sinkhorn did not converge in {max_iters} iterations "
                               f"(epsilon={epsilon})", violation)
    mass = float(rows.sum())
    return float(2.0 * f @ a - epsilon * (mass - 1.0))


def sinkhorn_divergence(x, y, epsilon: float, **kw) -> float:
    """Debiased entropic cost S(x, y) = OT(x, y) - (OT(x, x) + OT(y, y)) / 2 for uniform clouds."""
    if epsilon <= 0:
        raise ParameterError(f"epsilon must be positive, got {epsilon}")
    xy = sinkhorn(x, y, epsilon, **kw).regularized_cost
    self_kw = {k: v for k, v in kw.items() if k in ("tol", "max_iters")}
    return xy - 0.5 * (_self_transport(x, epsilon, **self_kw) + _self_transport(y, epsilon, **self_kw))


def barycentric_map(plan: TransportPlan, source, target) -> PointCloud:
    """Send source point i to the coupling-weighted mean of the targets."""
    x, y = as_points(source), as_points(target)
    if plan.coupling.shape != (x.shape[0], y.shape[0]):
        raise ShapeError(f"plan of shape {plan.coupling.shape} does not match clouds "
                         f"of {x.shape[0]} and {y.shape[0]} points")
    w = plan.source_weights
    if np.any(w <= 0):
        raise DegenerateDataError("barycentric map undefined for a zero-weight source point")
    mapped = (plan.coupling @ y) / w[:, None]
    tags = source.tags.copy() if isinstance(source, PointCloud) else np.arange(x.shape[0])
    return PointCloud(mapped, tags)


class AffineMap(NamedTuple):
    A: np.ndarray
    b: np.ndarray

    def __call__(self, x):
        if isinstance(x, PointCloud):
            return x.with_points(self(x.points))
        return np.asarray(x, dtype=np.float64) @ self.A.T + self.b


def linear_map_estimate(source, target, epsilon: float = 1e-3, tol: float = 1e-9,
                        max_iters: int = 100000) -> AffineMap:
    """Least-squares affine map onto the barycentric projection of a Sinkhorn plan."""
    x, y = as_points(source), as_points(target)
    n, d = x.shape
    if n < d + 1:
        raise DegenerateDataError(f"need at least {d + 1} points to fit a {d}-d affine map")
    plan = sinkhorn(x, y, epsilon, tol=tol, max_iters=max_iters)
    proj = barycentric_map(plan, x, y).points
    design = np.hstack([x, np.ones((n, 1))])
    coef, _, rank, _ = np.linalg.lstsq(design, proj, rcond=None)
    if rank < d + 1:
        raise DegenerateDataError("source points are affinely dependent; regression is rank deficient")
    return AffineMap(coef[:d].T.copy(), coef[d].copy())


@dataclass
class ColorMap:
    """Anchor colours and their displacements; other colours follow their nearest anchor."""

    anchors: np.ndarray
    mapped: np.ndarray

    def __post_init__(self):
        self._tree = cKDTree(self.anchors)

    def __call__(self, x):
        if isinstance(x, PointCloud):
            return x.with_points(self(x.points))
        x = np.asarray(x, dtype=np.float64)
        _, idx = self._tree.query(x)
        return x + (self.mapped - self.anchors)[idx]


def subsample(cloud, size, seed):
    x = as_points(cloud)
    if size is None or size >= x.shape[0]:
        return x
    idx = np.sort(np.random.default_rng(seed).choice(x.shape[0], size=size, replace=False))
    return x[idx]


def color_convert(reference, subject, sample_size: int = 1000, epsilon: float = 1e-2,
                  seed=0, method: str = "sinkhorn", tol: float = 1e-6) -> ColorMap:
    """Colour correspondence from ``subject`` towards ``reference``, fit on pixel subsamples.

    Both clouds are subsampled to ``sample_size`` points (the same index
    draw for both when they have equal size), a plan is computed between
    the samples and its barycentric projection gives the anchor map.
    ``method`` is ``"sinkhorn"`` or ``"emd"``.
    """
    ref, sub = as_points(reference), as_points(subject)
    if ref.shape[1] != 3 or sub.shape[1] != 3:
        raise ShapeError("colour conversion needs 3-d (RGB) clouds")
    if sample_size is not None and not (1 <= sample_size <= EMD_MAX_POINTS):
        raise ParameterError(f"sample_size must lie in [1, {EMD_MAX_POINTS}], got {sample_size}")
    xs, xt = subsample(sub, sample_size, seed), subsample(ref, sample_size, seed)
    if method == "sinkhorn":
        plan = sinkhorn(xs, xt, epsilon, tol=tol)
    elif method == "emd":
        plan = emd(xs, xt)
    else:
        raise ParameterError(f"unknown colour conversion method {method!r}")
    return ColorMap(xs, barycentric_map(plan, xs, xt).points)


def pixel_mse(a, b) -> float:
    """Mean squared difference of two uint8 rasters after mapping to [-1, 1]."""
    a, b = np.asarray(a), np.asarray(b)
    if a.shape != b.shape:
        raise ShapeError(f"raster shapes differ: {a.shape} vs {b.shape}")
    da = a.astype(np.float64) * (2.0 / 255.0) - 1.0
    db = b.astype(np.float64) * (2.0 / 255.0) - 1.0
    return float(np.mean((da - db) ** 2))
