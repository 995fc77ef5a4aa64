"""Deterministic DDIM integration of the probability-flow ODE.

In the variables ``sigma = sqrt((1 - ab) / ab)`` and ``xbar = x / sqrt(ab)``
the probability-flow ODE reads ``d xbar = eps(xbar / sqrt(sigma^2 + 1)) d sigma``.
One DDIM step is its explicit Euler step between two step indices::

    x_to / sqrt(ab_to) = x_from / sqrt(ab_from) + (sigma_to - sigma_from) * eps(x_from, t_from)

The same affine update runs in both directions; the sign comes from the
sigma difference. The noise model is always evaluated at the starting point
of a step, so encoding samples it at the less noisy end of each interval and
decoding at the noisier end. That asymmetry is the only source of round-trip
error beyond floating point.

The latent code is the raw state ``x`` at step ``T - 1`` (not ``xbar``).

A noise model is either a :class:`~ddib.scorenet.ScoreNetwork` or any
callable ``model(x, t) -> eps`` taking an (n, d) array and an integer step.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import CompatibilityError, NumericError, ParameterError, ShapeError
from .schedule import NoiseSchedule, sigma_of
from .scorenet import ScoreNetwork, predict_noise

FORWARD = "forward"
REVERSE = "reverse"


@dataclass(frozen=True)
class SolveSpec:
    """How many DDIM steps to take and in which direction.

    ``forward`` integrates data (step 0) to latent (step T - 1); ``reverse``
    goes back. With fewer steps than the schedule has intervals, the step
    indices are a uniform (rounded) subsampling that keeps both endpoints.
    """

    n_steps: int
    direction: str = FORWARD

    def __post_init__(self):
        if self.direction not in (FORWARD, REVERSE):
            raise ParameterError(f"direction must be 'forward' or 'reverse', got {self.direction!r}")
        if int(self.n_steps) != self.n_steps or self.n_steps < 1:
            raise ParameterError(f"n_steps must be a positive integer, got {self.n_steps}")

    def indices(self, T: int) -> np.ndarray:
        if self.n_steps > T - 1:
            raise ParameterError(f"n_steps={self.n_steps} exceeds the {T - 1} intervals of the schedule")
        idx = np.round(np.linspace(0, T - 1, self.n_steps + 1)).astype(np.int64)
        return idx if self.direction == FORWARD else idx[::-1].copy()


def noise_fn(model, s: NoiseSchedule):
    """Normalise ``model`` to a callable ``(x, t) -> eps``; reject schedule mismatches."""
    sid = getattr(model, "schedule_id", None)
    if sid is not None and sid != s.fingerprint:
        raise CompatibilityError(
            f"model was trained under schedule {sid}, but integration uses schedule {s.fingerprint}")
    if isinstance(model, ScoreNetwork):
        return lambda x, t: predict_noise(model, s, x, t)
    if callable(model):
        return model
    raise ParameterError(f"not a noise model: {model!r}")


def _input_dim(model):
    return getattr(model, "input_dim", None)


def ddim_step(model, s: NoiseSchedule, x, t_from: int, t_to: int, eps_fn=None) -> np.ndarray:
    """Single DDIM update of ``x`` ((d,) or (n, d)) from step ``t_from`` to ``t_to``."""
    if t_from == t_to:
        raise ParameterError(f"DDIM step needs distinct endpoints, got {t_from} -> {t_to}")
    eps_fn = eps_fn or noise_fn(model, s)
    x = np.asarray(x, dtype=np.float64)
    ab_from, ab_to = s.alpha_bar[t_from], s.alpha_bar[t_to]
    sig_from, sig_to = sigma_of(s, t_from), sigma_of(s, t_to)
    eps = np.asarray(eps_fn(x, t_from), dtype=np.float64)
    out = np.sqrt(ab_to) * (x / np.sqrt(ab_from) + (sig_to - sig_from) * eps)
    if not np.all(np.isfinite(out)):
        raise NumericError(f"non-finite state in DDIM step {t_from} -> {t_to}", step=t_from)
    return out


def ode_solve(model, s: NoiseSchedule, x_start, spec: SolveSpec, return_path=False, step=ddim_step):
    """Integrate from one end of the schedule to the other.

    Returns the endpoint, or ``(endpoint, path)`` with ``path`` of shape
    ``(n_steps + 1, *x_start.shape)`` when ``return_path`` is set. ``step``
    is the one-step integrator and must have the signature of
    :func:`ddim_step`.
    """
    x = np.asarray(x_start, dtype=np.float64)
    dim = _input_dim(model)
    if dim is not None and x.shape[-1] != dim:
        raise ShapeError(f"points have dimension {x.shape[-1]}, model expects {dim}")
    eps_fn = noise_fn(model, s)
    idx = spec.indices(s.T)
    path = [x] if return_path else None
    for t_from, t_to in zip(idx[:-1], idx[1:]):
        x = step(model, s, x, int(t_from), int(t_to), eps_fn=eps_fn)
        if return_path:
            path.append(x)
    if return_path:
        return x, np.stack(path)
    return x


def encode(model, s: NoiseSchedule, x0, n_steps: int, return_path=False):
    """Data -> latent code (step 0 to step T - 1)."""
    return ode_solve(model, s, x0, SolveSpec(n_steps, FORWARD), return_path=return_path)


def decode(model, s: NoiseSchedule, latent, n_steps: int, return_path=False):
    """Latent code -> data (step T - 1 to step 0)."""
    return ode_solve(model, s, latent, SolveSpec(n_steps, REVERSE), return_path=return_path)
