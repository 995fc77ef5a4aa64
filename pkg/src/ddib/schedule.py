"""Discrete variance-preserving noise schedule.

The forward diffusion is the VP SDE ``dx = -(beta/2) x dt + sqrt(beta) dw``
discretised on ``T`` steps. Step ``i`` corresponds to continuous time
``t = i / (T - 1)`` in [0, 1]; every public function here takes the integer
step index, not the continuous time.

With ``alpha_bar[i] = prod_{j <= i} (1 - beta[j])`` the perturbation kernel is

    x_i = sqrt(alpha_bar[i]) * x_0 + sqrt(1 - alpha_bar[i]) * eps

and the DDIM integrator works in the reparameterised variables

    sigma(i) = sqrt((1 - alpha_bar[i]) / alpha_bar[i]),   xbar = x / sqrt(alpha_bar[i])

in which the VP process becomes variance-exploding (``xbar`` has noise scale
``sigma``).
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ParameterError, ShapeError, SingularityError

ALPHA_BAR_FLOOR = 1e-8


@dataclass(frozen=True, eq=False)
class NoiseSchedule:
    """Immutable discrete schedule. Build it with :func:`make_linear_schedule`."""

    beta_min: float
    beta_max: float
    beta: np.ndarray = field(repr=False)
    alpha_bar: np.ndarray = field(repr=False)

    @property
    def T(self) -> int:
        return len(self.beta)

    def params(self) -> dict:
        return {"kind": "linear", "T": self.T, "beta_min": self.beta_min, "beta_max": self.beta_max}

    @property
    def fingerprint(self) -> str:
        """Short hash of the schedule parameters; equal schedules share it."""
        blob = json.dumps(self.params(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def __eq__(self, other):
        if not isinstance(other, NoiseSchedule):
            return NotImplemented
        return self.params() == other.params()

    def __hash__(self):
        return hash(self.fingerprint)

    def check_step(self, t) -> None:
        t = np.asarray(t)
        if np.any(t < 0) or np.any(t >= self.T):
            raise ParameterError(f"step index outside [0, {self.T}): {t}")

    def sigma(self, t):
        return sigma_of(self, t)


def make_linear_schedule(T: int = 1000, beta_min: float = 1e-4, beta_max: float = 0.02) -> NoiseSchedule:
    """DDPM linear schedule: beta interpolated linearly over ``T`` steps."""
    if int(T) != T or T < 2:
        raise ParameterError(f"T must be an integer >= 2, got {T}")
    if not (0.0 < beta_min <= beta_max < 1.0):
        raise ParameterError(f"need 0 < beta_min <= beta_max < 1, got {beta_min}, {beta_max}")
    beta = np.linspace(beta_min, beta_max, int(T), dtype=np.float64)
    alpha_bar = np.maximum(np.cumprod(1.0 - beta), ALPHA_BAR_FLOOR)
    beta.setflags(write=False)
    alpha_bar.setflags(write=False)
    return NoiseSchedule(float(beta_min), float(beta_max), beta, alpha_bar)


def schedule_from_params(params: dict) -> NoiseSchedule:
    if params.get("kind", "linear") != "linear":
        raise ParameterError(f"unsupported schedule kind {params.get('kind')!r}")
    return make_linear_schedule(int(params["T"]), float(params["beta_min"]), float(params["beta_max"]))


def perturb(s: NoiseSchedule, x0, t, eps) -> np.ndarray:
    """Sample from q(x_t | x_0) given the noise ``eps``.

    ``x0`` and ``eps`` are (d,) or (n, d); ``t`` is a scalar step or one
    step per row.
    """
    x0 = np.asarray(x0, dtype=np.float64)
    eps = np.asarray(eps, dtype=np.float64)
    if x0.shape != eps.shape:
        raise ShapeError(f"x0 has shape {x0.shape} but eps has shape {eps.shape}")
    s.check_step(t)
    ab = s.alpha_bar[np.asarray(t)]
    if x0.ndim == 2 and np.ndim(ab) == 1:
        ab = ab[:, None]
    return np.sqrt(ab) * x0 + np.sqrt(1.0 - ab) * eps


def sigma_of(s: NoiseSchedule, t):
    """Noise-to-signal ratio sqrt((1 - alpha_bar) / alpha_bar) at step ``t``."""
    s.check_step(t)
    ab = s.alpha_bar[np.asarray(t)]
    if np.any(ab <= 0.0):
        raise SingularityError(f"alpha_bar vanishes at step {t}")
    out = np.sqrt((1.0 - ab) / ab)
    return float(out) if np.ndim(out) == 0 else out
