"""Noise-prediction MLP, its denoising objective and training loop.

The network ``eps_theta(x, t)`` is a plain multilayer perceptron on the
concatenation of the point ``x`` and a sinusoidal embedding of the
continuous time ``t / (T - 1)``.  Hidden layers use the SiLU nonlinearity
``z * sigmoid(z)``; the output layer is linear and has ``input_dim`` units,
because the network predicts the noise vector rather than a scalar energy.
It relates to the score of the perturbed density through

    score(x, t) = -eps_theta(x, t) / sqrt(1 - alpha_bar[t]).

Weights live in one flat float64 array (``W_0, b_0, W_1, b_1, ...`` with
row-major ``(fan_in, fan_out)`` matrices) so that the optimiser, the
finite-difference checks and the model file all see the same vector.
Gradients are computed by hand-written reverse-mode differentiation.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import FormatError, ParameterError, ShapeError, TrainingError
from .schedule import NoiseSchedule, schedule_from_params

SCHEMA_VERSION = 1
MAX_PERIOD = 1000.0


def time_embedding(tau, dim: int) -> np.ndarray:
    """Sinusoidal features of continuous time ``tau`` in [0, 1].

    Frequencies are spaced geometrically from 1 to ``MAX_PERIOD`` rad per
    unit time; the first half of the columns are sines, the second cosines.
    """
    if dim % 2:
        raise ParameterError(f"time embedding dimension must be even, got {dim}")
    tau = np.atleast_1d(np.asarray(tau, dtype=np.float64))
    freqs = np.exp(np.linspace(0.0, math.log(MAX_PERIOD), dim // 2))
    angles = tau[:, None] * freqs[None, :]
    return np.concatenate([np.sin(angles), np.cos(angles)], axis=1)


@dataclass(eq=False)
class ScoreNetwork:
    input_dim: int
    hidden_dims: tuple
    time_embed_dim: int
    weights: np.ndarray = field(repr=False)
    activation: str = "silu"
    schedule_id: str | None = None  # fingerprint of the schedule it was trained under
    model_id: str | None = None

    def __post_init__(self):
        self.hidden_dims = tuple(int(h) for h in self.hidden_dims)
        self.weights = np.asarray(self.weights, dtype=np.float64)
        if self.activation != "silu":
            raise ParameterError(f"unsupported activation {self.activation!r}")
        expected = n_weights_for(self.input_dim, self.hidden_dims, self.time_embed_dim)
        if self.weights.shape != (expected,):
            raise ShapeError(f"expected {expected} weights, got array of shape {self.weights.shape}")

    @property
    def layer_shapes(self) -> list[tuple[int, int]]:
        return layer_shapes(self.input_dim, self.hidden_dims, self.time_embed_dim)

    @property
    def n_weights(self) -> int:
        return self.weights.size

    def layers(self, flat=None) -> list[tuple[np.ndarray, np.ndarray]]:
        """Views ``(W, b)`` into ``flat`` (default: this network's weights)."""
        flat = self.weights if flat is None else flat
        out, k = [], 0
        for fan_in, fan_out in self.layer_shapes:
            W = flat[k:k + fan_in * fan_out].reshape(fan_in, fan_out)
            k += fan_in * fan_out
            b = flat[k:k + fan_out]
            k += fan_out
            out.append((W, b))
        return out

    def with_weights(self, weights) -> "ScoreNetwork":
        return replace(self, weights=np.array(weights, dtype=np.float64))


def layer_shapes(input_dim, hidden_dims, time_embed_dim):
    dims = [input_dim + time_embed_dim, *hidden_dims, input_dim]
    return list(zip(dims[:-1], dims[1:]))


def n_weights_for(input_dim, hidden_dims, time_embed_dim) -> int:
    return sum(i * o + o for i, o in layer_shapes(input_dim, hidden_dims, time_embed_dim))


def init_network(input_dim=2, hidden_dims=(128, 128, 128, 128), time_embed_dim=64,
                 seed=0, zero_final=True) -> ScoreNetwork:
    """Kaiming-uniform weights, zero biases; zero output layer by default.

    A zero output layer makes the initial noise prediction identically zero.
    """
    rng = np.random.default_rng(seed)
    shapes = layer_shapes(input_dim, hidden_dims, time_embed_dim)
    parts = []
    for k, (fan_in, fan_out) in enumerate(shapes):
        bound = math.sqrt(6.0 / fan_in)
        if zero_final and k == len(shapes) - 1:
            W = np.zeros((fan_in, fan_out))
        else:
            W = rng.uniform(-bound, bound, size=(fan_in, fan_out))
        parts += [W.ravel(), np.zeros(fan_out)]
    return ScoreNetwork(input_dim, tuple(hidden_dims), time_embed_dim, np.concatenate(parts))


def _sigmoid(z):
    # tanh form: overflow-free and faster than exp on large arrays
    return 0.5 + 0.5 * np.tanh(0.5 * z)


def _as_batch(net, x, t, T):
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    x2 = np.atleast_2d(x)
    if x2.ndim != 2 or x2.shape[1] != net.input_dim:
        raise ShapeError(f"expected points of dimension {net.input_dim}, got shape {x.shape}")
    t = np.asarray(t)
    if np.any(t < 0) or np.any(t >= T):
        raise ParameterError(f"step index outside [0, {T})")
    if t.ndim and t.shape != (x2.shape[0],):
        raise ShapeError(f"got {t.shape[0]} step indices for {x2.shape[0]} points")
    # a scalar step yields a single embedding row that broadcasts over the batch
    tau = np.reshape(t / (T - 1), (-1,)).astype(np.float64)
    return x2, tau, single


def _forward(net, weights, x, tau, keep=False):
    emb = time_embedding(tau, net.time_embed_dim)
    layers = net.layers(weights)
    d = net.input_dim
    W, b = layers[0]
    z = x @ W[:d] + (emb @ W[d:] + b)
    cache = [x, emb]
    for k in range(1, len(layers)):
        sig = _sigmoid(z)
        h = z * sig
        if keep:
            cache += [z, sig, h]
        W, b = layers[k]
        z = h @ W + b
    return z, cache


def _backward(net, weights, cache, dout):
    layers = net.layers(weights)
    grad = np.empty_like(weights)
    glayers = net.layers(grad)
    x, emb = cache[0], cache[1]
    d = net.input_dim
    dz = dout
    for k in range(len(layers) - 1, 0, -1):
        z, sig, h = cache[2 + 3 * (k - 1):5 + 3 * (k - 1)]
        gW, gb = glayers[k]
        gW[...] = h.T @ dz
        gb[...] = dz.sum(axis=0)
        dh = dz @ layers[k][0].T
        dz = dh * (sig * (1.0 + z * (1.0 - sig)))
    gW, gb = glayers[0]
    gW[:d] = x.T @ dz
    # broadcast embedding row: every example shares it
    gW[d:] = emb.T @ dz if emb.shape[0] == dz.shape[0] else np.outer(emb[0], dz.sum(axis=0))
    gb[...] = dz.sum(axis=0)
    return grad


def predict_noise(net: ScoreNetwork, s: NoiseSchedule, x, t) -> np.ndarray:
    """Evaluate ``eps_theta`` at points ``x`` ((d,) or (n, d)) and step(s) ``t``."""
    x2, tau, single = _as_batch(net, x, t, s.T)
    out, _ = _forward(net, net.weights, x2, tau)
    return out[0] if single else out


def analytic_gaussian_noise(mu, var, s: NoiseSchedule, x, t) -> np.ndarray:
    """Optimal noise prediction when the data are N(mu, var * I).

    The perturbed marginal at step t is N(sqrt(ab) mu, (ab var + 1 - ab) I),
    so eps*(x, t) = sqrt(1 - ab) (x - sqrt(ab) mu) / (ab var + 1 - ab).
    """
    if var <= 0:
        raise ParameterError(f"variance must be positive, got {var}")
    x = np.asarray(x, dtype=np.float64)
    mu = np.asarray(mu, dtype=np.float64)
    if mu.shape[-1] != x.shape[-1]:
        raise ShapeError(f"mean has dimension {mu.shape[-1]}, points {x.shape[-1]}")
    s.check_step(t)
    ab = s.alpha_bar[np.asarray(t)]
    if x.ndim == 2 and np.ndim(ab) == 1:
        ab = ab[:, None]
    return np.sqrt(1.0 - ab) * (x - np.sqrt(ab) * mu) / (ab * var + 1.0 - ab)


class GaussianNoiseOracle:
    """Callable ``(x, t) -> eps*`` for N(mu, var I) data under schedule ``s``."""

    def __init__(self, mu, var, s: NoiseSchedule):
        self.mu = np.asarray(mu, dtype=np.float64)
        self.var = float(var)
        self.schedule = s
        self.input_dim = self.mu.shape[0]
        self.schedule_id = s.fingerprint

    def __call__(self, x, t):
        return analytic_gaussian_noise(self.mu, self.var, self.schedule, x, t)


def loss_and_grad_at(net: ScoreNetwork, s: NoiseSchedule, x0, t, eps, weights=None):
    """Denoising loss for fixed (x0, t, eps) and its gradient w.r.t. the weights.

    The loss is the squared error averaged over batch and coordinates, i.e.
    the per-example ``||eps_theta - eps||^2 / d`` averaged over the batch.
    """
    weights = net.weights if weights is None else weights
    x0 = np.atleast_2d(np.asarray(x0, dtype=np.float64))
    eps = np.atleast_2d(np.asarray(eps, dtype=np.float64))
    t = np.broadcast_to(np.asarray(t), (x0.shape[0],))
    ab = s.alpha_bar[t][:, None]
    xt = np.sqrt(ab) * x0 + np.sqrt(1.0 - ab) * eps
    xt, tau, _ = _as_batch(net, xt, t, s.T)
    out, cache = _forward(net, weights, xt, tau, keep=True)
    diff = out - eps
    loss = float(np.mean(diff * diff))
    grad = _backward(net, weights, cache, 2.0 * diff / diff.size)
    return loss, grad


def denoising_loss_and_grad(net: ScoreNetwork, s: NoiseSchedule, batch, rng: np.random.Generator):
    """Sample one (t, eps) per example from ``rng`` and evaluate the objective.

    Steps are uniform over ``[0, T)`` and noise is standard normal; every
    step carries unit weight.
    """
    x0 = np.asarray(getattr(batch, "points", batch), dtype=np.float64)
    if x0.ndim != 2 or x0.shape[0] == 0:
        raise ParameterError("denoising loss needs a non-empty (n, d) batch")
    if x0.shape[1] != net.input_dim:
        raise ShapeError(f"batch has dimension {x0.shape[1]}, network expects {net.input_dim}")
    t = rng.integers(0, s.T, size=x0.shape[0])
    eps = rng.standard_normal(x0.shape)
    return loss_and_grad_at(net, s, x0, t, eps)


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 256
    iterations: int = 20000
    learning_rate: float = 1e-3
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0
    ema_decay: float = 0.999

    def __post_init__(self):
        if self.batch_size < 1 or self.iterations < 0 or self.learning_rate <= 0:
            raise ParameterError(f"invalid training configuration {self}")
        if not (0.0 <= self.adam_beta1 < 1.0 and 0.0 <= self.adam_beta2 < 1.0 and self.adam_eps > 0):
            raise ParameterError(f"invalid Adam parameters in {self}")
        if not (0.0 <= self.ema_decay < 1.0):
            raise ParameterError(f"ema_decay must lie in [0, 1), got {self.ema_decay}")
        if not (0 <= self.seed < 2**64):
            raise ParameterError(f"seed must be an unsigned 64-bit integer, got {self.seed}")


def train(net: ScoreNetwork, s: NoiseSchedule, data, cfg: TrainConfig, loss_log=None,
          progress=None) -> ScoreNetwork:
    """Fit ``net`` to a single domain with Adam; return the EMA weights.

    Minibatches are drawn with replacement from ``data``. Inputs are never
    modified. ``loss_log``, if given, receives the minibatch loss of every
    iteration; ``progress`` is called as ``progress(iteration, loss)``.
    """
    x = np.asarray(getattr(data, "points", data), dtype=np.float64)
    if x.ndim != 2 or x.shape[0] == 0 or x.shape[1] != net.input_dim:
        raise ShapeError(f"training data of shape {x.shape} does not fit a {net.input_dim}-d network")
    rng = np.random.default_rng(cfg.seed)
    w = net.weights.copy()
    ema = w.copy()
    m = np.zeros_like(w)
    v = np.zeros_like(w)
    b1, b2 = cfg.adam_beta1, cfg.adam_beta2
    for it in range(1, cfg.iterations + 1):
        batch = x[rng.integers(0, x.shape[0], size=cfg.batch_size)]
        t = rng.integers(0, s.T, size=cfg.batch_size)
        eps = rng.standard_normal(batch.shape)
        loss, g = loss_and_grad_at(net, s, batch, t, eps, weights=w)
        if not (math.isfinite(loss) and np.all(np.isfinite(g))):
            raise TrainingError("non-finite loss or gradient", it)
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * g * g
        mhat = m / (1.0 - b1**it)
        vhat = v / (1.0 - b2**it)
        w -= cfg.learning_rate * mhat / (np.sqrt(vhat) + cfg.adam_eps)
        ema = cfg.ema_decay * ema + (1.0 - cfg.ema_decay) * w
        if loss_log is not None:
            loss_log.append(loss)
        if progress is not None:
            progress(it, loss)
    out = net.with_weights(ema if cfg.iterations else net.weights)
    out.schedule_id = s.fingerprint
    return out


@dataclass
class ModelFile:
    net: ScoreNetwork
    schedule: NoiseSchedule
    domain: str | None = None
    train_seed: int | None = None
    standardizer: dict | None = None  # {"mean": [...], "scale": [...]} or None


def save_model(path, net: ScoreNetwork, s: NoiseSchedule, domain=None, train_seed=None,
               standardizer=None) -> None:
    if standardizer is not None and not isinstance(standardizer, dict):
        standardizer = standardizer.to_dict()
    doc = {
        "format": "ddib-model",
        "schema_version": SCHEMA_VERSION,
        "domain": domain,
        "input_dim": net.input_dim,
        "hidden_dims": list(net.hidden_dims),
        "time_embed_dim": net.time_embed_dim,
        "activation": net.activation,
        "schedule": s.params(),
        "schedule_fingerprint": s.fingerprint,
        "train_seed": train_seed,
        "standardizer": standardizer,
        "n_weights": net.n_weights,
        "weights": [float(w) for w in net.weights],
    }
    Path(path).write_text(json.dumps(doc, indent=1) + "\n")


def load_model(path) -> ModelFile:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: not a JSON model file ({exc.msg})", exc.lineno) from None
    if doc.get("format") != "ddib-model":
        raise FormatError(f"{path}: missing 'ddib-model' format tag")
    if doc.get("schema_version") != SCHEMA_VERSION:
        raise FormatError(f"{path}: unsupported schema version {doc.get('schema_version')}")
    s = schedule_from_params(doc["schedule"])
    if doc.get("schedule_fingerprint", s.fingerprint) != s.fingerprint:
        raise FormatError(f"{path}: schedule fingerprint does not match its parameters")
    if len(doc["weights"]) != doc["n_weights"]:
        raise FormatError(f"{path}: weight count {len(doc['weights'])} != n_weights {doc['n_weights']}")
    net = ScoreNetwork(doc["input_dim"], tuple(doc["hidden_dims"]), doc["time_embed_dim"],
                       np.array(doc["weights"], dtype=np.float64), doc.get("activation", "silu"),
                       schedule_id=s.fingerprint, model_id=doc.get("domain") or Path(path).stem)
    return ModelFile(net, s, doc.get("domain"), doc.get("train_seed"), doc.get("standardizer"))
