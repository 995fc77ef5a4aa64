"""Experiment configuration, the on-disk model cache and per-domain training.

The configuration is a flat INI file with fixed sections::

    [schedule]  T, beta_min, beta_max
    [network]   hidden_dims (comma separated), time_embed_dim
    [training]  batch_size, iterations, learning_rate, adam_beta1, adam_beta2,
                adam_eps, ema_decay
    [solve]     n_steps
    [data]      kinds (comma separated), n_points
    [seeds]     data, train
    [output]    dir

Missing keys take the defaults below; unknown sections or keys are errors.

Trained models are cached under ``$DDIB_CACHE_DIR`` (default
``~/.cache/ddib``), one JSON model file per key, where the key hashes the
training data bytes together with everything in the configuration that
influences training. Each domain gets its own data and training seeds,
derived from the base seeds and the domain name, so domains train
independently and in any order.
"""

from __future__ import annotations

import configparser
import hashlib
import io
import json
import os
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .datasets import KINDS, SHORT_NAMES, PointCloud, Standardizer, canonical_kind, generate, standardize
from .errors import CacheMissError, ParameterError
from .schedule import NoiseSchedule, make_linear_schedule
from .scorenet import ScoreNetwork, TrainConfig, init_network, load_model, save_model, train

CYCLE_PAIRS = (
    ("parallel_rings", "parallel_squares"),
    ("parallel_squares", "concentric_squares"),
    ("concentric_rings", "parallel_rings"),
    ("concentric_rings", "concentric_squares"),
    ("moons", "checkerboards"),
)

_SECTIONS = {
    "schedule": ("T", "beta_min", "beta_max"),
    "network": ("hidden_dims", "time_embed_dim"),
    "training": ("batch_size", "iterations", "learning_rate", "adam_beta1", "adam_beta2",
                 "adam_eps", "ema_decay"),
    "solve": ("n_steps",),
    "data": ("kinds", "n_points"),
    "seeds": ("data", "train"),
    "output": ("dir",),
}


@dataclass(frozen=True)
class ExperimentConfig:
    T: int = 1000
    beta_min: float = 1e-4
    beta_max: float = 0.02
    hidden_dims: tuple = (128, 128, 128, 128)
    time_embed_dim: int = 64
    batch_size: int = 256
    iterations: int = 20000
    learning_rate: float = 1e-3
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    ema_decay: float = 0.999
    n_steps: int = 500
    kinds: tuple = KINDS
    n_points: int = 4000
    data_seed: int = 0
    train_seed: int = 0
    output_dir: str = "out"

    def __post_init__(self):
        object.__setattr__(self, "hidden_dims", tuple(int(h) for h in self.hidden_dims))
        object.__setattr__(self, "kinds", tuple(canonical_kind(k) for k in self.kinds))
        if not self.hidden_dims or min(self.hidden_dims) < 1 or self.time_embed_dim < 2:
            raise ParameterError("network needs at least one hidden layer and an embedding of size >= 2")
        if self.n_steps < 1 or self.n_points < 2:
            raise ParameterError("n_steps must be >= 1 and n_points >= 2")
        self.schedule()
        self.train_config("moons")

    # --- derived objects -------------------------------------------------

    def schedule(self) -> NoiseSchedule:
        return make_linear_schedule(self.T, self.beta_min, self.beta_max)

    def train_config(self, domain: str) -> TrainConfig:
        return TrainConfig(self.batch_size, self.iterations, self.learning_rate, self.adam_beta1,
                           self.adam_beta2, self.adam_eps, derive_seed(self.train_seed, domain),
                           self.ema_decay)

    def domain_data(self, kind: str) -> PointCloud:
        kind = canonical_kind(kind)
        return generate(kind, self.n_points, derive_seed(self.data_seed, kind))

    # --- on-disk form ----------------------------------------------------

    def to_ini(self) -> str:
        d = asdict(self)
        cp = configparser.ConfigParser(interpolation=None)
        cp.optionxform = str
        for section, keys in _SECTIONS.items():
            cp[section] = {k: _fmt(d[_attr(section, k)]) for k in keys}
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()

    @classmethod
    def from_ini(cls, text: str, source="<config>") -> "ExperimentConfig":
        cp = configparser.ConfigParser(interpolation=None)
        cp.optionxform = str
        try:
            cp.read_string(text, source=str(source))
        except configparser.Error as exc:
            raise ParameterError(f"{source}: {exc}") from None
        values = {}
        for section in cp.sections():
            if section not in _SECTIONS:
                raise ParameterError(f"{source}: unknown section [{section}]")
            for key, raw in cp[section].items():
                if key not in _SECTIONS[section]:
                    raise ParameterError(f"{source}: unknown key '{key}' in [{section}]")
                values[_attr(section, key)] = raw
        return cls.from_strings(values, source)

    @classmethod
    def from_strings(cls, values: dict, source="<config>") -> "ExperimentConfig":
        """Build from attribute-name -> string pairs (config file or CLI overrides)."""
        types = {f.name: f.type for f in fields(cls)}
        kw = {}
        for name, raw in values.items():
            if name not in types:
                raise ParameterError(f"{source}: unknown setting '{name}'")
            try:
                kw[name] = _parse(types[name], raw)
            except ValueError as exc:
                raise ParameterError(f"{source}: bad value for {name}: {exc}") from None
        return cls(**kw)

    def override(self, **values) -> "ExperimentConfig":
        """Replace settings given as strings or typed values; ``None`` means keep."""
        values = {k: v for k, v in values.items() if v is not None}
        parsed = self.from_strings({k: v for k, v in values.items() if isinstance(v, str)})
        typed = {k: getattr(parsed, k) if isinstance(v, str) else v for k, v in values.items()}
        return replace(self, **typed)

    def training_key(self) -> dict:
        """Every setting that changes a trained model (data handled separately)."""
        d = asdict(self)
        keep = _SECTIONS["schedule"] + _SECTIONS["network"] + _SECTIONS["training"]
        return {k: d[k] for k in keep}


def _attr(section, key):
    if section == "seeds":
        return f"{key}_seed"
    if section == "output":
        return "output_dir"
    return key


def _fmt(v):
    if isinstance(v, tuple):
        return ",".join(str(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _parse(typ, raw):
    raw = str(raw).strip()
    if typ in ("int", int):
        return int(raw)
    if typ in ("float", float):
        return float(raw)
    if typ in ("tuple", tuple):
        parts = [p.strip() for p in raw.split(",") if p.strip()]
        return tuple(int(p) if p.lstrip("-").isdigit() else p for p in parts)
    return raw


def load_config(path=None, **overrides) -> ExperimentConfig:
    cfg = ExperimentConfig()
    if path is not None:
        cfg = ExperimentConfig.from_ini(Path(path).read_text(), source=path)
    return cfg.override(**overrides)


def derive_seed(base: int, name: str) -> int:
    """Independent 63-bit seed for one named stream."""
    h = hashlib.sha256(f"{int(base)}:{name}".encode()).digest()
    return int.from_bytes(h[:8], "little") >> 1


# --- model cache -----------------------------------------------------------

def cache_dir() -> Path:
    root = os.environ.get("DDIB_CACHE_DIR")
    return Path(root) if root else Path.home() / ".cache" / "ddib"


def cache_key(data: np.ndarray, settings: dict) -> str:
    h = hashlib.sha256()
    arr = np.ascontiguousarray(np.asarray(data, dtype=np.float64))
    h.update(repr(arr.shape).encode())
    h.update(arr.tobytes())
    h.update(json.dumps(settings, sort_keys=True).encode())
    return h.hexdigest()[:24]


@dataclass
class TrainedDomain:
    name: str
    net: ScoreNetwork
    schedule: NoiseSchedule
    standardizer: Standardizer | None
    data: PointCloud  # in the coordinates the network was trained in
    path: Path | None = field(default=None, repr=False)


def fit_or_load(name: str, data: PointCloud, cfg: ExperimentConfig, train_seed: int,
                standardize_data=True, allow_train=True, log=None) -> TrainedDomain:
    """Return the cached model for (data, cfg) or train and cache it.

    ``data`` is in raw coordinates; with ``standardize_data`` it is
    standardised first and the standardiser is stored with the model.
    """
    s = cfg.schedule()
    if standardize_data:
        train_data, st = standardize(data)
    else:
        train_data, st = data, None
    settings = dict(cfg.training_key(), train_seed=int(train_seed), standardize=bool(standardize_data))
    path = cache_dir() / f"{name}-{cache_key(data.points, settings)}.json"
    if path.exists():
        mf = load_model(path)
        if log:
            log(f"{name}: cached model {path}")
        return TrainedDomain(name, mf.net, mf.schedule, st, train_data, path)
    if not allow_train:
        raise CacheMissError(f"no cached model for {name} in {cache_dir()}; rerun with --train "
                             f"(or run 'ddib train') to fit it")
    net = init_network(data.dim, cfg.hidden_dims, cfg.time_embed_dim, seed=train_seed)
    tcfg = replace(cfg.train_config(name), seed=int(train_seed))
    if log:
        log(f"{name}: training {tcfg.iterations} iterations")
    net = train(net, s, train_data, tcfg)
    net.model_id = name
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(".tmp")
    save_model(tmp, net, s, domain=name, train_seed=int(train_seed), standardizer=st)
    tmp.replace(path)
    return TrainedDomain(name, net, s, st, train_data, path)


def train_domain(kind: str, cfg: ExperimentConfig, allow_train=True, log=None) -> TrainedDomain:
    kind = canonical_kind(kind)
    return fit_or_load(kind, cfg.domain_data(kind), cfg, derive_seed(cfg.train_seed, kind),
                       allow_train=allow_train, log=log)


@dataclass
class CycleRow:
    source: str
    target: str
    mean_l2: float

    @property
    def label(self) -> str:
        return f"{SHORT_NAMES[self.source]} <-> {SHORT_NAMES[self.target]}"


def cycle_table(cfg: ExperimentConfig, pairs=CYCLE_PAIRS, allow_train=True, log=None) -> list:
    """Round-trip mean L2 (standardised source coordinates) for each domain pair."""
    from .bridge import cycle_check

    if not pairs:
        raise ParameterError("cycle table needs at least one domain pair")
    models = {}
    rows = []
    for a, b in pairs:
        for k in (a, b):
            if k not in models:
                models[k] = train_domain(k, cfg, allow_train=allow_train, log=log)
        da, db = models[a], models[b]
        rep = cycle_check(da.net, db.net, da.schedule, da.data, cfg.n_steps)
        rows.append(CycleRow(a, b, rep.mean_roundtrip_l2))
        if log:
            log(f"{rows[-1].label}: {rows[-1].mean_l2:.4f}")
    return rows


def format_cycle_table(rows) -> tuple:
    """(csv text, human-readable text)."""
    csv_lines = ["source,target,mean_l2"] + [f"{r.source},{r.target},{r.mean_l2!r}" for r in rows]
    width = max(len(r.label) for r in rows)
    text = [f"{'pair':<{width}}  mean L2"] + [f"{r.label:<{width}}  {r.mean_l2:.4f}" for r in rows]
    return "\n".join(csv_lines) + "\n", "\n".join(text) + "\n"
