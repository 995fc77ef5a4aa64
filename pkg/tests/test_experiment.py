import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ddib.datasets import KINDS
from ddib.errors import CacheMissError, ParameterError
from ddib.experiment import (CYCLE_PAIRS, CycleRow, ExperimentConfig, cycle_table, derive_seed,
                             fit_or_load, format_cycle_table, load_config, train_domain)

TINY = dict(hidden_dims=(8, 8), time_embed_dim=4, iterations=30, batch_size=16, n_points=60,
            n_steps=10, T=100)


@pytest.fixture
def cache(tmp_path, monkeypatch):
    monkeypatch.setenv("DDIB_CACHE_DIR", str(tmp_path / "cache"))
    return tmp_path / "cache"


def test_defaults():
    cfg = ExperimentConfig()
    assert (cfg.T, cfg.beta_min, cfg.beta_max) == (1000, 1e-4, 0.02)
    assert cfg.hidden_dims == (128, 128, 128, 128) and cfg.time_embed_dim == 64
    assert cfg.iterations == 20000 and cfg.n_steps == 500 and cfg.n_points == 4000
    assert cfg.kinds == KINDS and len(CYCLE_PAIRS) == 5


@settings(max_examples=40, deadline=None)
@given(T=st.integers(2, 5000), lo=st.floats(1e-6, 0.01), hi=st.floats(0.01, 0.5),
       dims=st.lists(st.integers(1, 300), min_size=1, max_size=5), lr=st.floats(1e-6, 1.0),
       ema=st.floats(0.0, 0.9999), seed=st.integers(0, 2**63 - 1),
       kinds=st.lists(st.sampled_from(KINDS), min_size=1, max_size=6, unique=True))
def test_config_ini_round_trip_is_lossless(T, lo, hi, dims, lr, ema, seed, kinds):
    cfg = ExperimentConfig(T=T, beta_min=lo, beta_max=hi, hidden_dims=tuple(dims), learning_rate=lr,
                           ema_decay=ema, train_seed=seed, kinds=tuple(kinds))
    text = cfg.to_ini()
    back = ExperimentConfig.from_ini(text)
    assert back == cfg and back.to_ini() == text


@pytest.mark.parametrize("text", ["[schedule]\nT = 10\ncolour = red\n", "[extras]\nx = 1\n",
                                  "[training]\niterations = many\n", "[schedule]\nT = 1\n",
                                  "no section header\n"])
def test_config_rejects_bad_files(text):
    with pytest.raises(ParameterError):
        ExperimentConfig.from_ini(text)


def test_partial_config_and_overrides(tmp_path):
    path = tmp_path / "c.ini"
    path.write_text("[training]\niterations = 7\n[data]\nkinds = moons, cb\n")
    cfg = load_config(path, n_steps="12", iterations=None)
    assert cfg.iterations == 7 and cfg.n_steps == 12 and cfg.kinds == ("moons", "checkerboards")
    assert cfg.T == 1000


def test_derived_seeds_are_independent_and_stable():
    seeds = {derive_seed(0, k) for k in KINDS}
    assert len(seeds) == len(KINDS)
    assert derive_seed(0, "moons") == derive_seed(0, "moons") != derive_seed(1, "moons")
    assert all(0 <= s < 2**63 for s in seeds)


def test_model_cache(cache):
    cfg = ExperimentConfig(**TINY)
    with pytest.raises(CacheMissError):
        train_domain("moons", cfg, allow_train=False)
    first = train_domain("moons", cfg)
    assert first.path.exists() and first.path.parent == cache
    again = train_domain("moons", cfg, allow_train=False)
    assert np.array_equal(again.net.weights, first.net.weights)
    assert np.allclose(again.standardizer.mean, first.standardizer.mean)
    other = train_domain("moons", ExperimentConfig(**dict(TINY, iterations=31)))
    assert other.path != first.path


def test_cache_ignores_unrelated_settings(cache):
    a = train_domain("moons", ExperimentConfig(**TINY))
    b = train_domain("moons", ExperimentConfig(**dict(TINY, n_steps=11, output_dir="elsewhere")))
    assert a.path == b.path


def test_cycle_table_small(cache):
    cfg = ExperimentConfig(**TINY)
    rows = cycle_table(cfg, pairs=[("moons", "checkerboards")])
    assert len(rows) == 1 and rows[0].label == "M <-> CB" and rows[0].mean_l2 >= 0
    assert cycle_table(cfg, pairs=[("moons", "checkerboards")])[0].mean_l2 == rows[0].mean_l2
    with pytest.raises(ParameterError):
        cycle_table(cfg, pairs=[])


def test_format_cycle_table():
    csv_text, text = format_cycle_table([CycleRow("moons", "checkerboards", 0.0122)])
    assert csv_text == "source,target,mean_l2\nmoons,checkerboards,0.0122\n"
    assert "M <-> CB" in text and "0.0122" in text
