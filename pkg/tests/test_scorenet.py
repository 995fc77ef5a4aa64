import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ddib.datasets import PointCloud
from ddib.errors import FormatError, ParameterError, ShapeError, TrainingError
from ddib.experiment import ExperimentConfig, fit_or_load
from ddib.schedule import make_linear_schedule, perturb
from ddib.scorenet import (GaussianNoiseOracle, ScoreNetwork, TrainConfig, analytic_gaussian_noise,
                           denoising_loss_and_grad, init_network, load_model, loss_and_grad_at,
                           n_weights_for, predict_noise, save_model, time_embedding, train)


def small_net(seed=0, input_dim=2, hidden=(6,), embed=2):
    return init_network(input_dim, hidden, embed, seed=seed, zero_final=False)


def fd_gradient(net, s, x0, t, eps, h=1e-4):
    w = net.weights.copy()
    g = np.empty_like(w)
    for k in range(w.size):
        wp, wm = w.copy(), w.copy()
        wp[k] += h
        wm[k] -= h
        g[k] = (loss_and_grad_at(net, s, x0, t, eps, weights=wp)[0]
                - loss_and_grad_at(net, s, x0, t, eps, weights=wm)[0]) / (2 * h)
    return g


def test_architecture_weight_count():
    net = init_network()
    assert net.layer_shapes == [(66, 128), (128, 128), (128, 128), (128, 128), (128, 2)]
    assert net.n_weights == n_weights_for(2, (128,) * 4, 64) == 66 * 128 + 128 + 3 * (128 * 128 + 128) + 128 * 2 + 2
    with pytest.raises(ShapeError):
        ScoreNetwork(2, (4,), 2, np.zeros(5))


def test_time_embedding_endpoints():
    e = time_embedding([0.0, 1.0], 8)
    assert np.array_equal(e[0], [0, 0, 0, 0, 1, 1, 1, 1])
    assert e[1, 3] == pytest.approx(math.sin(1000.0))
    with pytest.raises(ParameterError):
        time_embedding(0.5, 7)


def test_zero_final_layer_predicts_zero(sched, rng):
    net = init_network(seed=3)
    out = predict_noise(net, sched, rng.standard_normal((50, 2)), 417)
    assert np.array_equal(out, np.zeros((50, 2)))


def test_predict_noise_is_pure(sched, rng):
    net = small_net(1)
    x = rng.standard_normal((7, 2))
    a = predict_noise(net, sched, x, 10)
    b = predict_noise(net, sched, x, 10)
    assert np.array_equal(a, b)
    # scalar step and per-row steps agree
    assert np.allclose(a, predict_noise(net, sched, x, np.full(7, 10)), rtol=0, atol=1e-14)
    assert np.allclose(predict_noise(net, sched, x[3], 10), a[3], rtol=0, atol=1e-14)


def test_predict_noise_errors(sched):
    net = small_net()
    with pytest.raises(ShapeError):
        predict_noise(net, sched, np.zeros((3, 3)), 0)
    with pytest.raises(ParameterError):
        predict_noise(net, sched, np.zeros((3, 2)), 1000)


def test_analytic_noise_examples(sched):
    s = make_linear_schedule(2, 0.5, 0.5)
    mu = np.array([0.7, -1.2])
    ab = sched.alpha_bar[300]
    assert np.allclose(analytic_gaussian_noise(mu, 2.5, sched, math.sqrt(ab) * mu, 300), 0, atol=1e-15)
    x = np.array([0.4, 2.0])
    assert np.allclose(analytic_gaussian_noise(mu, 1.0, sched, x, 300),
                       math.sqrt(1 - ab) * (x - math.sqrt(ab) * mu), rtol=1e-13)
    got = analytic_gaussian_noise([0.0, 0.0], 4.0, s, [1.0, 0.0], 0)
    assert np.allclose(got, [math.sqrt(0.5) / 2.5, 0.0], rtol=1e-14)
    assert got[0] == pytest.approx(0.28284271247461906)
    with pytest.raises(ParameterError):
        analytic_gaussian_noise(mu, 0.0, sched, x, 3)


def test_oracle_objective_matches_closed_form_minimum(sched):
    # for N(0, v I) data the optimal per-coordinate residual variance is
    # 1 - (1 - ab) / (ab v + 1 - ab); average over uniform t
    rng = np.random.default_rng(4)
    v, n = 2.0, 400000
    oracle = GaussianNoiseOracle([0.0, 0.0], v, sched)
    x0 = math.sqrt(v) * rng.standard_normal((n, 2))
    t = rng.integers(0, sched.T, n)
    eps = rng.standard_normal((n, 2))
    loss = np.mean((oracle(perturb(sched, x0, t, eps), t) - eps) ** 2)
    ab = sched.alpha_bar
    expected = np.mean(1 - (1 - ab) / (ab * v + 1 - ab))
    assert loss == pytest.approx(expected, abs=4 * math.sqrt(2 / (2 * n)))


def test_gradient_matches_finite_differences_toy(sched, rng):
    net = init_network(1, (2,), 2, seed=5, zero_final=False)
    assert net.n_weights == 11
    x0 = rng.standard_normal((9, 1))
    t = rng.integers(0, sched.T, 9)
    eps = rng.standard_normal((9, 1))
    _, g = loss_and_grad_at(net, sched, x0, t, eps)
    fd = fd_gradient(net, sched, x0, t, eps)
    assert np.linalg.norm(g - fd) <= 1e-4 * np.linalg.norm(fd)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), width=st.integers(1, 6), depth=st.integers(1, 2),
       dim=st.integers(1, 3), n=st.integers(1, 12))
def test_gradient_matches_finite_differences_random(seed, width, depth, dim, n):
    s = make_linear_schedule(50, 1e-3, 0.2)
    net = init_network(dim, (width,) * depth, 2, seed=seed % 1000, zero_final=False)
    if net.n_weights > 64:
        return
    r = np.random.default_rng(seed)
    x0 = r.standard_normal((n, dim))
    t = r.integers(0, s.T, n)
    eps = r.standard_normal((n, dim))
    _, g = loss_and_grad_at(net, s, x0, t, eps)
    fd = fd_gradient(net, s, x0, t, eps)
    assert np.linalg.norm(g - fd) <= 1e-4 * max(np.linalg.norm(fd), 1e-8)


def test_single_point_loss_reproducible(sched):
    net = small_net(2)
    x0 = np.array([[0.3, -1.1]])
    loss1, g1 = denoising_loss_and_grad(net, sched, x0, np.random.default_rng(99))
    loss2, g2 = denoising_loss_and_grad(net, sched, x0, np.random.default_rng(99))
    assert loss1 == loss2 and np.array_equal(g1, g2)
    r = np.random.default_rng(99)
    t = r.integers(0, sched.T, size=1)
    eps = r.standard_normal((1, 2))
    pred = predict_noise(net, sched, perturb(sched, x0, t, eps), t)
    assert loss1 == pytest.approx(np.sum((pred - eps) ** 2) / 2, rel=1e-13)


def test_zero_net_loss_is_noise_energy(sched):
    net = init_network(2, (4,), 4, seed=0)
    net = net.with_weights(np.zeros(net.n_weights))
    r = np.random.default_rng(8)
    x0 = r.standard_normal((64, 2))
    loss, g = denoising_loss_and_grad(net, sched, x0, np.random.default_rng(1))
    r = np.random.default_rng(1)
    r.integers(0, sched.T, size=64)
    eps = r.standard_normal((64, 2))
    assert loss == pytest.approx(np.mean(np.sum(eps**2, axis=1) / 2), rel=1e-13)


def test_empty_batch_rejected(sched):
    with pytest.raises(ParameterError):
        denoising_loss_and_grad(small_net(), sched, np.zeros((0, 2)), np.random.default_rng(0))


@pytest.mark.parametrize("kw", [dict(batch_size=0), dict(iterations=-1), dict(learning_rate=0.0),
                                dict(ema_decay=1.0), dict(adam_beta1=1.0), dict(adam_eps=0.0),
                                dict(seed=-1)])
def test_train_config_validation(kw):
    with pytest.raises(ParameterError):
        TrainConfig(**kw)


def test_train_zero_iterations_returns_initial(sched, rng):
    net = small_net()
    out = train(net, sched, rng.standard_normal((20, 2)), TrainConfig(iterations=0))
    assert np.array_equal(out.weights, net.weights)
    assert out.schedule_id == sched.fingerprint


def test_train_deterministic_and_isolated(sched):
    data = np.random.default_rng(0).standard_normal((100, 2))
    snapshot = data.copy()
    net = init_network(2, (16, 16), 8, seed=1)
    w0 = net.weights.copy()
    cfg = TrainConfig(batch_size=32, iterations=60, seed=11)
    a = train(net, sched, data, cfg)
    b = train(net, sched, data, cfg)
    assert np.array_equal(a.weights, b.weights)
    assert np.array_equal(data, snapshot) and np.array_equal(net.weights, w0)
    c = train(net, sched, data, TrainConfig(batch_size=32, iterations=60, seed=12))
    assert not np.array_equal(a.weights, c.weights)


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_train_divergence_raises(sched):
    data = np.random.default_rng(0).standard_normal((50, 2)) * 1e200
    with pytest.raises(TrainingError) as info:
        train(init_network(2, (8,), 4, seed=0, zero_final=False), sched, data,
              TrainConfig(batch_size=8, iterations=5))
    assert info.value.iteration >= 1


def test_loss_moving_average_non_increasing(sched):
    data = np.random.default_rng(3).standard_normal((4000, 2))
    log = []
    # a slow learning rate keeps all ten windows on the descent instead of a noisy plateau
    train(init_network(2, (64, 64), 16, seed=0), sched, data,
          TrainConfig(batch_size=256, iterations=5000, seed=0, learning_rate=1e-4), loss_log=log)
    windows = np.array(log).reshape(10, 500).mean(axis=1)
    assert np.all(np.diff(windows) <= 0), windows


@pytest.fixture(scope="module")
def gaussian_net():
    cfg = ExperimentConfig(iterations=5000)
    data = np.random.default_rng(2024).standard_normal((4000, 2))
    return fit_or_load("gaussian", PointCloud.from_points(data), cfg, 7, standardize_data=False).net


def test_trained_net_matches_oracle_at_probe_point(gaussian_net, sched):
    x, t = np.array([0.3, -0.7]), sched.T // 2
    pred = predict_noise(gaussian_net, sched, x, t)
    ref = analytic_gaussian_noise([0.0, 0.0], 1.0, sched, x, t)
    assert math.sqrt(np.mean((pred - ref) ** 2)) <= 0.1


def test_model_file_round_trip(tmp_path, sched):
    net = small_net(4)
    path = tmp_path / "m.json"
    save_model(path, net, sched, domain="moons", train_seed=5,
               standardizer={"mean": [0.0, 1.0], "scale": [2.0, 3.0]})
    doc = json.loads(path.read_text())
    assert doc["schema_version"] == 1 and list(doc)[-1] == "weights"
    mf = load_model(path)
    assert np.array_equal(mf.net.weights, net.weights)
    assert mf.schedule == sched and mf.net.schedule_id == sched.fingerprint
    assert mf.domain == "moons" and mf.train_seed == 5 and mf.standardizer["scale"] == [2.0, 3.0]
    x = np.random.default_rng(0).standard_normal((5, 2))
    assert np.array_equal(predict_noise(mf.net, sched, x, 9), predict_noise(net, sched, x, 9))


@pytest.mark.parametrize("mutate", [
    lambda d: d.update(format="other"),
    lambda d: d.update(schema_version=99),
    lambda d: d.update(n_weights=d["n_weights"] + 1),
    lambda d: d.update(schedule_fingerprint="0" * 16),
])
def test_model_file_rejects_bad_documents(tmp_path, sched, mutate):
    path = tmp_path / "m.json"
    save_model(path, small_net(), sched)
    doc = json.loads(path.read_text())
    mutate(doc)
    path.write_text(json.dumps(doc))
    with pytest.raises(FormatError):
        load_model(path)


def test_model_file_rejects_non_json(tmp_path):
    path = tmp_path / "m.json"
    path.write_text("{not json")
    with pytest.raises(FormatError):
        load_model(path)
