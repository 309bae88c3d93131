"""Pinball loss contracts and marginal quantile training on known generators."""

import numpy as np
import pytest

from qcforecast.errors import ShapeError
from qcforecast.numerics import RngState, Tape, normal_quantile_array, reduce_mean, value_of
from qcforecast.quantile_net import (
    Mlp,
    QuantileNet,
    TrainConfig,
    forward_quantile,
    inverse_quantile,
    pinball,
    quantile_loss,
    train_marginal,
)


def ql_vec(u, y, q):
    d = np.asarray(y) - np.asarray(q)
    return np.mean(u * np.maximum(d, 0) + (1 - u) * np.maximum(-d, 0))


def linear_gaussian_pairs(n, seed):
    rng = np.random.default_rng(seed)
    x = rng.uniform(-3, 3, n)
    y = x + rng.standard_normal(n)
    return x.reshape(-1, 1), y


@pytest.fixture(scope="module")
def trained():
    ctx, y = linear_gaussian_pairs(4000, 42)
    net = QuantileNet(c_dim=1, seed=3)
    cfg = TrainConfig(learning_rate=0.02, epochs=150, batch_size=128, seed=5)
    history = train_marginal(net, ctx, y, cfg)
    return net, history


# ---------------------------------------------------------------------------
# pinball loss


def test_quantile_loss_branches():
    assert quantile_loss(0.5, 2.0, 1.0) == pytest.approx(0.5)
    assert quantile_loss(0.9, 0.0, 10.0) == pytest.approx(1.0)
    assert quantile_loss(0.1, 5.0, 5.0) == 0.0


def test_quantile_loss_domain():
    for bad in (0.0, 1.0, -0.5, 2.0):
        with pytest.raises(ValueError):
            quantile_loss(bad, 1.0, 1.0)


def test_quantile_loss_positive_off_kink_and_convex():
    rng = np.random.default_rng(11)
    for _ in range(1000):
        u = rng.uniform(0.01, 0.99)
        y = rng.normal()
        a, b = rng.normal(size=2) * 3
        if a != y:
            assert quantile_loss(u, y, a) > 0.0
        mid = quantile_loss(u, y, 0.5 * (a + b))
        assert mid <= 0.5 * (quantile_loss(u, y, a) + quantile_loss(u, y, b)) + 1e-12


def test_expected_ql_minimizer_is_empirical_quantile():
    rng = np.random.default_rng(7)
    samples = rng.gamma(2.0, 1.5, 10_000)
    u = 0.7
    grid = np.linspace(samples.min(), samples.max(), 2001)
    losses = [ql_vec(u, samples, g) for g in grid]
    best = grid[int(np.argmin(losses))]
    want = np.quantile(samples, u)
    assert abs(best - want) <= (grid[1] - grid[0]) + 1e-12


# ---------------------------------------------------------------------------
# forward / inverse nets


def test_zero_weight_forward_outputs_bias():
    net = QuantileNet(c_dim=2, seed=0)
    for w in net.forward_net.weights:
        w[:] = 0.0
    net.forward_skip *= 0.0
    net.forward_net.biases[-1][:] = 0.37
    assert forward_quantile(net, 1.3, [0.2, -0.4]) == pytest.approx(0.37)
    assert forward_quantile(net, -2.0, [5.0, 5.0]) == pytest.approx(0.37)


def test_zero_weight_inverse_outputs_bias():
    net = QuantileNet(c_dim=1, seed=0)
    for w in net.inverse_net.weights:
        w[:] = 0.0
    net.inverse_skip *= 0.0
    net.inverse_net.biases[-1][:] = -0.11
    assert inverse_quantile(net, 3.0, [0.5]) == pytest.approx(-0.11)


def test_context_width_checked():
    net = QuantileNet(c_dim=3, seed=0)
    with pytest.raises(ShapeError):
        forward_quantile(net, 0.0, [1.0, 2.0])
    with pytest.raises(ShapeError):
        inverse_quantile(net, 0.0, [1.0, 2.0, 3.0, 4.0])


def test_trained_median_and_tail(trained):
    net, _ = trained
    # generator y = x + N(0,1): conditional median is x, P90 is x + 1.2816
    assert forward_quantile(net, 0.0, [2.0]) == pytest.approx(2.0, abs=0.1)
    assert forward_quantile(net, 1.281552, [0.0]) == pytest.approx(1.281552, abs=0.15)


def test_trained_inverse_round_trip(trained):
    net, _ = trained
    rng = np.random.default_rng(9)
    x = rng.uniform(-3, 3, 2000)
    u = rng.uniform(1e-4, 1 - 1e-4, 2000)
    z = normal_quantile_array(u)
    y_hat = value_of(net.predict_values(z, x.reshape(-1, 1)))
    z_hat = value_of(net.predict_scores(y_hat, x.reshape(-1, 1)))
    rms = float(np.sqrt(np.mean((z_hat - z) ** 2)))
    assert rms < 0.05


def test_trained_inverse_at_conditional_median(trained):
    net, _ = trained
    # true conditional median of the generator at x is x itself
    for x in (-2.0, 0.0, 1.5):
        assert inverse_quantile(net, x, [x]) == pytest.approx(0.0, abs=0.1)


# ---------------------------------------------------------------------------
# training behavior


def test_constant_targets_collapse():
    rng = np.random.default_rng(3)
    ctx = rng.normal(size=(400, 2))
    y = np.full(400, 3.0)
    net = QuantileNet(c_dim=2, seed=1)
    cfg = TrainConfig(learning_rate=0.02, epochs=30, batch_size=64, seed=2)
    train_marginal(net, ctx, y, cfg)
    held = rng.normal(size=(200, 2))
    for z in (-1.5, 0.0, 1.5):
        pred = value_of(net.predict_values(np.full(200, z), held))
        assert np.max(np.abs(pred - 3.0)) < 0.02


def test_heldout_ql_within_5pct_of_oracle(trained):
    net, _ = trained
    ctx, y = linear_gaussian_pairs(3000, 99)
    total_model, total_oracle = 0.0, 0.0
    for u in (0.1, 0.3, 0.5, 0.7, 0.9, 0.95):
        z = normal_quantile_array(np.array([u]))[0]
        pred = value_of(net.predict_values(np.full(len(y), z), ctx))
        oracle = ctx[:, 0] + z  # closed-form conditional quantile
        total_model += ql_vec(u, y, pred)
        total_oracle += ql_vec(u, y, oracle)
    assert total_model <= 1.05 * total_oracle


def test_calibration_on_heldout(trained):
    net, _ = trained
    ctx, y = linear_gaussian_pairs(3000, 100)
    for u in (0.1, 0.3, 0.5, 0.7, 0.9, 0.95):
        z = normal_quantile_array(np.array([u]))[0]
        pred = value_of(net.predict_values(np.full(len(y), z), ctx))
        coverage = np.mean(y <= pred)
        assert abs(coverage - u) <= 0.03


def test_training_is_deterministic():
    ctx, y = linear_gaussian_pairs(300, 5)
    cfg = TrainConfig(learning_rate=0.02, epochs=5, batch_size=64, seed=17)
    h1 = train_marginal(QuantileNet(c_dim=1, seed=4), ctx, y, cfg)
    h2 = train_marginal(QuantileNet(c_dim=1, seed=4), ctx, y, cfg)
    assert h1 == h2


def test_empty_dataset_rejected():
    net = QuantileNet(c_dim=1, seed=0)
    with pytest.raises(ValueError):
        train_marginal(net, np.zeros((0, 1)), np.zeros(0), TrainConfig())


def test_objective_gradient_matches_finite_differences():
    # one minibatch of the joint objective, differentiated w.r.t. the forward
    # net's first weight matrix; residuals sit far from pinball kinks
    rng = np.random.default_rng(21)
    net = QuantileNet(c_dim=1, hidden=(8, 8), seed=6)
    ctx = rng.uniform(-1, 1, (16, 1))
    y = 5.0 + ctx[:, 0]
    u = rng.uniform(0.2, 0.8, 16)
    z = normal_quantile_array(u)

    from qcforecast.numerics import grad_check

    def objective(w0):
        params = net.forward_parameters()
        params[0] = w0
        pred = net.predict_values(z, ctx, params=params)
        return reduce_mean(pinball(u, y, pred))

    shaped = net.forward_net.weights[0]

    def f(t):
        from qcforecast.numerics import reshape
        return objective(reshape(t, shaped.shape))

    assert grad_check(f, shaped.ravel(), eps=1e-6) < 1e-4
