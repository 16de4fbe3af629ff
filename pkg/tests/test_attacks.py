import numpy as np
import pytest

from conftest import random_net
from stackgame import losses as L
from stackgame.attacks import (AttackBundle, BindingError, DimensionTooLargeError,
                               InvalidRadiusError, PgdConfig, build_bundle, certify_ball,
                               grid_oracle, lattice, lattice_axis, pgd_attack, pgd_batch)
from stackgame.data import Dataset
from stackgame.network import Network, forward, margin_lipschitz


def linear_net(W, b):
    W = np.asarray(W, dtype=float)
    return Network([W.shape[1], W.shape[0]], [W], [np.asarray(b, dtype=float)], 10.0)


def test_zero_radius():
    net = random_net([2, 4, 2])
    np.testing.assert_array_equal(pgd_attack(net, [0.3, 0.4], 1, 0.0, "cw"), 0.0)
    d, v = grid_oracle(net, np.array([0.3, 0.4]), 1, 0.0, "ce", 0.01)
    np.testing.assert_array_equal(d, 0.0)
    assert v == pytest.approx(L.eval_loss("ce", forward(net, [0.3, 0.4]), 1))


def test_negative_radius():
    net = random_net([2, 4, 2])
    with pytest.raises(InvalidRadiusError):
        pgd_attack(net, [0.3, 0.4], 1, -0.1, "cw")
    with pytest.raises(InvalidRadiusError):
        grid_oracle(net, [0.3, 0.4], 1, -0.1, "cw", 0.01)


def test_linear_classifier_closed_form():
    rng = np.random.default_rng(0)
    for _ in range(20):
        W, b = rng.normal(size=(3, 4)), rng.normal(size=3)
        x, y, eps = rng.uniform(size=4), int(rng.integers(1, 4)), 0.1
        net = linear_net(W, b)
        # best competitor l: move each coordinate by eps * sign(w_l - w_y)
        z = W @ x + b
        best = max(z[l] - z[y - 1] + eps * np.abs(W[l] - W[y - 1]).sum()
                   for l in range(3) if l != y - 1)
        delta = pgd_attack(net, x, y, eps, "cw", PgdConfig(steps=20))
        assert L.eval_loss("cw", forward(net, x + delta), y) == pytest.approx(best, abs=1e-9)


def test_pgd_never_worse_than_clean_and_in_ball():
    rng = np.random.default_rng(1)
    for seed in range(10):
        net = random_net([2, 8, 3], seed)
        X = rng.uniform(size=(15, 2))
        Y0 = rng.integers(0, 3, size=15)
        for kind in ("mse", "ce", "cw"):
            deltas, vals = pgd_batch(net, X, Y0, 0.07, kind)
            assert np.abs(deltas).max() <= 0.07
            clean = L.eval_batch(kind, net.logits(X), Y0)
            assert np.all(vals >= clean)
            np.testing.assert_allclose(vals, L.eval_batch(kind, net.logits(X + deltas), Y0))


def test_adv01_uses_cw_surrogate():
    net = random_net([2, 6, 2], 3)
    X = np.array([[0.4, 0.6]])
    d1, _ = pgd_batch(net, X, np.array([0]), 0.1, "adv01")
    d2, _ = pgd_batch(net, X, np.array([0]), 0.1, "cw")
    np.testing.assert_array_equal(d1, d2)


def test_restarts_are_monotone_and_deterministic():
    rng = np.random.default_rng(2)
    net = random_net([2, 10, 10, 3], 5, scale=2.0)
    X = rng.uniform(size=(30, 2))
    Y0 = rng.integers(0, 3, size=30)
    prev = None
    for r in range(0, 6):
        cfg = PgdConfig(steps=15, restarts=r, seed=4)
        _, vals = pgd_batch(net, X, Y0, 0.1, "cw", cfg)
        if prev is not None:
            assert np.all(vals >= prev)
        prev = vals
    a, _ = pgd_batch(net, X, Y0, 0.1, "cw", PgdConfig(seed=9))
    b, _ = pgd_batch(net, X, Y0, 0.1, "cw", PgdConfig(seed=9))
    assert a.tobytes() == b.tobytes()


def test_per_sample_streams_do_not_depend_on_batching():
    rng = np.random.default_rng(3)
    net = random_net([2, 8, 2], 6)
    X = rng.uniform(size=(6, 2))
    Y0 = rng.integers(0, 2, size=6)
    whole, _ = pgd_batch(net, X, Y0, 0.1, "cw")
    for i in range(6):
        part, _ = pgd_batch(net, X[i:i + 1], Y0[i:i + 1], 0.1, "cw", indices=[i])
        np.testing.assert_array_equal(part[0], whole[i])


def test_pgd_config_validation():
    with pytest.raises(ValueError):
        PgdConfig(steps=0)
    with pytest.raises(ValueError):
        PgdConfig(step_size=0.0)
    with pytest.raises(ValueError):
        PgdConfig(restarts=0, include_zero_start=False)
    assert PgdConfig(steps=40).alpha(0.1) == pytest.approx(2.5 * 0.1 / 40)


def test_lattice_axis():
    ax = lattice_axis(0.1, 0.03)
    assert ax[0] == -0.1 and ax[-1] == 0.1
    assert np.all(np.diff(ax) <= 0.03 + 1e-15)
    assert 0.0 in ax
    np.testing.assert_allclose(lattice_axis(0.1, 0.025), np.linspace(-0.1, 0.1, 9), atol=1e-15)
    # lattices at multiples of the step are nested
    small, big = set(lattice_axis(0.05, 0.01).round(12)), set(lattice_axis(0.1, 0.01).round(12))
    assert small <= big
    pts = lattice(0.1, 0.05, 2)
    assert pts.shape == (25, 2)
    assert tuple(pts[0]) == (-0.1, -0.1) and tuple(pts[1]) == (-0.1, -0.05)


def test_grid_oracle_dimension_limit():
    net = random_net([4, 3, 2])
    with pytest.raises(DimensionTooLargeError):
        grid_oracle(net, np.full(4, 0.5), 1, 0.1, "cw", 0.05)


def test_grid_oracle_lexicographic_tie_break():
    # constant network: every lattice point ties, the first one wins
    net = linear_net(np.zeros((2, 2)), [0.0, 1.0])
    d, v = grid_oracle(net, [0.5, 0.5], 1, 0.1, "cw", 0.05)
    np.testing.assert_array_equal(d, [-0.1, -0.1])
    assert v == 1.0


def test_grid_oracle_converges_on_one_dimensional_net():
    rng = np.random.default_rng(4)
    for seed in range(10):
        net = random_net([1, 12, 2], seed, scale=3.0)
        x, y = rng.uniform(size=1), int(rng.integers(1, 3))
        _, coarse = grid_oracle(net, x, y, 0.1, "cw", 1e-3)
        _, fine = grid_oracle(net, x, y, 0.1, "cw", 1e-4)
        assert fine >= coarse - 1e-12
        assert fine - coarse < 1e-2


def test_grid_beats_pgd_on_shared_points():
    rng = np.random.default_rng(5)
    for seed in range(10):
        net = random_net([2, 8, 2], seed, scale=2.0)
        x, y = rng.uniform(size=2), int(rng.integers(1, 3))
        _, g = grid_oracle(net, x, y, 0.1, "cw", 2e-3)
        d = pgd_attack(net, x, y, 0.1, "cw")
        p = L.eval_loss("cw", forward(net, x + d), y)
        # PGD can only win between lattice points, by at most Lip * step / 2
        assert g >= p - margin_lipschitz(net, y) * 2e-3 / 2


def test_certify_ball_agrees_with_fine_grid():
    rng = np.random.default_rng(6)
    for seed in range(30):
        net = random_net([1, 8, 2], seed, scale=2.0)
        x, y = rng.uniform(size=1), int(rng.integers(1, 3))
        v = certify_ball(net, x, y, 0.08, 0.01)
        _, worst = grid_oracle(net, x, y, 0.08, "cw", 1e-5)
        assert v.decided
        assert v.robust == (worst < 0)
        if not v.robust:
            assert np.abs(v.witness).max() <= 0.08
            assert L.eval_loss("cw", forward(net, x + v.witness), y) >= 0


def test_bundle_invariants(small_data):
    net = random_net([2, 6, 2], 1)
    b = build_bundle(net, small_data, 0.05, "ce")
    assert b.size == small_data.size and np.abs(b.deltas).max() <= 0.05
    b.check_binding(small_data)
    other = Dataset(small_data.inputs[:5], small_data.labels[:5])
    with pytest.raises(BindingError):
        b.perturbed(other)
    with pytest.raises(ValueError):
        AttackBundle(0.01, np.full((2, 2), 0.02), "x")
    exact = build_bundle(net, small_data, 0.05, "cw", exact=True, grid_step=0.01)
    assert np.abs(exact.deltas).max() <= 0.05
