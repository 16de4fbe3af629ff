import math

import numpy as np
import pytest

from stackgame.attacks import BindingError
from stackgame.data import Dataset, SyntheticSpec, generate
from stackgame.games import solve_g1
from stackgame.metrics import clean_accuracy, clean_loss
from stackgame.network import Network
from stackgame.training import Arch, TrainConfig
from stackgame.tradeoff import (TradeoffConfig, budget_box, check_tradeoff, constrained_retrain,
                                nu_ball_probe, solve_gt)

ARCH = Arch((2, 8, 2))
CFG = TrainConfig(epochs=40)


def test_config_validation():
    with pytest.raises(ValueError):
        TradeoffConfig(lam=-1)
    with pytest.raises(ValueError):
        TradeoffConfig(nu=0)
    assert TradeoffConfig().seeds == (0, 1, 2, 3, 4)


def test_zero_lambda_reproduces_g1(small_data):
    a = solve_gt(small_data, ARCH, 0.05, "ce", 0.0, CFG)
    b = solve_g1(small_data, ARCH, 0.05, "ce", CFG)
    assert a.trace == b.trace
    assert a.classifier_strategy.flat_params().tobytes() == b.classifier_strategy.flat_params().tobytes()
    with pytest.raises(ValueError):
        solve_gt(small_data, ARCH, 0.05, "ce", -0.5, CFG)


def test_huge_lambda_approaches_clean_training(small_data):
    t = solve_gt(small_data, ARCH, 0.05, "ce", 1e6, CFG)
    clean = solve_g1(small_data, ARCH, 0.0, "ce", CFG)
    a = clean_loss(t.classifier_strategy, small_data, "ce")
    b = clean_loss(clean.classifier_strategy, small_data, "ce")
    assert abs(a - b) <= 0.01 * b


def test_zero_radius_scales_the_clean_objective(small_data):
    t = solve_gt(small_data, ARCH, 0.0, "ce", 1.0, CFG)
    clean = solve_g1(small_data, ARCH, 0.0, "ce", CFG)
    # (1 + lam) * clean loss; Adam steps are invariant to that scaling up to its epsilon
    np.testing.assert_allclose(t.classifier_strategy.flat_params(),
                               clean.classifier_strategy.flat_params(), atol=1e-6)


def test_check_tradeoff_modes(small_data):
    r0 = solve_gt(small_data, ARCH, 0.05, "ce", 0.0, CFG)
    rep = check_tradeoff(r0, r0, small_data, 0.05, "ce")
    assert rep.ok and rep.adv_payoff_s == rep.adv_payoff_t
    r1 = solve_gt(small_data, ARCH, 0.05, "ce", 0.0, TrainConfig(epochs=40, seed=1))
    diag = check_tradeoff(r0, r1, small_data, 0.05, "ce")
    assert diag.ok is None and diag.robust_ok is None
    forced = check_tradeoff(r0, r1, small_data, 0.05, "ce", diagnostic=False, tau=1e9)
    assert forced.ok
    with pytest.raises(BindingError):
        check_tradeoff(r0, r1, small_data, 0.1, "ce")


def test_budget_box_and_retrain(small_data):
    net = solve_g1(small_data, ARCH, 0.05, "ce", CFG).classifier_strategy
    assert constrained_retrain(net, small_data, 0.0).flat_params().tolist() == \
        net.flat_params().tolist()
    lo, hi = budget_box(net, 3.0)
    out = constrained_retrain(net, small_data, 3.0, TrainConfig(epochs=30, lr=0.003))
    theta = out.flat_params()
    assert np.all(theta >= lo - 1e-15) and np.all(theta <= hi + 1e-15)
    assert clean_accuracy(out, small_data) >= clean_accuracy(net, small_data)
    zero_params = net.flat_params() == 0
    assert np.all(theta[zero_params] == 0)
    free = constrained_retrain(net, small_data, math.inf, TrainConfig(epochs=30, lr=0.01))
    assert np.abs(free.flat_params()).max() <= net.clip_bound
    with pytest.raises(ValueError):
        constrained_retrain(net, small_data, -1.0)


def _margin_net():
    # logit difference 4 * (x - 0.5): a wide margin around well separated points
    W1 = np.array([[1.0], [-1.0]])
    W2 = np.array([[-2.0, 2.0], [2.0, -2.0]])
    return Network([1, 2, 2], [W1, W2], [np.array([-0.5, 0.5]), np.zeros(2)], 5.0)


def test_nu_probe_on_wide_margins():
    data = Dataset([[0.1], [0.2], [0.8], [0.9]], [1, 1, 2, 2])
    net = _margin_net()
    assert nu_ball_probe(net, data, 0.05, 0.0, trials=3).unchanged_fraction == 1.0
    rep = nu_ball_probe(net, data, 0.05, 1e-3, trials=10)
    assert rep.base_payoff == -1.0
    assert rep.unchanged_fraction == 1.0 and rep.stable_nu == 1e-3
    big = nu_ball_probe(net, data, 0.05, 10.0, trials=5)
    assert 0.0 <= big.unchanged_fraction <= 1.0
    assert big.stable_nu <= 10.0
    with pytest.raises(ValueError):
        nu_ball_probe(net, data, 0.05, 1e-3, trials=0)


def test_stable_nu_shrinks_with_radius():
    data = generate(SyntheticSpec("two_gaussians", n_samples=20, class_separation=0.5,
                                  noise=0.04, dims=1, seed=2))
    net = solve_g1(data, Arch((1, 6, 2), 2.0), 0.05, "ce", TrainConfig(epochs=60)).classifier_strategy
    stable = [nu_ball_probe(net, data, eps, 0.5, trials=5, grid_step=0.005, levels=10,
                            bisect=2).stable_nu for eps in (0.0, 0.05, 0.1)]
    violations = sum(b > a for a, b in zip(stable, stable[1:]))
    assert violations <= 1
