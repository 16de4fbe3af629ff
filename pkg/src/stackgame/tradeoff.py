"""Robustness versus accuracy: the scalarised game (adversarial payoff plus
lam times clean loss), the ordering check between its solutions, budgeted
clean retraining of a robust network, and a parameter-ball stability probe.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import losses as L
from .attacks import BindingError, PgdConfig, build_bundle
from .data import Dataset
from .games import EquilibriumRecord, solve_g1
from .metrics import (DEFAULT_GRID_STEP, adversarial_accuracy, clean_accuracy, clean_loss,
                      payoff)
from .network import Network
from .training import Arch, TrainConfig, train


@dataclass(frozen=True)
class TradeoffConfig:
    lam: float = 0.5
    retrain_budget_pct: float = 3.0
    nu: float = 1e-3
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4)

    def __post_init__(self):
        if self.lam < 0 or self.retrain_budget_pct < 0 or not self.nu > 0:
            raise ValueError("lam, budget must be >= 0 and nu > 0")


def solve_gt(data: Dataset, arch: Arch, eps: float, loss="ce", lam: float = 0.5,
             train_cfg: TrainConfig = TrainConfig(),
             eval_cfg: PgdConfig = PgdConfig()) -> EquilibriumRecord:
    """Adversarial training on  adv_loss + lam * clean_loss.  lam = 0 is exactly G1."""
    if lam < 0:
        raise ValueError("lam must be non-negative")
    return solve_g1(data, arch, eps, loss, train_cfg, eval_cfg, lam=lam)


@dataclass
class TradeoffReport:
    adv_payoff_s: float
    adv_payoff_t: float
    clean_loss_s: float
    clean_loss_t: float
    se_adv: float
    se_clean: float
    robust_ok: bool | None  # adv_s <= adv_t (within tau); None in diagnostic mode
    accurate_ok: bool | None  # clean_s >= clean_t (within tau)
    runs: tuple[int, int] = (1, 1)
    per_run: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool | None:
        if self.robust_ok is None:
            return None
        return self.robust_ok and self.accurate_ok


def _pooled_se(a, b) -> float:
    var = lambda v: np.var(v, ddof=1) / len(v) if len(v) > 1 else 0.0
    return float(np.sqrt(var(a) + var(b)))


def check_tradeoff(rec_s, rec_t, data: Dataset, eps: float, loss="ce",
                   eval_cfg: PgdConfig = PgdConfig(), diagnostic: bool | None = None,
                   tau: float | None = None) -> TradeoffReport:
    """Compare adversarial payoff and clean loss of lam = 0 against lam > 0 solutions.

    ``rec_s`` / ``rec_t`` are records or lists of records (one per seed).
    Each network gets a fresh PGD best response.  The orderings
    adv_s <= adv_t and clean_s >= clean_t are checked on seed means with
    tolerance tau (default: one pooled standard error).  When both sides
    have the same lam the claim does not apply and only the numbers are
    reported, unless ``diagnostic=False`` forces the check.
    """
    loss = L.as_loss(loss)
    S = rec_s if isinstance(rec_s, (list, tuple)) else [rec_s]
    T = rec_t if isinstance(rec_t, (list, tuple)) else [rec_t]
    for r in S + T:
        ctx = r.context
        if ctx.get("dataset_id", data.id) != data.id or ctx.get("eps", eps) != eps:
            raise BindingError("record was solved for different data or radius")

    def measure(recs):
        adv, cl = [], []
        for r in recs:
            net = r.classifier_strategy
            bundle = build_bundle(net, data, eps, loss, eval_cfg)
            adv.append(payoff(net, bundle, data, loss))
            cl.append(clean_loss(net, data, loss))
        return np.array(adv), np.array(cl)

    adv_s, cl_s = measure(S)
    adv_t, cl_t = measure(T)
    se_adv, se_clean = _pooled_se(adv_s, adv_t), _pooled_se(cl_s, cl_t)
    if diagnostic is None:
        lam_s = {r.context.get("lam", 0.0) for r in S}
        lam_t = {r.context.get("lam", 0.0) for r in T}
        same = S is T or all(a is b for a, b in zip(S, T)) and len(S) == len(T)
        diagnostic = lam_s == lam_t and not same
    robust_ok = accurate_ok = None
    if not diagnostic:
        ta = se_adv if tau is None else tau
        tc = se_clean if tau is None else tau
        robust_ok = bool(adv_s.mean() <= adv_t.mean() + ta + 1e-12)
        accurate_ok = bool(cl_s.mean() >= cl_t.mean() - tc - 1e-12)
    return TradeoffReport(float(adv_s.mean()), float(adv_t.mean()), float(cl_s.mean()),
                          float(cl_t.mean()), se_adv, se_clean, robust_ok, accurate_ok,
                          (len(S), len(T)),
                          {"adv_s": adv_s.tolist(), "adv_t": adv_t.tolist(),
                           "clean_s": cl_s.tolist(), "clean_t": cl_t.tolist()})


def budget_box(net: Network, budget_pct: float):
    """Per-coordinate interval theta0 -/+ p|theta0| (p = pct/100); zeros stay fixed."""
    theta0 = net.flat_params()
    if math.isinf(budget_pct):
        return None
    p = budget_pct / 100.0
    return theta0 - p * np.abs(theta0), theta0 + p * np.abs(theta0)


def constrained_retrain(net: Network, data: Dataset, budget_pct: float,
                        train_cfg: TrainConfig = TrainConfig(), loss="ce") -> Network:
    """Fine-tune on the clean loss with every parameter held within ``budget_pct``
    percent of its starting magnitude (and inside [-E, E]).

    The clean loss is the training signal, but the iterate returned is the
    one with the highest clean accuracy (the starting network included, the
    earliest on ties), so accuracy never drops.  ``budget_pct = math.inf``
    removes the budget.
    """
    if budget_pct < 0:
        raise ValueError("budget_pct must be non-negative")
    if budget_pct == 0:
        return net.copy()
    best = [clean_accuracy(net, data), net.copy()]

    def keep_best(_, current):
        acc = clean_accuracy(current, data)
        if acc > best[0]:
            best[:] = [acc, current.copy()]

    train(net.copy(), data, loss, train_cfg, eps=0.0, box=budget_box(net, budget_pct),
          callback=keep_best)
    return best[1]


@dataclass
class NuProbeReport:
    nu: float
    trials: int
    base_payoff: float
    unchanged_fraction: float
    stable_nu: float
    tested: list = field(default_factory=list)  # (nu, unchanged fraction) pairs


def _adv01_payoff(net, data, eps, grid_step):
    return -adversarial_accuracy(net, data, eps, "grid", grid_step=grid_step)


def _unchanged_fraction(net, data, eps, nu, trials, grid_step, seed, base):
    if nu == 0:
        return 1.0
    # the same directions at every radius, scaled by nu
    rng = np.random.default_rng(seed)
    theta = net.flat_params()
    same = 0
    for _ in range(trials):
        alpha = nu * rng.uniform(-1.0, 1.0, size=theta.size)
        same += _adv01_payoff(net.with_params(theta + alpha), data, eps, grid_step) == base
    return same / trials


def nu_ball_probe(net: Network, data: Dataset, eps: float, nu: float, trials: int = 20,
                  grid_step: float = DEFAULT_GRID_STEP, seed: int = 0,
                  levels: int = 12, bisect: int = 4) -> NuProbeReport:
    """Probe how far parameters can move (inf-norm < nu) without changing the
    adversarial 0/-1 payoff, evaluated with certified ball verdicts.

    The stable radius is searched on nu, nu/2, nu/4, ... and then refined by
    bisection between the last all-stable level and the one above.  It is
    an empirical estimate, not a certificate.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    base = _adv01_payoff(net, data, eps, grid_step)
    frac = _unchanged_fraction(net, data, eps, float(nu), trials, grid_step, seed, base)
    tested = [(float(nu), frac)]
    stable, above = (float(nu), None) if frac == 1.0 else (0.0, float(nu))
    if above is not None:
        v = float(nu)
        for _ in range(levels):
            v /= 2
            f = _unchanged_fraction(net, data, eps, v, trials, grid_step, seed, base)
            tested.append((v, f))
            if f == 1.0:
                stable = v
                break
            above = v
        if stable > 0:
            lo, hi = stable, above
            for _ in range(bisect):
                mid = 0.5 * (lo + hi)
                f = _unchanged_fraction(net, data, eps, mid, trials, grid_step, seed, base)
                tested.append((mid, f))
                lo, hi = (mid, hi) if f == 1.0 else (lo, mid)
            stable = lo
    return NuProbeReport(float(nu), trials, base, frac, stable, tested)
