"""Projected first-order training against clean or adversarial samples.

One routine covers clean training, adversarial training (the minmax game)
and the trade-off objective  adv_loss + lam * clean_loss.  After every
update the parameters are clamped to [-E, E] (or to a per-coordinate box).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import losses as L
from .attacks import PgdConfig, pgd_batch
from .data import Dataset
from .network import Network


class TrainingDivergedError(RuntimeError):
    pass


@dataclass(frozen=True)
class Arch:
    layer_dims: tuple[int, ...]
    clip_bound: float = 1.0

    def build(self, seed: int) -> Network:
        return Network.init(list(self.layer_dims), self.clip_bound, seed)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 200
    lr: float = 0.01
    batch_size: int | None = None  # None -> full batch
    optimizer: str = "adam"  # adam | sgd
    momentum: float = 0.9
    attack: PgdConfig = field(default_factory=lambda: PgdConfig(steps=10, restarts=1))
    seed: int = 0

    def __post_init__(self):
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError("optimizer must be adam or sgd")
        if self.epochs < 0 or not self.lr > 0:
            raise ValueError("epochs must be >= 0 and lr > 0")


class _Optimizer:
    def __init__(self, cfg: TrainConfig, size: int):
        self.cfg = cfg
        self.m = np.zeros(size)
        self.v = np.zeros(size)
        self.t = 0

    def step(self, theta, grad):
        c = self.cfg
        self.t += 1
        if c.optimizer == "sgd":
            self.m = c.momentum * self.m + grad
            return theta - c.lr * self.m
        b1, b2 = 0.9, 0.999
        self.m = b1 * self.m + (1 - b1) * grad
        self.v = b2 * self.v + (1 - b2) * grad ** 2
        mhat = self.m / (1 - b1 ** self.t)
        vhat = self.v / (1 - b2 ** self.t)
        return theta - c.lr * mhat / (np.sqrt(vhat) + 1e-8)


def _flat(gW, gb):
    parts = []
    for a, b in zip(gW, gb):
        parts += [a.ravel(), b]
    return np.concatenate(parts)


def train(net: Network, data: Dataset, loss, cfg: TrainConfig = TrainConfig(),
          eps: float = 0.0, lam: float = 0.0, box=None, inputs=None, callback=None):
    """Minimise  mean adv-loss(eps) + lam * mean clean-loss  by projected steps.

    ``box`` is an optional (lower, upper) pair of flat parameter bounds,
    intersected with [-E, E].  ``inputs`` replaces the dataset inputs with
    fixed (already perturbed) points, which is how a fixed attack bundle is
    trained against.  Returns ``(net, trace)`` where trace holds the
    adversarial payoff seen at each epoch, measured before the step.
    ``callback(epoch, net)`` is called after every epoch.
    """
    loss = L.as_loss(loss)
    if not loss.differentiable:
        raise L.NonDifferentiableLossError(f"cannot train on {loss.kind}")
    if lam < 0:
        raise ValueError("lam must be non-negative")
    X = data.inputs if inputs is None else np.asarray(inputs, dtype=float)
    Y0 = data.labels0
    N = X.shape[0]
    E = net.clip_bound
    lo, hi = np.full(net.param_count, -E), np.full(net.param_count, E)
    if box is not None:
        lo, hi = np.maximum(lo, box[0]), np.minimum(hi, box[1])
    theta = np.clip(net.flat_params(), lo, hi)
    opt = _Optimizer(cfg, theta.size)
    rng = np.random.default_rng([cfg.seed, 7])
    bs = N if cfg.batch_size is None else min(cfg.batch_size, N)
    trace = []
    current = net.with_params(theta)
    for epoch in range(cfg.epochs):
        order = np.arange(N) if bs == N else rng.permutation(N)
        epoch_vals = []
        for s in range(0, N, bs):
            idx = order[s:s + bs]
            Xb, Yb = X[idx], Y0[idx]
            if eps > 0:
                acfg = PgdConfig(cfg.attack.steps, cfg.attack.step_size, cfg.attack.restarts,
                                 cfg.attack.include_zero_start,
                                 seed=(cfg.attack.seed + 1000003 * (epoch + 1)) % (2 ** 32))
                deltas, _ = pgd_batch(current, Xb, Yb, eps, loss, acfg, indices=idx)
                Xa = Xb + deltas
            else:
                Xa = Xb
            vals, _, gW, gb = current.backward(Xa, loss.kind, Yb)
            grad = _flat(gW, gb) / len(idx)
            if lam > 0:
                _, _, cW, cb = current.backward(Xb, loss.kind, Yb)
                grad = grad + lam * _flat(cW, cb) / len(idx)
            epoch_vals.append(vals)
            theta = np.clip(opt.step(theta, grad), lo, hi)
            current = net.with_params(theta)
        value = float(np.mean(np.concatenate(epoch_vals)))
        if not math.isfinite(value) or not np.all(np.isfinite(theta)):
            raise TrainingDivergedError(f"non-finite payoff at epoch {epoch}")
        trace.append(value)
        if callback is not None:
            callback(epoch, current)
    return current, trace
