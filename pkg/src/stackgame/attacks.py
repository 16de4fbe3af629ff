"""Inner maximisation over the inf-ball: projected sign-gradient ascent, an
exhaustive lattice oracle for inputs of dimension <= 3, a Lipschitz
branch-and-bound that decides whether a whole ball is classified correctly,
and per-dataset attack bundles.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass

import numpy as np

from . import losses as L
from .data import Dataset
from .network import Network, margin_lipschitz

log = logging.getLogger(__name__)

MAX_GRID_DIM = 3
MOMENTUM = 0.75


class InvalidRadiusError(ValueError):
    pass


class DimensionTooLargeError(ValueError):
    pass


class BindingError(ValueError):
    pass


@dataclass(frozen=True)
class PgdConfig:
    steps: int = 40
    step_size: float | None = None  # None -> 2.5 * eps / steps
    restarts: int = 4
    include_zero_start: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if self.step_size is not None and not self.step_size > 0:
            raise ValueError("step_size must be positive")
        if self.restarts < 0:
            raise ValueError("restarts must be >= 0")
        if self.restarts == 0 and not self.include_zero_start:
            raise ValueError("no starting point: restarts=0 and include_zero_start=False")

    def alpha(self, eps: float) -> float:
        return self.step_size if self.step_size is not None else 2.5 * eps / self.steps


@dataclass
class AttackBundle:
    epsilon: float
    deltas: np.ndarray
    dataset_id: str

    def __post_init__(self):
        self.deltas = np.asarray(self.deltas, dtype=float)
        if self.deltas.ndim != 2:
            raise ValueError("deltas must be an (N, n) array")
        if np.any(np.abs(self.deltas) > self.epsilon):
            raise ValueError("a perturbation leaves the eps-ball")

    @property
    def size(self) -> int:
        return self.deltas.shape[0]

    def check_binding(self, data: Dataset) -> None:
        if self.dataset_id != data.id or self.deltas.shape != data.inputs.shape:
            raise BindingError(f"bundle for dataset {self.dataset_id} ({self.deltas.shape}) "
                               f"does not match {data.id} ({data.inputs.shape})")

    def perturbed(self, data: Dataset) -> np.ndarray:
        self.check_binding(data)
        return data.inputs + self.deltas


def _check_eps(eps):
    if not eps >= 0:
        raise InvalidRadiusError(f"attack radius must be non-negative, got {eps}")


def _surrogate(loss: L.LossKind) -> str:
    if loss.kind == "adv01":
        log.info("adv01 is piecewise constant; maximising the cw margin instead")
        return "cw"
    return loss.kind


def _random_starts(cfg: PgdConfig, indices, n: int, eps: float) -> np.ndarray:
    """Restart points: distinct random vertices of the ball first, then uniform draws.

    Each sample index has its own stream, so a sample's starts do not depend
    on which batch it is attacked in, and r+1 restarts extend r restarts.
    """
    n_vertex = min(cfg.restarts, 2 ** min(n, 10))
    starts = np.empty((cfg.restarts, len(indices), n))
    for j, idx in enumerate(indices):
        rng = np.random.default_rng([cfg.seed, int(idx)])
        if n <= 10:
            codes = rng.permutation(2 ** n)[:n_vertex]
            bits = (codes[:, None] >> np.arange(n)) & 1
        else:
            bits = rng.integers(0, 2, size=(n_vertex, n))
        starts[:n_vertex, j, :] = eps * (2.0 * bits - 1.0)
        starts[n_vertex:, j, :] = rng.uniform(-eps, eps, size=(cfg.restarts - n_vertex, n))
    return starts


def _step_sizes(alpha: float, steps: int) -> np.ndarray:
    # constant for the first 60% of the steps, then geometric decay (x0.7 per step)
    k = int(np.ceil(0.6 * steps))
    return alpha * 0.7 ** np.maximum(0, np.arange(steps) - k + 1)


def pgd_batch(net: Network, X, Y0, eps: float, loss, cfg: PgdConfig = PgdConfig(),
              indices=None):
    """PGD on every row of X at once.

    Returns ``(deltas, values)`` where ``values`` is the attacked loss
    (the best iterate over all starts and steps).
    """
    _check_eps(eps)
    kind = _surrogate(L.as_loss(loss))
    X = np.asarray(X, dtype=float)
    Y0 = np.asarray(Y0)
    N, n = X.shape
    if eps == 0:
        return np.zeros_like(X), L.eval_batch(kind, net.logits(X), Y0)
    indices = np.arange(N) if indices is None else np.asarray(indices)
    alphas = _step_sizes(cfg.alpha(eps), cfg.steps)
    starts = []
    if cfg.include_zero_start:
        starts.append(np.zeros((N, n)))
    if cfg.restarts:
        starts.extend(_random_starts(cfg, indices, n, eps))
    best_val = np.full(N, -np.inf)
    best_delta = np.zeros((N, n))
    for start in starts:
        delta = start.copy()
        velocity = np.zeros_like(delta)
        for t in range(cfg.steps + 1):
            if t < cfg.steps:
                values, gX, _, _ = net.backward(X + delta, kind, Y0)
            else:
                values = L.eval_batch(kind, net.logits(X + delta), Y0)
            better = values > best_val
            best_val[better] = values[better]
            best_delta[better] = delta[better]
            if t < cfg.steps:
                # momentum on l1-normalised gradients lets the sign step follow ridges
                norm = np.abs(gX).sum(axis=1, keepdims=True)
                velocity = MOMENTUM * velocity + gX / np.where(norm > 0, norm, 1.0)
                delta = np.clip(delta + alphas[t] * np.sign(velocity), -eps, eps)
    return best_delta, best_val


def pgd_attack(net: Network, x, y: int, eps: float, loss, cfg: PgdConfig = PgdConfig(),
               sample_index: int = 0) -> np.ndarray:
    """Perturbation with ||delta||_inf <= eps that (approximately) maximises the loss."""
    x = np.asarray(x, dtype=float)
    deltas, _ = pgd_batch(net, x[None, :], np.array([y - 1]), eps, loss, cfg, [sample_index])
    return deltas[0]


def lattice_axis(eps: float, grid_step: float) -> np.ndarray:
    """Offsets k*grid_step inside [-eps, eps] plus both endpoints, ascending.

    Anchoring at zero makes the lattice for a smaller radius a subset of the
    one for a larger radius whenever both radii are multiples of the step.
    Neighbouring offsets are never more than ``grid_step`` apart.
    """
    if not grid_step > 0:
        raise ValueError("grid_step must be positive")
    if eps == 0:
        return np.zeros(1)
    k = int(np.floor(eps / grid_step + 1e-9))
    axis = grid_step * np.arange(-k, k + 1, dtype=float)
    axis = axis[np.abs(axis) <= eps]
    if eps - axis[-1] > 1e-12 * max(eps, 1.0):
        axis = np.concatenate([[-eps], axis, [eps]])
    else:
        axis[0], axis[-1] = -eps, eps
    return axis


def lattice(eps: float, grid_step: float, n: int) -> np.ndarray:
    """All lattice offsets in lexicographic order, shape (P, n)."""
    axis = lattice_axis(eps, grid_step)
    grids = np.meshgrid(*([axis] * n), indexing="ij")
    return np.stack([g.ravel() for g in grids], axis=1)


def _check_grid_dim(n):
    if n > MAX_GRID_DIM:
        raise DimensionTooLargeError(f"lattice search needs n <= {MAX_GRID_DIM}, got n={n}")


def _lattice_values(net, x, y0, offsets, kind, chunk=1 << 16):
    vals = np.empty(len(offsets))
    for s in range(0, len(offsets), chunk):
        pts = x + offsets[s:s + chunk]
        Z = net.logits(pts)
        vals[s:s + chunk] = L.eval_batch(kind, Z, np.full(len(pts), y0))
    return vals


def grid_oracle(net: Network, x, y: int, eps: float, loss, grid_step: float):
    """Exhaustive maximum over the lattice of the eps-ball.

    Returns ``(delta, value)``; the lexicographically smallest maximiser
    wins ties.
    """
    _check_eps(eps)
    loss = L.as_loss(loss)
    x = np.asarray(x, dtype=float)
    _check_grid_dim(x.shape[0])
    offsets = lattice(eps, grid_step, x.shape[0])
    vals = _lattice_values(net, x, y - 1, offsets, loss.kind)
    i = int(np.argmax(vals))
    return offsets[i].copy(), float(vals[i])


@dataclass
class BallVerdict:
    robust: bool
    decided: bool
    witness: np.ndarray | None  # a point offset with cw >= 0 when not robust
    lattice_max: float
    lattice_argmax: np.ndarray
    evaluations: int


def certify_ball(net: Network, x, y: int, eps: float, grid_step: float,
                 lipschitz: float | None = None, max_evals: int = 2_000_000) -> BallVerdict:
    """Decide whether every point of B(x, eps) is classified ``y`` (cw margin < 0).

    The lattice is searched first.  A lattice point with cw >= 0 is a
    witness.  Otherwise the ball is bisected into boxes; a box is cleared
    once ``cw(centre) + Lip * half_width < 0`` and every box centre visited
    is also checked for a witness.  If the evaluation budget runs out the
    verdict is "not robust, undecided".
    """
    x = np.asarray(x, dtype=float)
    n = x.shape[0]
    _check_grid_dim(n)
    y0 = y - 1
    offsets = lattice(eps, grid_step, n)
    vals = _lattice_values(net, x, y0, offsets, "cw")
    i = int(np.argmax(vals))
    lmax, larg = float(vals[i]), offsets[i].copy()
    evals = len(offsets)
    if lmax >= 0:
        return BallVerdict(False, True, larg, lmax, larg, evals)
    if eps == 0:
        return BallVerdict(True, True, None, lmax, larg, evals)
    lip = margin_lipschitz(net, y) if lipschitz is None else lipschitz
    # lattice cells have inf-radius <= grid_step / 2
    if lmax + lip * grid_step / 2 < 0:
        return BallVerdict(True, True, None, lmax, larg, evals)
    signs = np.array(list(itertools.product((-0.5, 0.5), repeat=n)))
    centres = np.zeros((1, n))
    half = float(eps)
    while evals < max_evals:
        v = L.eval_batch("cw", net.logits(x + centres), np.full(len(centres), y0))
        evals += len(centres)
        hit = np.flatnonzero(v >= 0)
        if hit.size:
            return BallVerdict(False, True, centres[hit[0]].copy(), lmax, larg, evals)
        open_ = v + lip * half >= 0
        if not open_.any():
            return BallVerdict(True, True, None, lmax, larg, evals)
        centres = (centres[open_][:, None, :] + half * signs[None, :, :]).reshape(-1, n)
        half /= 2
    log.warning("certify_ball: evaluation budget exhausted at half-width %g", half)
    return BallVerdict(False, False, None, lmax, larg, evals)


def build_bundle(net: Network, data: Dataset, eps: float, loss,
                 cfg: PgdConfig = PgdConfig(), exact: bool = False,
                 grid_step: float = 1e-3) -> AttackBundle:
    """One best-response perturbation per sample.

    With ``exact`` the lattice oracle is used (n <= 3).  For adv01 the exact
    response is taken from :func:`certify_ball`, so the bundle attains
    the adversarial 0/-1 loss on every sample whose ball holds an adversary.
    """
    _check_eps(eps)
    loss = L.as_loss(loss)
    N, n = data.inputs.shape
    if not exact:
        deltas, _ = pgd_batch(net, data.inputs, data.labels0, eps, loss, cfg)
        return AttackBundle(eps, deltas, data.id)
    _check_grid_dim(n)
    deltas = np.zeros((N, n))
    for i, (x, y) in enumerate(zip(data.inputs, data.labels)):
        if loss.kind == "adv01":
            verdict = certify_ball(net, x, int(y), eps, grid_step)
            deltas[i] = verdict.witness if verdict.witness is not None else verdict.lattice_argmax
        else:
            deltas[i], _ = grid_oracle(net, x, int(y), eps, loss, grid_step)
    return AttackBundle(eps, np.clip(deltas, -eps, eps), data.id)
