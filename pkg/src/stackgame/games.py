"""Finite-data games between a Classifier (minimiser) and an Adversary (maximiser).

* G1, adversarial training: min over networks of max over attack bundles.
* G2, universal adversary: max over bundles of min over networks.
* G3, simultaneous play in mixed strategies over finite pools.

Matrix conventions: rows are Classifier strategies (minimising), columns
are Adversary strategies (maximising).  Row/column indices are 0-based.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from . import losses as L
from .attacks import AttackBundle, BindingError, PgdConfig, build_bundle
from .data import Dataset
from .metrics import payoff
from .network import Network
from .training import Arch, TrainConfig, train


class InvalidPoolError(ValueError):
    pass


@dataclass
class MatrixGame:
    payoff: np.ndarray

    def __post_init__(self):
        self.payoff = np.atleast_2d(np.asarray(self.payoff, dtype=float))
        if self.payoff.ndim != 2 or min(self.payoff.shape) < 1:
            raise ValueError("payoff must be a non-empty matrix")
        if not np.all(np.isfinite(self.payoff)):
            raise ValueError("payoff entries must be finite")

    @property
    def shape(self):
        return self.payoff.shape


@dataclass
class MixedStrategy:
    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if w.ndim != 1 or w.size < 1 or np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ValueError("weights must be a probability vector")
        self.weights = w

    @classmethod
    def point(cls, k: int, size: int) -> "MixedStrategy":
        w = np.zeros(size)
        w[k] = 1.0
        return cls(w)

    @property
    def support(self) -> np.ndarray:
        return np.flatnonzero(self.weights > 0)


@dataclass
class EquilibriumRecord:
    game: str  # G1 | G2 | G3 | Gt | matrix
    classifier_strategy: object  # Network or MixedStrategy
    adversary_strategy: object  # AttackBundle or MixedStrategy
    value: float
    trace: list = field(default_factory=list)
    context: dict = field(default_factory=dict)
    certified: bool = False


def _as_matrix(g) -> np.ndarray:
    return g.payoff if isinstance(g, MatrixGame) else MatrixGame(g).payoff


def matrix_minmax(g):
    """Leader picks a row knowing the column will best-respond: ``(row, col, value)``."""
    M = _as_matrix(g)
    cols = np.argmax(M, axis=1)
    worst = M[np.arange(M.shape[0]), cols]
    r = int(np.argmin(worst))
    return r, int(cols[r]), float(worst[r])


def matrix_maxmin(g):
    """Leader picks a column knowing the row will best-respond: ``(row, col, value)``."""
    M = _as_matrix(g)
    rows = np.argmin(M, axis=0)
    best = M[rows, np.arange(M.shape[1])]
    c = int(np.argmax(best))
    return int(rows[c]), c, float(best[c])


def duality_gap(M, p, q) -> float:
    """max_j (p^T M)_j - min_i (M q)_i, non-negative for any mixed pair.

    Rounding can push an exact equilibrium a few ulps below zero; that is
    reported as 0.
    """
    return max(float(np.max(p @ M) - np.min(M @ q)), 0.0)


@dataclass
class FictitiousPlayResult:
    row: np.ndarray
    col: np.ndarray
    value: float
    gap: float
    iterations: int
    gaps: list
    polished: bool


def _support_candidates(counts, payoff_vs_opp, minimise):
    freq = counts / counts.sum()
    cands = []
    for frac in (0.0, 0.01, 0.05, 0.15, 0.3):
        s = np.flatnonzero(freq > frac * freq.max())
        if s.size:
            cands.append(tuple(s))
    order = np.argsort(payoff_vs_opp if minimise else -payoff_vs_opp, kind="stable")
    for k in range(1, min(len(order), 5) + 1):
        cands.append(tuple(sorted(order[:k])))
    return list(dict.fromkeys(cands))


def _equalising(A):
    """Probability vector w and value v with A @ w = v * 1, by least squares."""
    k = A.shape[1]
    lhs = np.zeros((A.shape[0] + 1, k + 1))
    lhs[:-1, :k] = A
    lhs[:-1, k] = -1.0
    lhs[-1, :k] = 1.0
    rhs = np.zeros(A.shape[0] + 1)
    rhs[-1] = 1.0
    sol = np.linalg.lstsq(lhs, rhs, rcond=None)[0]
    w = np.clip(sol[:k], 0.0, None)
    s = w.sum()
    return (w / s if s > 0 else np.full(k, 1.0 / k)), sol[k]


def _polish(M, p_counts, q_counts):
    """Solve the indifference equations on supports suggested by the play so far."""
    R, C = M.shape
    p_bar, q_bar = p_counts / p_counts.sum(), q_counts / q_counts.sum()
    best = None
    rows_c = _support_candidates(p_counts, M @ q_bar, minimise=True)
    cols_c = _support_candidates(q_counts, p_bar @ M, minimise=False)
    for rs in rows_c:
        for cs in cols_c:
            sub = M[np.ix_(rs, cs)]
            qw, _ = _equalising(sub)
            pw, _ = _equalising(sub.T)
            p = np.zeros(R)
            q = np.zeros(C)
            p[list(rs)] = pw
            q[list(cs)] = qw
            gap = duality_gap(M, p, q)
            if best is None or gap < best[0]:
                best = (gap, p, q)
    return best


def fictitious_play(g, tol: float = 1e-6, max_iter: int = 200_000,
                    polish: bool = True) -> FictitiousPlayResult:
    """Simultaneous fictitious play for the zero-sum matrix game.

    Stops when the duality gap of the empirical mixtures is <= tol.  Plain
    fictitious play closes the gap at a sublinear rate, so at iterations
    16, 32, 64, ... the indifference equations are solved on the supports
    the play has settled on; a candidate is accepted only through its own
    duality gap, so the stopping certificate is unchanged.
    """
    M = _as_matrix(g)
    R, C = M.shape
    p_counts = np.zeros(R)
    q_counts = np.zeros(C)
    row_sum = np.zeros(R)  # M @ q_counts
    col_sum = np.zeros(C)  # p_counts @ M
    r, c = 0, 0
    gaps = []
    next_polish = 16
    polished = False
    for it in range(1, max_iter + 1):
        p_counts[r] += 1
        q_counts[c] += 1
        row_sum += M[:, c]
        col_sum += M[r, :]
        lo, hi = row_sum.min() / it, col_sum.max() / it
        gap = max(hi - lo, 0.0)
        gaps.append(gap)
        if gap <= tol:
            p, q = p_counts / it, q_counts / it
            break
        if polish and it == next_polish:
            next_polish *= 2
            cand = _polish(M, p_counts, q_counts)
            if cand is not None and cand[0] <= tol:
                gap, p, q = cand
                gaps.append(gap)
                polished = True
                break
        r = int(np.argmin(row_sum))
        c = int(np.argmax(col_sum))
    else:
        p, q = p_counts / max_iter, q_counts / max_iter
    value = 0.5 * (float(np.min(M @ q)) + float(np.max(p @ M)))
    return FictitiousPlayResult(p, q, value, duality_gap(M, p, q), it, gaps, polished)


def matrix_mixed(g, tol: float = 1e-6):
    """Mixed equilibrium ``(row_mix, col_mix, value)`` by fictitious play."""
    res = fictitious_play(g, tol)
    return res.row, res.col, res.value


def support_enumeration(g, atol: float = 1e-9):
    """Exact equilibrium of a small zero-sum game by trying every support pair.

    Intended as an independent check for matrices up to about 4x4.  Returns
    ``(row_mix, col_mix, value)`` of the first equilibrium found.
    """
    M = _as_matrix(g)
    R, C = M.shape
    subsets = lambda n: [s for k in range(1, n + 1) for s in itertools.combinations(range(n), k)]
    for rs in subsets(R):
        for cs in subsets(C):
            sub = M[np.ix_(rs, cs)]
            # q over cs equalises the rows in rs; p over rs equalises the columns in cs
            k, l = len(rs), len(cs)
            A = np.zeros((k + 1, l + 1))
            A[:k, :l], A[:k, l], A[k, :l] = sub, -1.0, 1.0
            b = np.zeros(k + 1)
            b[k] = 1.0
            qs, *_ = np.linalg.lstsq(A, b, rcond=None)
            B = np.zeros((l + 1, k + 1))
            B[:l, :k], B[:l, k], B[l, :k] = sub.T, -1.0, 1.0
            b2 = np.zeros(l + 1)
            b2[l] = 1.0
            ps, *_ = np.linalg.lstsq(B, b2, rcond=None)
            if np.abs(A @ qs - b).max() > atol or np.abs(B @ ps - b2).max() > atol:
                continue
            q_sub, v = qs[:l], qs[l]
            p_sub, v2 = ps[:k], ps[k]
            if q_sub.min() < -atol or p_sub.min() < -atol or abs(v - v2) > 1e-7:
                continue
            p = np.zeros(R)
            q = np.zeros(C)
            p[list(rs)] = np.clip(p_sub, 0, None)
            q[list(cs)] = np.clip(q_sub, 0, None)
            p /= p.sum()
            q /= q.sum()
            if duality_gap(M, p, q) <= 1e-8:
                return p, q, float(p @ M @ q)
    raise RuntimeError("no equilibrium found; matrix may be badly degenerate")


# -- payoff matrices from strategy pools ------------------------------------

def payoff_matrix(classifier_pool, adversary_pool, data: Dataset, loss) -> np.ndarray:
    if not classifier_pool or not adversary_pool:
        raise InvalidPoolError("strategy pools must be non-empty")
    for b in adversary_pool:
        b.check_binding(data)
    return np.array([[payoff(net, b, data, loss) for b in adversary_pool]
                     for net in classifier_pool])


def _context(data, eps, loss, **extra):
    ctx = {"dataset_id": data.id, "eps": float(eps), "loss": L.as_loss(loss).kind}
    ctx.update(extra)
    return ctx


def records_from_pools(classifier_pool, adversary_pool, data: Dataset, loss,
                       tol: float = 1e-6):
    """Exact G1/G2/G3 records for finite pure-strategy sets (all certified)."""
    M = payoff_matrix(classifier_pool, adversary_pool, data, loss)
    eps = max(b.epsilon for b in adversary_pool)
    ctx = _context(data, eps, loss, rows=M.shape[0], cols=M.shape[1])
    r1, c1, v1 = matrix_minmax(M)
    r2, c2, v2 = matrix_maxmin(M)
    fp = fictitious_play(M, tol)
    return {
        "G1": EquilibriumRecord("G1", classifier_pool[r1], adversary_pool[c1], v1, [], ctx, True),
        "G2": EquilibriumRecord("G2", classifier_pool[r2], adversary_pool[c2], v2, [], ctx, True),
        "G3": EquilibriumRecord("G3", MixedStrategy(fp.row), MixedStrategy(fp.col), fp.value,
                                fp.gaps, dict(ctx, gap=fp.gap), True),
        "matrix": M,
    }


# -- G1: adversarial training -----------------------------------------------

def solve_g1(data: Dataset, arch: Arch, eps: float, loss="cw",
             train_cfg: TrainConfig = TrainConfig(), eval_cfg: PgdConfig = PgdConfig(),
             lam: float = 0.0, init: Network | None = None) -> EquilibriumRecord:
    """Approximate Stackelberg (minmax) equilibrium by alternating play.

    Each epoch the Adversary best-responds with PGD and the Classifier takes
    a projected step on the payoff at the attacked points.  The returned
    bundle is a fresh best response (``eval_cfg``) to the final network.
    ``lam`` > 0 adds lam * clean loss to the Classifier's objective (game Gt).
    """
    loss = L.as_loss(loss)
    if not loss.differentiable:
        raise L.NonDifferentiableLossError("G1 is solved with mse, ce or cw")
    net = arch.build(train_cfg.seed) if init is None else init.copy()
    net, trace = train(net, data, loss, train_cfg, eps=eps, lam=lam)
    bundle = build_bundle(net, data, eps, loss, eval_cfg)
    value = payoff(net, bundle, data, loss)
    return EquilibriumRecord("Gt" if lam > 0 else "G1", net, bundle, value, trace,
                             _context(data, eps, loss, lam=float(lam), seed=train_cfg.seed))


# -- G2: universal adversary --------------------------------------------------

@dataclass(frozen=True)
class G2Config:
    outer_iters: int = 10
    restarts: int = 2
    step_size: float | None = None  # None -> eps / 4
    train: TrainConfig = TrainConfig(epochs=100)
    seed: int = 0


def _local_maxmin(M, restarts: int, seed: int):
    """Hill-climb over columns (neighbours j-1, j+1) on the row-minimum; a feasible maxmin point."""
    inner = M.min(axis=0)
    rng = np.random.default_rng(seed)
    best = None
    for _ in range(max(1, restarts)):
        j = int(rng.integers(M.shape[1]))
        while True:
            nbrs = [k for k in (j - 1, j + 1) if 0 <= k < M.shape[1] and inner[k] > inner[j]]
            if not nbrs:
                break
            j = max(nbrs, key=lambda k: (inner[k], -k))
        if best is None or inner[j] > inner[best]:
            best = j
    return int(np.argmin(M[:, best])), best, float(inner[best])


def solve_g2(data: Dataset, arch: Arch | None, eps: float, loss="cw",
             cfg: G2Config = G2Config(), classifier_pool=None, adversary_pool=None,
             mode: str = "heuristic") -> EquilibriumRecord:
    """Maxmin play with the Adversary leading.

    With finite pools, ``mode="enumerate"`` returns the exact discretised
    maxmin and ``mode="heuristic"`` a local search over the bundles (never
    above the exact value).  Without pools, the bundle is ascended by
    sign-gradient steps against a network re-trained to the current
    bundle; the best (bundle, network) pair seen is returned.  The
    continuous variant is a heuristic: its inner minimum is itself only
    approximate.
    """
    loss = L.as_loss(loss)
    if classifier_pool is not None or adversary_pool is not None:
        M = payoff_matrix(classifier_pool, adversary_pool, data, loss)
        if mode == "enumerate":
            r, c, v = matrix_maxmin(M)
        elif mode == "heuristic":
            r, c, v = _local_maxmin(M, cfg.restarts, cfg.seed)
        else:
            raise ValueError(f"unknown mode {mode!r}")
        return EquilibriumRecord("G2", classifier_pool[r], adversary_pool[c], v, [],
                                 _context(data, eps, loss, mode=mode, rows=M.shape[0],
                                          cols=M.shape[1]),
                                 certified=mode == "enumerate")
    if not loss.differentiable:
        raise L.NonDifferentiableLossError("G2 is solved with mse, ce or cw")
    N, n = data.inputs.shape
    alpha = cfg.step_size if cfg.step_size is not None else eps / 4
    best = None
    trace = []
    for restart in range(max(1, cfg.restarts)):
        rng = np.random.default_rng([cfg.seed, restart])
        deltas = np.zeros((N, n)) if restart == 0 else rng.uniform(-eps, eps, size=(N, n))
        for _ in range(cfg.outer_iters if eps > 0 else 1):
            net, _ = train(arch.build(cfg.train.seed), data, loss, cfg.train,
                           inputs=data.inputs + deltas)
            bundle = AttackBundle(eps, deltas.copy(), data.id)
            value = payoff(net, bundle, data, loss)
            trace.append(value)
            if best is None or value > best[0]:
                best = (value, net, bundle)
            _, gX, _, _ = net.backward(data.inputs + deltas, loss.kind, data.labels0)
            deltas = np.clip(deltas + alpha * np.sign(gX), -eps, eps)
    value, net, bundle = best
    return EquilibriumRecord("G2", net, bundle, value, trace,
                             _context(data, eps, loss, mode="heuristic", seed=cfg.seed))


# -- G3: mixed strategies over finite pools ---------------------------------

def solve_g3_mixed(classifier_pool, adversary_pool, data: Dataset, loss="cw",
                   tol: float = 1e-6) -> EquilibriumRecord:
    """Mixed Nash equilibrium of the pool game M[i, j] = payoff(net_i, bundle_j)."""
    if not classifier_pool or not adversary_pool:
        raise InvalidPoolError("strategy pools must be non-empty")
    M = payoff_matrix(classifier_pool, adversary_pool, data, loss)
    fp = fictitious_play(M, tol)
    eps = max(b.epsilon for b in adversary_pool)
    rec = EquilibriumRecord("G3", MixedStrategy(fp.row), MixedStrategy(fp.col), fp.value,
                            fp.gaps, _context(data, eps, loss, gap=fp.gap, rows=M.shape[0],
                                              cols=M.shape[1]),
                            certified=fp.gap <= tol)
    rec.context["matrix"] = M.tolist()
    return rec


def mixed_payoff(M, row: MixedStrategy, col: MixedStrategy) -> float:
    return float(row.weights @ np.asarray(M) @ col.weights)


# -- ordering -----------------------------------------------------------------

@dataclass
class OrderingReport:
    g1: float
    g3: float
    g2: float
    upper_slack: float  # g1 - g3
    lower_slack: float  # g3 - g2
    tol: float
    certified: bool

    @property
    def holds(self) -> bool:
        return self.upper_slack >= -self.tol and self.lower_slack >= -self.tol

    @property
    def strict(self) -> bool:
        return self.upper_slack > self.tol and self.lower_slack > self.tol


def verify_ordering(g1, g3, g2, tol: float = 1e-6,
                    heuristic_slack: float = 0.0) -> OrderingReport:
    """Check value(G1) >= value(G3) >= value(G2).

    Accepts EquilibriumRecords or plain numbers.  Records from heuristic
    solvers get ``heuristic_slack`` added to the tolerance and the report is
    flagged non-certifying.
    """
    def unpack(r):
        if isinstance(r, EquilibriumRecord):
            return r.value, r.certified, r.context
        return float(r), True, None

    (v1, c1, x1), (v3, c3, x3), (v2, c2, x2) = unpack(g1), unpack(g3), unpack(g2)
    ctxs = [x for x in (x1, x3, x2) if x is not None]
    keys = ("dataset_id", "eps", "loss")
    for x in ctxs[1:]:
        if any(x.get(k) != ctxs[0].get(k) for k in keys):
            raise BindingError("records were computed for different data, radius or loss")
    certified = c1 and c2 and c3
    t = tol if certified else tol + heuristic_slack
    return OrderingReport(v1, v3, v2, v1 - v3, v3 - v2, t, certified)
