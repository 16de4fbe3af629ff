"""Clean loss, adversarial risk and accuracy, the empirical payoff, and the
Lipschitz certificates for ReLU networks."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from . import losses as L
from .attacks import AttackBundle, PgdConfig, build_bundle, certify_ball, pgd_batch
from .data import Dataset
from .network import Network, input_lipschitz, spectral_norm

DEFAULT_GRID_STEP = 0.0025

_METHODS = {"pgd": "pgd_lower_bound", "pgd_lower_bound": "pgd_lower_bound",
            "grid": "grid_exact", "grid_exact": "grid_exact"}


def _method(method: str) -> str:
    try:
        return _METHODS[method]
    except KeyError:
        raise ValueError(f"unknown method {method!r}; use pgd or grid") from None


@dataclass
class RobustnessReport:
    clean_accuracy: float
    adversarial_accuracy: float
    adversarial_risk: float
    payoff: float
    method: str
    eps: float
    loss: str = "cw"
    undecided: int = 0

    def to_dict(self) -> dict:
        return asdict(self)

    def to_text(self) -> str:
        rows = [(k, v) for k, v in self.to_dict().items()]
        w = max(len(k) for k, _ in rows)
        return "\n".join(f"{k:<{w}}  {v:.6f}" if isinstance(v, float) else f"{k:<{w}}  {v}"
                         for k, v in rows)


def clean_loss(net: Network, data: Dataset, loss) -> float:
    """Mean loss over the dataset (the empirical clean risk)."""
    loss = L.as_loss(loss)
    return float(np.mean(L.eval_batch(loss.kind, net.logits(data.inputs), data.labels0)))


def clean_accuracy(net: Network, data: Dataset) -> float:
    """Fraction of samples with cw margin < 0, i.e. y is the unique argmax."""
    margins = L.eval_batch("cw", net.logits(data.inputs), data.labels0)
    return float(np.mean(margins < 0))


def payoff(net: Network, bundle: AttackBundle, data: Dataset, loss) -> float:
    """Mean loss at the perturbed points x_i + delta_i."""
    loss = L.as_loss(loss)
    Xp = bundle.perturbed(data)
    return float(np.mean(L.eval_batch(loss.kind, net.logits(Xp), data.labels0)))


def adversarial_risk(net: Network, data: Dataset, eps: float, loss, method: str = "pgd",
                     cfg: PgdConfig = PgdConfig(), grid_step: float = DEFAULT_GRID_STEP) -> float:
    """Mean over samples of the worst loss in the eps-ball.

    ``pgd`` gives a lower bound; ``grid`` is exact on the lattice (n <= 3).
    """
    loss = L.as_loss(loss)
    exact = _method(method) == "grid_exact"
    bundle = build_bundle(net, data, eps, loss, cfg, exact=exact, grid_step=grid_step)
    return payoff(net, bundle, data, loss)


def robust_mask(net: Network, data: Dataset, eps: float, method: str = "grid",
                cfg: PgdConfig = PgdConfig(), grid_step: float = DEFAULT_GRID_STEP):
    """Per-sample verdicts: ``(robust, undecided)`` boolean arrays."""
    N = data.size
    if _method(method) == "pgd_lower_bound":
        _, vals = pgd_batch(net, data.inputs, data.labels0, eps, "cw", cfg)
        return vals < 0, np.zeros(N, dtype=bool)
    robust = np.zeros(N, dtype=bool)
    undecided = np.zeros(N, dtype=bool)
    for i, (x, y) in enumerate(zip(data.inputs, data.labels)):
        v = certify_ball(net, x, int(y), eps, grid_step)
        robust[i], undecided[i] = v.robust, not v.decided
    return robust, undecided


def adversarial_accuracy(net: Network, data: Dataset, eps: float, method: str = "grid",
                         cfg: PgdConfig = PgdConfig(),
                         grid_step: float = DEFAULT_GRID_STEP) -> float:
    """Fraction of samples whose whole eps-ball is classified correctly.

    ``grid`` certifies each ball (lattice search plus Lipschitz bisection),
    so it never overstates robustness.  ``pgd`` counts a sample robust when
    PGD fails to push the cw margin to >= 0; that is an upper bound.
    """
    robust, _ = robust_mask(net, data, eps, method, cfg, grid_step)
    return float(np.mean(robust))


def evaluate(net: Network, data: Dataset, eps: float, loss="cw", method: str = "pgd",
             cfg: PgdConfig = PgdConfig(), grid_step: float = DEFAULT_GRID_STEP) -> RobustnessReport:
    loss = L.as_loss(loss)
    m = _method(method)
    exact = m == "grid_exact"
    bundle = build_bundle(net, data, eps, loss, cfg, exact=exact, grid_step=grid_step)
    ar = payoff(net, bundle, data, loss)
    robust, undecided = robust_mask(net, data, eps, method, cfg, grid_step)
    return RobustnessReport(
        clean_accuracy=clean_accuracy(net, data),
        adversarial_accuracy=float(np.mean(robust)),
        adversarial_risk=ar,
        payoff=ar,
        method=m,
        eps=float(eps),
        loss=loss.kind,
        undecided=int(undecided.sum()),
    )


def _cube_corners(n: int, limit: int = 256, seed: int = 0) -> np.ndarray:
    if 2 ** n <= limit:
        return np.array(np.meshgrid(*([[0.0, 1.0]] * n), indexing="ij")).reshape(n, -1).T
    rng = np.random.default_rng(seed)
    return rng.integers(0, 2, size=(limit, n)).astype(float)


def lipschitz_certificate(net: Network, data: Dataset | None = None, eps: float = 0.0):
    """``(lambda_hat, omega_hat)``.

    lambda_hat = sqrt(n) * prod ||W_l||_2 bounds ||C(x + d) - C(x)||_2 by
    lambda_hat * ||d||_inf.  omega_hat is an empirical output bound: the
    largest ||C(x)||_2 over the dataset and the corners of the unit cube,
    plus lambda_hat * eps of slack.  It is an estimate, not a certificate.
    """
    lam = input_lipschitz(net)
    probes = _cube_corners(net.n_in)
    if data is not None:
        probes = np.vstack([probes, data.inputs])
    omega = float(np.linalg.norm(net.logits(probes), axis=1).max()) + lam * eps
    return lam, omega


def bounded_loss(kind, net: Network, data: Dataset | None = None, eps: float = 0.0) -> L.LossKind:
    """LossKind whose logit bound B is omega_hat, the empirical output bound.

    omega_hat bounds ||C(x)||_2 and hence every logit coordinate.
    """
    _, omega = lipschitz_certificate(net, data, eps)
    return L.LossKind(L.as_loss(kind).kind, max(omega, 1e-12))


def _hidden_states(net: Network, x) -> list[np.ndarray]:
    """Inputs to each layer: z_0 = x, z_k = relu(W_k z_{k-1} + b_k)."""
    zs = [np.asarray(x, dtype=float)]
    h = zs[0]
    for W, b in zip(net.weights[:-1], net.biases[:-1]):
        h = np.maximum(W @ h + b, 0.0)
        zs.append(h)
    return zs


def param_lipschitz_bound(net: Network, perturbed: Network, x, with_biases: bool = True) -> float:
    """Constructive bound on ||C_theta(x) - C_theta'(x)||_2 / ||theta - theta'||_2.

    Unrolls the layers from the output: the output layer contributes
    ||z_{D-1}||, and every earlier layer k contributes ||z_{k-1}|| times the
    spectral norms of the perturbed layers above it.  With biases each
    z is extended by a constant 1 (the bias column of [W | b]), which the
    weight-only chain omits.
    """
    zs = _hidden_states(net, x)
    norms = [np.sqrt(z @ z + 1.0) if with_biases else np.linalg.norm(z) for z in zs]
    hat = [spectral_norm(W) for W in perturbed.weights]
    D = net.depth
    total, prod = norms[D - 1], 1.0
    for k in range(2, D + 1):
        prod *= hat[D - k + 1]
        total += prod * norms[D - k]
    return float(total)


@dataclass
class ParamLipschitzReport:
    trials: int
    max_ratio: float
    min_slack: float  # min over trials of bound - ratio
    violations: int
    scale: float

    @property
    def ok(self) -> bool:
        return self.violations == 0


def param_lipschitz_check(net: Network, trials: int = 100, x=None, scale: float = 1e-2,
                          seed: int = 0, perturb_biases: bool = True) -> ParamLipschitzReport:
    """Sample random parameter perturbations alpha and compare the observed
    ratio ||C_theta(x) - C_{theta+alpha}(x)|| / ||alpha|| to the constructive bound.

    alpha = 0 is never drawn (the ratio is undefined there).  ``x`` defaults
    to a random point of the unit cube per trial.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rng = np.random.default_rng(seed)
    theta = net.flat_params()
    mask = np.ones_like(theta)
    if not perturb_biases:
        k = 0
        for W, b in zip(net.weights, net.biases):
            k += W.size
            mask[k:k + b.size] = 0.0
            k += b.size
    max_ratio, min_slack, violations = 0.0, np.inf, 0
    for _ in range(trials):
        xi = rng.uniform(0, 1, size=net.n_in) if x is None else np.asarray(x, dtype=float)
        alpha = rng.standard_normal(theta.size) * mask
        alpha *= scale * rng.uniform(0.1, 1.0) / np.linalg.norm(alpha)
        other = net.with_params(theta + alpha)
        diff = net.logits(xi[None, :])[0] - other.logits(xi[None, :])[0]
        ratio = np.linalg.norm(diff) / np.linalg.norm(alpha)
        bound = param_lipschitz_bound(net, other, xi, with_biases=perturb_biases)
        max_ratio = max(max_ratio, ratio)
        min_slack = min(min_slack, bound - ratio)
        # the bound is exact arithmetic; allow float rounding only
        violations += ratio > bound * (1 + 1e-12) + 1e-15
    return ParamLipschitzReport(trials, float(max_ratio), float(min_slack), int(violations), scale)
