"""Training losses on logits: mse, cross-entropy, Carlini-Wagner margin, and
the 0/-1 adversarial indicator derived from the margin sign.

Labels are 1-based everywhere in the public API.  The batched helpers
(``eval_batch``/``grad_batch``) take 0-based integer label arrays and are
what the solvers use internally.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

KINDS = ("mse", "ce", "cw", "adv01")
DIFFERENTIABLE = ("mse", "ce", "cw")


class NonDifferentiableLossError(ValueError):
    pass


class DegenerateLabelSpaceError(ValueError):
    pass


@dataclass(frozen=True)
class LossKind:
    kind: str
    logit_bound: float = 1.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown loss kind {self.kind!r}; expected one of {KINDS}")
        if not self.logit_bound > 0:
            raise ValueError("logit_bound must be positive")

    @property
    def differentiable(self) -> bool:
        return self.kind in DIFFERENTIABLE

    def __str__(self):
        return self.kind


def as_loss(loss) -> LossKind:
    if isinstance(loss, LossKind):
        return loss
    return LossKind(str(loss))


def _check_label(z, y):
    m = z.shape[-1]
    if not 1 <= y <= m:
        raise ValueError(f"label {y} outside 1..{m}")


def _margin_batch(Z, Y0):
    """cw margin and the index of the best competing logit (lowest index on ties)."""
    N, m = Z.shape
    if m < 2:
        raise DegenerateLabelSpaceError("cw/adv01 need at least two labels")
    rows = np.arange(N)
    masked = Z.copy()
    masked[rows, Y0] = -np.inf
    other = np.argmax(masked, axis=1)
    return masked[rows, other] - Z[rows, Y0], other


def eval_batch(kind: str, Z: np.ndarray, Y0: np.ndarray) -> np.ndarray:
    """Per-row loss for logits ``Z`` (N, m) and 0-based labels ``Y0`` (N,)."""
    N, m = Z.shape
    rows = np.arange(N)
    if kind == "mse":
        T = np.zeros_like(Z)
        T[rows, Y0] = 1.0
        return np.sum((Z - T) ** 2, axis=1)
    if kind == "ce":
        zmax = Z.max(axis=1)
        lse = zmax + np.log(np.sum(np.exp(Z - zmax[:, None]), axis=1))
        return lse - Z[rows, Y0]
    margin, _ = _margin_batch(Z, Y0)
    if kind == "cw":
        return margin
    if kind == "adv01":
        return np.where(margin >= 0, 0.0, -1.0)
    raise ValueError(f"unknown loss kind {kind!r}")


def grad_batch(kind: str, Z: np.ndarray, Y0: np.ndarray) -> np.ndarray:
    """Gradient of ``eval_batch`` with respect to each logit row."""
    N, m = Z.shape
    rows = np.arange(N)
    if kind == "mse":
        T = np.zeros_like(Z)
        T[rows, Y0] = 1.0
        return 2.0 * (Z - T)
    if kind == "ce":
        E = np.exp(Z - Z.max(axis=1, keepdims=True))
        G = E / E.sum(axis=1, keepdims=True)
        G[rows, Y0] -= 1.0
        return G
    if kind == "cw":
        _, other = _margin_batch(Z, Y0)
        G = np.zeros_like(Z)
        G[rows, other] = 1.0
        G[rows, Y0] = -1.0
        return G
    if kind == "adv01":
        raise NonDifferentiableLossError("adv01 is piecewise constant; use cw as the surrogate")
    raise ValueError(f"unknown loss kind {kind!r}")


def eval_loss(kind, z, y: int) -> float:
    loss = as_loss(kind)
    z = np.asarray(z, dtype=float)
    _check_label(z, y)
    return float(eval_batch(loss.kind, z[None, :], np.array([y - 1]))[0])


def grad_loss(kind, z, y: int) -> np.ndarray:
    loss = as_loss(kind)
    z = np.asarray(z, dtype=float)
    _check_label(z, y)
    return grad_batch(loss.kind, z[None, :], np.array([y - 1]))[0]


def lipschitz_constant(kind, m: int | None = None) -> float:
    """Lipschitz constant in z over the cube [-B, B]^m.

    mse needs the label-space size ``m``; ce and cw are bounded by sqrt(2)
    independently of m and B.  The mse value 2 sqrt(m) max(B, 1) is the
    customary one but understates the true supremum whenever z_y < 1 - B;
    :func:`mse_gradient_sup` gives the sharp figure.
    """
    loss = as_loss(kind)
    if loss.kind == "mse":
        if m is None:
            raise ValueError("mse constant depends on the number of labels m")
        return 2.0 * np.sqrt(m) * max(loss.logit_bound, 1.0)
    if loss.kind in ("ce", "cw"):
        return float(np.sqrt(2.0))
    raise NonDifferentiableLossError("adv01 has no Lipschitz constant")


def mse_gradient_sup(m: int, B: float) -> float:
    """Sharp sup of ||grad mse|| over [-B, B]^m: 2 sqrt((B + 1)^2 + (m - 1) B^2),
    attained with z_y = -B and every other coordinate at +-B."""
    if m < 2 or not B > 0:
        raise ValueError("need m >= 2 and B > 0")
    return float(2.0 * np.sqrt((B + 1.0) ** 2 + (m - 1) * B ** 2))
