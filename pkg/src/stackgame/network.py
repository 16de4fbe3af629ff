"""Fully connected ReLU classifiers with hand-written reverse-mode gradients.

A network is a stack of affine maps ``W_l x + b_l`` with ReLU between them;
the last layer is affine and produces logits.  All parameters live in the
cube ``[-E, E]^K`` after :func:`project_params`.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import losses as L


class InputShapeError(ValueError):
    pass


@dataclass
class GradientPack:
    wrt_params: np.ndarray
    wrt_input: np.ndarray
    loss_value: float


@dataclass
class Network:
    layer_dims: list[int]
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    clip_bound: float = 1.0
    seed: int = 0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.layer_dims = [int(d) for d in self.layer_dims]
        if len(self.layer_dims) < 2 or min(self.layer_dims) < 1:
            raise ValueError("layer_dims needs at least input and output sizes, all positive")
        self.weights = [np.asarray(W, dtype=float) for W in self.weights]
        self.biases = [np.asarray(b, dtype=float) for b in self.biases]
        if len(self.weights) != self.depth or len(self.biases) != self.depth:
            raise ValueError("one weight matrix and one bias per layer expected")
        for l, (W, b) in enumerate(zip(self.weights, self.biases)):
            shape = (self.layer_dims[l + 1], self.layer_dims[l])
            if W.shape != shape or b.shape != (shape[0],):
                raise ValueError(f"layer {l + 1}: expected W{shape}, b({shape[0]},), "
                                 f"got {W.shape}, {b.shape}")
        if not self.clip_bound > 0:
            raise ValueError("clip_bound must be positive")

    @classmethod
    def init(cls, layer_dims, clip_bound: float = 1.0, seed: int = 0) -> "Network":
        """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights and biases, clipped to [-E, E]."""
        rng = np.random.default_rng(seed)
        weights, biases = [], []
        for n_prev, n_next in zip(layer_dims[:-1], layer_dims[1:]):
            r = 1.0 / np.sqrt(n_prev)
            weights.append(rng.uniform(-r, r, size=(n_next, n_prev)))
            biases.append(rng.uniform(-r, r, size=n_next))
        return project_params(cls(list(layer_dims), weights, biases, clip_bound, seed))

    @property
    def depth(self) -> int:
        return len(self.layer_dims) - 1

    @property
    def n_in(self) -> int:
        return self.layer_dims[0]

    @property
    def n_out(self) -> int:
        return self.layer_dims[-1]

    @property
    def param_count(self) -> int:
        return sum(a * b + b for a, b in zip(self.layer_dims[:-1], self.layer_dims[1:]))

    def copy(self) -> "Network":
        return Network(list(self.layer_dims), [W.copy() for W in self.weights],
                       [b.copy() for b in self.biases], self.clip_bound, self.seed,
                       dict(self.meta))

    def flat_params(self) -> np.ndarray:
        """Parameters in layer order, each layer as W (row-major) then b."""
        parts = []
        for W, b in zip(self.weights, self.biases):
            parts += [W.ravel(), b]
        return np.concatenate(parts)

    def with_params(self, theta) -> "Network":
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.param_count,):
            raise ValueError(f"expected {self.param_count} parameters, got {theta.shape}")
        weights, biases, k = [], [], 0
        for W, b in zip(self.weights, self.biases):
            weights.append(theta[k:k + W.size].reshape(W.shape))
            k += W.size
            biases.append(theta[k:k + b.size].copy())
            k += b.size
        return Network(list(self.layer_dims), weights, biases, self.clip_bound, self.seed,
                       dict(self.meta))

    def logits(self, X) -> np.ndarray:
        """Batched forward pass: X of shape (N, n) -> logits (N, m)."""
        X = self._check_batch(X)
        h = X
        for l, (W, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ W.T + b
            if l < self.depth - 1:
                h = np.maximum(h, 0.0)
        return h

    def _check_batch(self, X):
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.n_in:
            raise InputShapeError(f"expected inputs of shape (N, {self.n_in}), got {X.shape}")
        return X

    def backward(self, X, loss: str, Y0):
        """Loss values and gradients for a batch.

        Returns ``(values, grad_X, grad_W, grad_b)``: per-sample losses (N,),
        per-sample input gradients (N, n), and parameter gradients summed
        over the batch.  ReLU'(0) is taken to be 0.
        """
        X = self._check_batch(X)
        acts, pres = [X], []
        h = X
        for l, (W, b) in enumerate(zip(self.weights, self.biases)):
            a = h @ W.T + b
            pres.append(a)
            h = np.maximum(a, 0.0) if l < self.depth - 1 else a
            acts.append(h)
        Y0 = np.asarray(Y0)
        values = L.eval_batch(loss, h, Y0)
        G = L.grad_batch(loss, h, Y0)
        grad_W = [None] * self.depth
        grad_b = [None] * self.depth
        for l in range(self.depth - 1, -1, -1):
            if l < self.depth - 1:
                G = G * (pres[l] > 0)
            grad_W[l] = G.T @ acts[l]
            grad_b[l] = G.sum(axis=0)
            G = G @ self.weights[l]
        return values, G, grad_W, grad_b


def _as_vector(net: Network, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != (net.n_in,):
        raise InputShapeError(f"expected an input of length {net.n_in}, got shape {x.shape}")
    return x


def forward(net: Network, x) -> np.ndarray:
    return net.logits(_as_vector(net, x)[None, :])[0]


def classify(net: Network, x) -> int:
    """1-based label of the largest logit; the smallest index wins ties."""
    return int(np.argmax(forward(net, x))) + 1


def classify_batch(net: Network, X) -> np.ndarray:
    return np.argmax(net.logits(X), axis=1) + 1


def flatten_grads(grad_W, grad_b) -> np.ndarray:
    parts = []
    for gW, gb in zip(grad_W, grad_b):
        parts += [gW.ravel(), gb]
    return np.concatenate(parts)


def gradients(net: Network, x, y: int, loss) -> GradientPack:
    loss = L.as_loss(loss)
    if not loss.differentiable:
        raise L.NonDifferentiableLossError(f"{loss.kind} has no gradient")
    x = _as_vector(net, x)
    if not 1 <= y <= net.n_out:
        raise ValueError(f"label {y} outside 1..{net.n_out}")
    values, gX, gW, gb = net.backward(x[None, :], loss.kind, np.array([y - 1]))
    return GradientPack(flatten_grads(gW, gb), gX[0], float(values[0]))


def project_params(net: Network) -> Network:
    """Clamp every parameter to [-E, E]; returns a new network."""
    E = net.clip_bound
    return Network(list(net.layer_dims), [np.clip(W, -E, E) for W in net.weights],
                   [np.clip(b, -E, E) for b in net.biases], E, net.seed, dict(net.meta))


def param_count(net: Network) -> int:
    return net.param_count


def spectral_norm(W, iters: int = 100, tol: float = 1e-10) -> float:
    """Largest singular value by power iteration on W^T W."""
    W = np.asarray(W, dtype=float)
    if not np.any(W):
        return 0.0
    v = np.ones(W.shape[1]) + 0.01 * np.arange(W.shape[1])
    v /= np.linalg.norm(v)
    sigma = 0.0
    for _ in range(iters):
        u = W @ v
        w = W.T @ u
        nw = np.linalg.norm(w)
        if nw == 0.0:
            # start vector in the null space; fall back to a coordinate axis
            v = np.zeros(W.shape[1])
            v[np.argmax(np.linalg.norm(W, axis=0))] = 1.0
            continue
        new_sigma = np.sqrt(nw)
        v = w / nw
        if abs(new_sigma - sigma) <= tol * max(new_sigma, 1.0):
            sigma = new_sigma
            break
        sigma = new_sigma
    return float(np.linalg.norm(W @ v))


def input_lipschitz(net: Network) -> float:
    """sqrt(n) * prod ||W_l||_2: bounds ||C(x+d) - C(x)||_2 / ||d||_inf (biases cancel)."""
    return float(np.sqrt(net.n_in) * np.prod([spectral_norm(W) for W in net.weights]))


def margin_lipschitz(net: Network, y: int) -> float:
    """Lipschitz constant of the cw margin at label ``y`` w.r.t. the inf-norm on inputs.

    Each difference z_l - z_y only sees the row difference of the last
    layer, which is tighter than sqrt(2) * ||W_D||_2.
    """
    inner = np.sqrt(net.n_in) * np.prod([spectral_norm(W) for W in net.weights[:-1]])
    WD = net.weights[-1]
    rows = np.delete(WD, y - 1, axis=0) - WD[y - 1]
    return float(inner * np.linalg.norm(rows, axis=1).max())
