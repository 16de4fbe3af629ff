"""Datasets on the unit cube and the synthetic generators used by the experiments."""

from __future__ import annotations

import csv
import hashlib
from dataclasses import dataclass

import numpy as np


class DataValidationError(ValueError):
    pass


class DataParseError(ValueError):
    pass


class Dataset:
    """N labelled points of [0, 1]^n, labels in 1..m."""

    def __init__(self, inputs, labels, name: str = ""):
        X = np.array(inputs, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        y = np.asarray(labels)
        if X.ndim != 2 or X.shape[0] < 1:
            raise DataValidationError("dataset needs at least one sample")
        if y.shape != (X.shape[0],):
            raise DataValidationError(f"{X.shape[0]} inputs but labels of shape {y.shape}")
        if not np.all(np.isfinite(X)) or X.min() < 0.0 or X.max() > 1.0:
            raise DataValidationError("inputs must lie in [0, 1]")
        if not np.all(y == np.round(y)) or y.min() < 1:
            raise DataValidationError("labels must be integers starting at 1")
        self.inputs = X
        self.labels = y.astype(int)
        self.name = name
        self.inputs.flags.writeable = False
        self.labels.flags.writeable = False
        self._id = None

    @property
    def id(self) -> str:
        if self._id is None:
            h = hashlib.sha256()
            h.update(np.ascontiguousarray(self.inputs).tobytes())
            h.update(np.ascontiguousarray(self.labels, dtype=np.int64).tobytes())
            h.update(str(self.inputs.shape).encode())
            self._id = h.hexdigest()[:16]
        return self._id

    @property
    def size(self) -> int:
        return self.inputs.shape[0]

    @property
    def dim(self) -> int:
        return self.inputs.shape[1]

    @property
    def n_classes(self) -> int:
        return int(self.labels.max())

    @property
    def labels0(self) -> np.ndarray:
        return self.labels - 1

    def __len__(self):
        return self.size

    def subset(self, idx) -> "Dataset":
        return Dataset(self.inputs[idx], self.labels[idx], self.name)

    def __repr__(self):
        return f"Dataset(N={self.size}, n={self.dim}, id={self.id})"


@dataclass(frozen=True)
class SyntheticSpec:
    generator: str = "two_gaussians"
    n_samples: int = 200
    class_separation: float = 0.4
    noise: float = 0.05
    dims: int = 2
    seed: int = 0

    def __post_init__(self):
        if self.generator not in ("two_gaussians", "rings", "xor_grid"):
            raise ValueError(f"unknown generator {self.generator!r}")
        if not 1 <= self.dims <= 8:
            raise ValueError("dims must be in 1..8")
        if self.n_samples < 1:
            raise ValueError("n_samples must be positive")
        if self.noise < 0 or self.class_separation < 0:
            raise ValueError("noise and class_separation must be non-negative")


def _fit_unit_cube(X):
    # uniform shrink about the cube centre; identity when everything already fits
    dev = np.abs(X - 0.5).max()
    if dev > 0.5:
        X = 0.5 + (X - 0.5) * (0.5 / dev)
    return np.clip(X, 0.0, 1.0)


def generate(spec: SyntheticSpec) -> Dataset:
    """Deterministic synthetic data; labels alternate so classes are balanced within one.

    two_gaussians: class centres 0.5 -/+ separation/2 along the first axis.
    rings: two concentric circles (first two axes) of radii 0.2 and 0.2 + separation.
    xor_grid: clusters at the corners of a centred cube of side ``separation``,
    labelled by the parity of the corner.
    """
    rng = np.random.default_rng(spec.seed)
    N, d, s = spec.n_samples, spec.dims, spec.class_separation
    labels = np.arange(N) % 2 + 1
    rng.shuffle(labels)
    if spec.generator == "two_gaussians":
        centres = np.full((N, d), 0.5)
        centres[:, 0] += np.where(labels == 1, -s / 2, s / 2)
        X = centres + spec.noise * rng.standard_normal((N, d))
    elif spec.generator == "rings":
        radii = np.where(labels == 1, 0.2, 0.2 + s)
        X = np.full((N, d), 0.5)
        if d == 1:
            X[:, 0] += radii * rng.choice([-1.0, 1.0], size=N)
        else:
            angle = rng.uniform(0, 2 * np.pi, size=N)
            X[:, 0] += radii * np.cos(angle)
            X[:, 1] += radii * np.sin(angle)
        X += spec.noise * rng.standard_normal((N, d))
    else:
        corners = rng.integers(0, 2, size=(N, d))
        parity = corners.sum(axis=1) % 2
        # flip one coordinate where the parity disagrees with the assigned label
        flip = parity != (labels - 1)
        corners[flip, 0] = 1 - corners[flip, 0]
        X = 0.5 + s * (corners - 0.5) + spec.noise * rng.standard_normal((N, d))
    return Dataset(_fit_unit_cube(X), labels, name=spec.generator)


def load_csv(path) -> Dataset:
    """Rows ``x_1,...,x_n,label``; blank lines and lines starting with '#' are skipped."""
    rows, labels, width = [], [], None
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or not "".join(row).strip() or row[0].lstrip().startswith("#"):
                continue
            if len(row) < 2:
                raise DataParseError(f"{path}:{lineno}: need at least one feature and a label")
            if width is not None and len(row) != width:
                raise DataParseError(f"{path}:{lineno}: expected {width} fields, got {len(row)}")
            width = len(row)
            try:
                values = [float(v) for v in row[:-1]]
                label = float(row[-1])
            except ValueError as exc:
                raise DataParseError(f"{path}:{lineno}: {exc}") from None
            if label != int(label):
                raise DataParseError(f"{path}:{lineno}: label {row[-1]!r} is not an integer")
            rows.append(values)
            labels.append(int(label))
    if not rows:
        raise DataParseError(f"{path}: no data rows")
    return Dataset(np.array(rows), np.array(labels), name=str(path))


def save_csv(data: Dataset, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        for x, y in zip(data.inputs, data.labels):
            w.writerow([repr(float(v)) for v in x] + [int(y)])
