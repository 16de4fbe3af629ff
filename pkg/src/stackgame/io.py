"""JSON/CSV persistence for networks, attack bundles, equilibrium records and
payoff matrices.  Floats are written with ``repr`` precision, so every
round trip is bit-exact."""

from __future__ import annotations

import csv
import hashlib
import json
from pathlib import Path

import numpy as np

from .attacks import AttackBundle
from .data import DataParseError
from .games import EquilibriumRecord, MatrixGame, MixedStrategy
from .network import Network

FORMAT_VERSION = 1


class FormatError(ValueError):
    pass


def file_hash(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _dump(obj, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=1, allow_nan=False) + "\n")


def _load(path) -> dict:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as e:
        raise FormatError(f"{path}: not valid JSON ({e})") from None
    if not isinstance(doc, dict):
        raise FormatError(f"{path}: expected a JSON object")
    if doc.get("format_version") != FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported format_version {doc.get('format_version')!r}")
    return doc


def model_to_dict(net: Network) -> dict:
    return {
        "layer_dims": list(net.layer_dims),
        "clip_bound": float(net.clip_bound),
        "weights": [W.ravel().tolist() for W in net.weights],
        "biases": [b.tolist() for b in net.biases],
        "seed": int(net.seed),
        "format_version": FORMAT_VERSION,
    }


def model_from_dict(doc: dict) -> Network:
    try:
        dims = [int(d) for d in doc["layer_dims"]]
        weights = [np.asarray(w, dtype=float).reshape(dims[l + 1], dims[l])
                   for l, w in enumerate(doc["weights"])]
        biases = [np.asarray(b, dtype=float) for b in doc["biases"]]
        return Network(dims, weights, biases, float(doc["clip_bound"]), int(doc.get("seed", 0)))
    except (KeyError, TypeError, ValueError, IndexError) as e:
        raise FormatError(f"malformed model: {e}") from None


def save_model(net: Network, path) -> None:
    _dump(model_to_dict(net), path)


def load_model(path) -> Network:
    return model_from_dict(_load(path))


def bundle_to_dict(bundle: AttackBundle) -> dict:
    return {
        "epsilon": float(bundle.epsilon),
        "dataset_id": bundle.dataset_id,
        "deltas": bundle.deltas.tolist(),
        "format_version": FORMAT_VERSION,
    }


def bundle_from_dict(doc: dict) -> AttackBundle:
    try:
        return AttackBundle(float(doc["epsilon"]), np.asarray(doc["deltas"], dtype=float),
                            str(doc["dataset_id"]))
    except (KeyError, TypeError, ValueError) as e:
        raise FormatError(f"malformed bundle: {e}") from None


def save_bundle(bundle: AttackBundle, path) -> None:
    _dump(bundle_to_dict(bundle), path)


def load_bundle(path) -> AttackBundle:
    return bundle_from_dict(_load(path))


def _strategy_to_dict(s, refs):
    if isinstance(s, Network):
        return {"type": "network", "model": model_to_dict(s)}
    if isinstance(s, AttackBundle):
        return {"type": "bundle", "bundle": bundle_to_dict(s)}
    if isinstance(s, MixedStrategy):
        out = {"type": "mixed", "weights": s.weights.tolist()}
        if refs is not None:
            out["pool"] = list(refs)
        return out
    raise TypeError(f"cannot serialise strategy of type {type(s).__name__}")


def _strategy_from_dict(doc):
    kind = doc.get("type")
    if kind == "network":
        return model_from_dict(doc["model"])
    if kind == "bundle":
        return bundle_from_dict(doc["bundle"])
    if kind == "mixed":
        return MixedStrategy(np.asarray(doc["weights"], dtype=float))
    raise FormatError(f"unknown strategy type {kind!r}")


def _plain(v):
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, (np.floating, np.integer, np.bool_)):
        return v.item()
    if isinstance(v, dict):
        return {str(k): _plain(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_plain(x) for x in v]
    return v


def record_to_dict(rec: EquilibriumRecord, classifier_refs=None, adversary_refs=None) -> dict:
    """``*_refs`` name the pool members behind a mixed strategy (e.g. file names)."""
    return {
        "game": rec.game,
        "value": float(rec.value),
        "certified": bool(rec.certified),
        "classifier": _strategy_to_dict(rec.classifier_strategy, classifier_refs),
        "adversary": _strategy_to_dict(rec.adversary_strategy, adversary_refs),
        "trace": _plain(rec.trace),
        "context": _plain(rec.context),
        "format_version": FORMAT_VERSION,
    }


def record_from_dict(doc: dict) -> EquilibriumRecord:
    try:
        return EquilibriumRecord(doc["game"], _strategy_from_dict(doc["classifier"]),
                                 _strategy_from_dict(doc["adversary"]), float(doc["value"]),
                                 list(doc.get("trace", [])), dict(doc.get("context", {})),
                                 bool(doc.get("certified", False)))
    except (KeyError, TypeError) as e:
        raise FormatError(f"malformed record: {e}") from None


def save_record(rec: EquilibriumRecord, path, classifier_refs=None, adversary_refs=None) -> None:
    _dump(record_to_dict(rec, classifier_refs, adversary_refs), path)


def load_record(path) -> EquilibriumRecord:
    return record_from_dict(_load(path))


def load_matrix(path) -> MatrixGame:
    """CSV of numbers, one row per classifier strategy."""
    rows = []
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            cells = [c.strip() for c in row]
            if not cells or cells == [""] or cells[0].startswith("#"):
                continue
            try:
                rows.append([float(c) for c in cells])
            except ValueError:
                raise DataParseError(f"{path}:{lineno}: non-numeric entry in {row!r}") from None
    if not rows:
        raise DataParseError(f"{path}: empty matrix file")
    if len({len(r) for r in rows}) != 1:
        raise DataParseError(f"{path}: rows have different lengths")
    return MatrixGame(np.array(rows))


def save_matrix(g, path) -> None:
    M = g.payoff if isinstance(g, MatrixGame) else np.asarray(g, dtype=float)
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        for row in M:
            w.writerow([repr(float(v)) for v in row])
