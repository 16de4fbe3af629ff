"""Experiment runner: resolves a configuration, dispatches to the library,
and writes every artifact under ``<root>/<experiment>/<config-hash>/``
together with a manifest (config hash, versions, seeds, input hashes,
output hashes).  Reports render records as markdown and CSV tables."""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
import os
import platform
import traceback
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from . import io as sio
from .attacks import PgdConfig, build_bundle
from .data import Dataset, SyntheticSpec, generate, load_csv
from .games import (G2Config, fictitious_play, matrix_maxmin, matrix_minmax, records_from_pools,
                    solve_g1, solve_g2, solve_g3_mixed, verify_ordering)
from .metrics import DEFAULT_GRID_STEP, adversarial_accuracy, clean_accuracy, evaluate, payoff
from .network import Network
from .training import Arch, TrainConfig
from .tradeoff import check_tradeoff, constrained_retrain, nu_ball_probe, solve_gt

log = logging.getLogger(__name__)

EXPERIMENTS = ("train", "attack", "eval", "game", "matrix", "tradeoff", "retrain",
               "nuprobe", "report")
DEFAULT_ROOT = "out"


class ConfigError(ValueError):
    pass


class UsageError(ValueError):
    pass


@dataclass
class RunResult:
    status: int
    out_dir: Path
    manifest: dict
    summary: dict = field(default_factory=dict)
    text: str = ""


def output_root(explicit=None) -> Path:
    return Path(explicit or os.environ.get("STACKGAME_OUT") or DEFAULT_ROOT)


def config_hash(config: dict) -> str:
    canon = json.dumps(config, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(canon.encode()).hexdigest()[:16]


def _versions() -> dict:
    return {"stackgame": __version__, "numpy": np.__version__,
            "python": platform.python_version()}


# -- config helpers ----------------------------------------------------------

def _require(cfg, *keys):
    missing = [k for k in keys if cfg.get(k) is None]
    if missing:
        raise ConfigError(f"{cfg['experiment']}: missing setting(s) {', '.join(missing)}")


def _finite(cfg):
    for k, v in cfg.items():
        if isinstance(v, float) and not math.isfinite(v) and k != "budget_pct":
            raise ConfigError(f"{k} must be finite")


def _input_files(cfg) -> list[str]:
    keys = ("data", "model", "file", "pool_dir")
    files = [cfg[k] for k in keys if isinstance(cfg.get(k), str)]
    files += list(cfg.get("records", []))
    return files


def _hash_inputs(cfg) -> dict:
    hashes = {}
    for f in _input_files(cfg):
        p = Path(f)
        if p.is_dir():
            for q in sorted(p.glob("*.json")):
                hashes[str(q)] = sio.file_hash(q)
        elif p.is_file():
            hashes[str(p)] = sio.file_hash(p)
        else:
            raise FileNotFoundError(f"input not found: {f}")
    return hashes


def _dataset(cfg) -> Dataset:
    d = cfg.get("data")
    if isinstance(d, dict):
        return generate(SyntheticSpec(**d))
    if d is None:
        raise ConfigError("a dataset (file path or generator spec) is required")
    return load_csv(d)


def _arch(cfg, data: Dataset) -> Arch:
    dims = cfg.get("layer_dims")
    if dims is None:
        dims = [data.dim, 16, 16, max(data.n_classes, 2)]
    dims = [int(v) for v in dims]
    if dims[0] != data.dim:
        raise ConfigError(f"layer_dims start with {dims[0]} but the data has {data.dim} inputs")
    return Arch(tuple(dims), float(cfg.get("clip_bound", 1.0)))


def _train_cfg(cfg, seed=None) -> TrainConfig:
    return TrainConfig(epochs=int(cfg.get("epochs", 200)), lr=float(cfg.get("lr", 0.01)),
                       batch_size=cfg.get("batch_size"), optimizer=cfg.get("optimizer", "adam"),
                       attack=PgdConfig(steps=int(cfg.get("train_steps", 10)), restarts=1),
                       seed=int(cfg.get("seed", 0) if seed is None else seed))


def _pgd_cfg(cfg) -> PgdConfig:
    return PgdConfig(steps=int(cfg.get("steps", 40)), restarts=int(cfg.get("restarts", 4)),
                     seed=int(cfg.get("seed", 0)))


def _eps(cfg) -> float:
    eps = float(cfg.get("eps", 0.0))
    if eps < 0:
        raise ConfigError("eps must be non-negative")
    return eps


# -- experiments -------------------------------------------------------------
# Each returns (files, summary, text); files maps names to (kind, payload).

def _exp_train(cfg):
    data = _dataset(cfg)
    arch = _arch(cfg, data)
    loss = cfg.get("loss", "ce")
    rec = solve_gt(data, arch, _eps(cfg), loss, float(cfg.get("lam", 0.0)), _train_cfg(cfg),
                   _pgd_cfg(cfg))
    net = rec.classifier_strategy
    net.seed = int(cfg.get("seed", 0))
    summary = {"value": rec.value, "clean_accuracy": clean_accuracy(net, data),
               "final_train_payoff": rec.trace[-1] if rec.trace else None}
    files = {"model.json": ("model", net), "bundle.json": ("bundle", rec.adversary_strategy),
             "record.json": ("record", rec),
             "trace.csv": ("rows", [("epoch", "payoff")] + list(enumerate(rec.trace)))}
    return files, summary, _kv(summary)


def _exp_attack(cfg):
    _require(cfg, "model", "data")
    net, data = sio.load_model(cfg["model"]), _dataset(cfg)
    loss = cfg.get("loss", "cw")
    bundle = build_bundle(net, data, _eps(cfg), loss, _pgd_cfg(cfg), exact=bool(cfg.get("exact")),
                          grid_step=float(cfg.get("grid_step", DEFAULT_GRID_STEP)))
    summary = {"payoff": payoff(net, bundle, data, loss), "eps": bundle.epsilon,
               "dataset_id": data.id}
    files = {"bundle.json": ("bundle", bundle)}
    if cfg.get("out_file"):
        files[cfg["out_file"]] = ("bundle", bundle)
    return files, summary, _kv(summary)


def _exp_eval(cfg):
    _require(cfg, "model", "data")
    net, data = sio.load_model(cfg["model"]), _dataset(cfg)
    rep = evaluate(net, data, _eps(cfg), cfg.get("loss", "cw"), cfg.get("method", "pgd"),
                   _pgd_cfg(cfg), float(cfg.get("grid_step", DEFAULT_GRID_STEP)))
    d = rep.to_dict()
    text = rep.to_text() + "\n" + json.dumps(d, indent=1)
    return {"report.json": ("json", d)}, d, text


def _pool(cfg, data):
    """Load pools from a directory, or build them by training and attacking."""
    loss = cfg.get("loss", "cw")
    eps = _eps(cfg)
    if cfg.get("pool_dir"):
        d = Path(cfg["pool_dir"])
        nets = [sio.load_model(p) for p in sorted(d.glob("model*.json"))]
        bundles = [sio.load_bundle(p) for p in sorted(d.glob("bundle*.json"))]
        names = ([p.name for p in sorted(d.glob("model*.json"))],
                 [p.name for p in sorted(d.glob("bundle*.json"))])
        return nets, bundles, names
    arch = _arch(cfg, data)
    seeds = cfg.get("seeds") or [0, 1, 2]
    nets = []
    for s in seeds:
        for e in (0.0, eps):
            nets.append(solve_g1(data, arch, e, loss if loss != "adv01" else "cw",
                                 _train_cfg(cfg, s)).classifier_strategy)
    bundles = [build_bundle(n, data, eps, loss, _pgd_cfg(cfg)) for n in nets]
    names = ([f"net{i}" for i in range(len(nets))], [f"bundle{j}" for j in range(len(bundles))])
    return nets, bundles, names


def _exp_game(cfg):
    _require(cfg, "game")
    data = _dataset(cfg)
    game, loss, eps = cfg["game"], cfg.get("loss", "cw"), _eps(cfg)
    files = {}
    if game == "g1":
        rec = solve_g1(data, _arch(cfg, data), eps, loss, _train_cfg(cfg), _pgd_cfg(cfg))
        files["model.json"] = ("model", rec.classifier_strategy)
        files["bundle.json"] = ("bundle", rec.adversary_strategy)
    elif game == "g2":
        if cfg.get("pool_dir") or cfg.get("mode") == "enumerate":
            nets, bundles, _ = _pool(cfg, data)
            rec = solve_g2(data, None, eps, loss, classifier_pool=nets, adversary_pool=bundles,
                           mode=cfg.get("mode", "enumerate"))
        else:
            g2 = G2Config(outer_iters=int(cfg.get("outer_iters", 10)),
                          train=_train_cfg(cfg), seed=int(cfg.get("seed", 0)))
            rec = solve_g2(data, _arch(cfg, data), eps, loss, g2)
    elif game == "g3":
        nets, bundles, names = _pool(cfg, data)
        rec = solve_g3_mixed(nets, bundles, data, loss, float(cfg.get("tol", 1e-6)))
        recs = records_from_pools(nets, bundles, data, loss, float(cfg.get("tol", 1e-6)))
        order = verify_ordering(recs["G1"], rec, recs["G2"])
        files["ordering.json"] = ("json", {"g1": order.g1, "g3": order.g3, "g2": order.g2,
                                           "holds": order.holds, "certified": order.certified})
        files["matrix.csv"] = ("matrix", recs["matrix"])
        files["fp_gap.csv"] = ("rows", [("iteration", "gap")]
                               + [(i + 1, g) for i, g in enumerate(rec.trace)])
        files["record.json"] = ("record", rec, names)
    else:
        raise ConfigError(f"unknown game {game!r}; use g1, g2 or g3")
    files.setdefault("record.json", ("record", rec))
    if cfg.get("out_file"):
        files[cfg["out_file"]] = files["record.json"]
    summary = {"game": rec.game, "value": rec.value, "certified": rec.certified}
    return files, summary, _kv(summary)


def _exp_matrix(cfg):
    _require(cfg, "file")
    g = sio.load_matrix(cfg["file"])
    how = cfg.get("solve", "mixed")
    tol = float(cfg.get("tol", 1e-6))
    out = {"solve": how, "shape": list(g.shape)}
    files = {}
    if how == "minmax":
        r, c, v = matrix_minmax(g)
        out.update(row=r + 1, col=c + 1, value=v)
    elif how == "maxmin":
        r, c, v = matrix_maxmin(g)
        out.update(row=r + 1, col=c + 1, value=v)
    elif how == "mixed":
        fp = fictitious_play(g, tol)
        out.update(row_mix=fp.row.tolist(), col_mix=fp.col.tolist(), value=fp.value,
                   gap=fp.gap, iterations=fp.iterations)
        files["fp_gap.csv"] = ("rows", [("iteration", "gap")]
                               + [(i + 1, x) for i, x in enumerate(fp.gaps)])
    elif how == "all":
        out["minmax"] = matrix_minmax(g)[2]
        out["maxmin"] = matrix_maxmin(g)[2]
        fp = fictitious_play(g, tol)
        out.update(mixed=fp.value, row_mix=fp.row.tolist(), col_mix=fp.col.tolist(), gap=fp.gap)
    else:
        raise ConfigError(f"unknown solve mode {how!r}; use minmax, maxmin or mixed")
    files["result.json"] = ("json", out)
    return files, out, _kv(out)


def _exp_tradeoff(cfg):
    data = _dataset(cfg)
    arch = _arch(cfg, data)
    eps, loss = _eps(cfg), cfg.get("loss", "ce")
    lam = float(cfg.get("lam", 0.5))
    seeds = [int(s) for s in (cfg.get("seeds") or [0, 1, 2, 3, 4])]
    threads = max(1, int(cfg.get("threads", 1)))

    def run_one(args):
        s, l = args
        return solve_gt(data, arch, eps, loss, l, _train_cfg(cfg, s), _pgd_cfg(cfg))

    jobs = [(s, 0.0) for s in seeds] + [(s, lam) for s in seeds]
    with ThreadPoolExecutor(threads) as ex:
        recs = list(ex.map(run_one, jobs))
    rs, rt = recs[:len(seeds)], recs[len(seeds):]
    rep = check_tradeoff(rs, rt, data, eps, loss, _pgd_cfg(cfg))
    d = {"lam": lam, "seeds": seeds, "adv_payoff_s": rep.adv_payoff_s,
         "adv_payoff_t": rep.adv_payoff_t, "clean_loss_s": rep.clean_loss_s,
         "clean_loss_t": rep.clean_loss_t, "se_adv": rep.se_adv, "se_clean": rep.se_clean,
         "robust_ok": rep.robust_ok, "accurate_ok": rep.accurate_ok, "per_seed": rep.per_run}
    files = {"tradeoff.json": ("json", d)}
    if cfg.get("out_file"):
        files[cfg["out_file"]] = ("json", d)
    return files, d, _kv({k: v for k, v in d.items() if k != "per_seed"})


def _exp_retrain(cfg):
    _require(cfg, "model", "data", "budget_pct")
    net, data = sio.load_model(cfg["model"]), _dataset(cfg)
    budget = float(cfg["budget_pct"])
    new = constrained_retrain(net, data, budget, _train_cfg(cfg), cfg.get("loss", "ce"))
    d = {"budget_pct": budget, "clean_accuracy_before": clean_accuracy(net, data),
         "clean_accuracy_after": clean_accuracy(new, data)}
    eps = _eps(cfg)
    if eps > 0:
        method = "grid" if data.dim <= 3 else "pgd"
        d["eps"], d["aa_method"] = eps, method
        d["adversarial_accuracy_before"] = adversarial_accuracy(net, data, eps, method)
        d["adversarial_accuracy_after"] = adversarial_accuracy(new, data, eps, method)
    return {"model.json": ("model", new), "retrain.json": ("json", d)}, d, _kv(d)


def _exp_nuprobe(cfg):
    _require(cfg, "model", "data", "nu")
    net, data = sio.load_model(cfg["model"]), _dataset(cfg)
    rep = nu_ball_probe(net, data, _eps(cfg), float(cfg["nu"]), int(cfg.get("trials", 20)),
                        float(cfg.get("grid_step", DEFAULT_GRID_STEP)), int(cfg.get("seed", 0)))
    d = {"nu": rep.nu, "trials": rep.trials, "base_payoff": rep.base_payoff,
         "unchanged_fraction": rep.unchanged_fraction, "stable_nu": rep.stable_nu,
         "tested": rep.tested}
    return {"nuprobe.json": ("json", d)}, d, _kv({k: v for k, v in d.items() if k != "tested"})


def _exp_report(cfg):
    paths = cfg.get("records") or []
    if not paths:
        raise UsageError("report needs at least one record file")
    recs = [sio.load_record(p) for p in paths]
    data = _dataset(cfg) if cfg.get("data") else None
    md, table, plots = report(recs, data, names=[Path(p).stem for p in paths],
                              eps_grid=cfg.get("eps_grid"))
    files = {"report.md": ("text", md), "table.csv": ("rows", table)}
    for name, rows in plots.items():
        files[name] = ("rows", rows)
    return files, {"records": len(recs)}, md


_DISPATCH = {"train": _exp_train, "attack": _exp_attack, "eval": _exp_eval, "game": _exp_game,
             "matrix": _exp_matrix, "tradeoff": _exp_tradeoff, "retrain": _exp_retrain,
             "nuprobe": _exp_nuprobe, "report": _exp_report}


def _kv(d: dict) -> str:
    w = max((len(k) for k in d), default=0)
    return "\n".join(f"{k:<{w}}  {v}" for k, v in d.items())


def _write(path: Path, kind, payload, extra=None):
    if kind == "model":
        sio.save_model(payload, path)
    elif kind == "bundle":
        sio.save_bundle(payload, path)
    elif kind == "record":
        refs = extra or (None, None)
        sio.save_record(payload, path, *refs)
    elif kind == "json":
        sio._dump(sio._plain(payload), path)
    elif kind == "matrix":
        sio.save_matrix(payload, path)
    elif kind == "rows":
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as fh:
            csv.writer(fh).writerows(payload)
    elif kind == "text":
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(payload)
    else:
        raise ValueError(kind)


def run(config: dict, root=None) -> RunResult:
    """Run one experiment; never raises for experiment failures.

    On failure the output directory still receives a manifest with
    ``status: "error"`` and the error type and message, and the status
    code is nonzero (2 for usage/config errors, 1 otherwise).
    """
    cfg = {k: v for k, v in dict(config).items() if v is not None}
    exp = cfg.get("experiment")
    try:
        inputs, input_error = _hash_inputs(cfg), None
    except OSError as e:
        inputs, input_error = {}, e
    # the hash covers input contents too, so edited files get a fresh directory
    chash = config_hash({"config": cfg, "inputs": inputs})
    out_dir = output_root(root or cfg.get("out")) / str(exp) / chash
    manifest = {"experiment": exp, "config_hash": chash, "config": cfg,
                "versions": _versions(), "seeds": {"root": int(cfg.get("seed", 0)),
                                                   "runs": cfg.get("seeds")}}
    try:
        if exp not in _DISPATCH:
            raise ConfigError(f"unknown experiment {exp!r}; choose from {', '.join(EXPERIMENTS)}")
        if input_error is not None:
            raise input_error
        _finite(cfg)
        manifest["inputs"] = inputs
        files, summary, text = _DISPATCH[exp](cfg)
    except Exception as e:  # reported through the manifest
        status = 2 if isinstance(e, (ConfigError, UsageError)) else 1
        manifest.update(status="error", error={"type": type(e).__name__, "message": str(e)})
        log.debug("run failed\n%s", traceback.format_exc())
        out_dir.mkdir(parents=True, exist_ok=True)
        sio._dump(manifest, out_dir / "manifest.json")
        return RunResult(status, out_dir, manifest, text=f"error: {type(e).__name__}: {e}")
    outputs = {}
    for name, spec in files.items():
        kind, payload, *extra = spec
        p = Path(name) if os.path.isabs(name) or name == cfg.get("out_file") else out_dir / name
        _write(p, kind, payload, extra[0] if extra else None)
        if p.parent == out_dir:
            outputs[name] = sio.file_hash(p)
    if "report.md" not in files:
        md = f"# {exp}\n\n```\n{text}\n```\n"
        _write(out_dir / "report.md", "text", md)
        outputs["report.md"] = sio.file_hash(out_dir / "report.md")
    manifest.update(status="ok", summary=sio._plain(summary), outputs=outputs,
                    outputs_hash=hashlib.sha256(json.dumps(outputs, sort_keys=True)
                                                .encode()).hexdigest())
    sio._dump(manifest, out_dir / "manifest.json")
    return RunResult(0, out_dir, manifest, sio._plain(summary), text)


# -- reports -----------------------------------------------------------------

def _fmt(v):
    if isinstance(v, float):
        return f"{v:.6g}"
    return "" if v is None else str(v)


def _md_table(rows) -> str:
    head, *body = [[_fmt(c) for c in r] for r in rows]
    widths = [max(len(r[i]) for r in [head] + body) for i in range(len(head))]
    line = lambda r: "| " + " | ".join(c.ljust(w) for c, w in zip(r, widths)) + " |"
    return "\n".join([line(head), "|" + "|".join("-" * (w + 2) for w in widths) + "|"]
                     + [line(r) for r in body])


def report(records, data: Dataset | None = None, names=None, eps_grid=None):
    """Render records as ``(markdown, table_rows, plot_data)``.

    The table has one row per record.  When G1, G2 and G3 records over the
    same context are all present, the value chain G1 >= G3 >= G2 is checked
    and marked PASS or FAIL.  Plot data: fictitious-play gap per iteration
    for mixed records, and, when ``data`` is given, adversarial accuracy
    against eps for every record with a network strategy.
    """
    records = list(records)
    if not records:
        raise UsageError("report needs at least one record")
    names = names or [f"record{i + 1}" for i in range(len(records))]
    keys = ("dataset_id", "eps", "loss")
    ctx0 = {k: records[0].context.get(k) for k in keys}
    warnings = []
    for n, r in zip(names, records):
        if any(r.context.get(k) != ctx0[k] for k in keys):
            warnings.append(f"{n}: context differs from {names[0]}")
            log.warning("report: %s has a different context", n)
    table = [("name", "game", "value", "certified", "dataset_id", "eps", "loss")]
    for n, r in zip(names, records):
        table.append((n, r.game, float(r.value), r.certified, r.context.get("dataset_id"),
                      r.context.get("eps"), r.context.get("loss")))
    md = ["# Equilibrium report", "", _md_table(table), ""]
    by_game = {}
    for r in records:
        by_game.setdefault(r.game, r)
    if all(g in by_game for g in ("G1", "G2", "G3")) and not warnings:
        o = verify_ordering(by_game["G1"], by_game["G3"], by_game["G2"])
        mark = "PASS" if o.holds else "FAIL"
        md += ["## Value chain", "",
               f"G1 = {o.g1:.6g} >= G3 = {o.g3:.6g} >= G2 = {o.g2:.6g}: **{mark}**"
               + ("" if o.certified else " (heuristic records, not certifying)"), ""]
    if warnings:
        md += ["## Warnings", ""] + [f"- {w}" for w in warnings] + [""]
    plots = {}
    gaps = [("record", "iteration", "gap")]
    for n, r in zip(names, records):
        if r.game in ("G3", "matrix"):
            gaps += [(n, i + 1, float(g)) for i, g in enumerate(r.trace)]
    if len(gaps) > 1:
        plots["plot_fp_gap.csv"] = gaps
    if data is not None:
        grid = eps_grid or [0.0, 0.02, 0.05, 0.1]
        method = "grid" if data.dim <= 3 else "pgd"
        curve = [("record", "eps", "adversarial_accuracy", "method")]
        for n, r in zip(names, records):
            if isinstance(r.classifier_strategy, Network):
                curve += [(n, float(e), adversarial_accuracy(r.classifier_strategy, data, e, method),
                           method) for e in grid]
        if len(curve) > 1:
            plots["plot_eps_aa.csv"] = curve
            md += ["## Adversarial accuracy against eps", "", _md_table(curve), ""]
    return "\n".join(md), table, plots
