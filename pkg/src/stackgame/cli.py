"""Command line entry point: ``stackgame <subcommand> ...``.

Every subcommand builds a configuration dict, merges ``--config FILE``
(JSON, its keys override flags) and hands it to :func:`harness.run`.
Artifacts land in ``<out>/<experiment>/<config-hash>/``.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import harness
from .losses import KINDS


def _seeds(text: str) -> list[int]:
    try:
        return [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"seeds must be comma-separated integers: {text!r}")


def _dims(text: str) -> list[int]:
    try:
        return [int(s) for s in text.replace("-", ",").split(",") if s.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"layer dims like 2-16-16-2 expected, got {text!r}")


def _budget(text: str) -> float:
    return float("inf") if text.lower() in ("inf", "none", "unlimited") else float(text)


def _data_flags(p, required=False):
    p.add_argument("--data", required=required,
                   help="CSV file with rows x_1,...,x_n,label (or a generator spec via --config)")
    p.add_argument("--eps", type=float, default=None, help="attack radius (inf-norm)")
    p.add_argument("--loss", choices=KINDS, default=None)


def _train_flags(p):
    p.add_argument("--layer-dims", type=_dims, default=None, help="e.g. 2-16-16-2")
    p.add_argument("--clip-bound", type=float, default=None, help="parameter box half-width E")
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--optimizer", choices=("adam", "sgd"), default=None)


def _attack_flags(p):
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--restarts", type=int, default=None)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="stackgame",
        description="Zero-sum games between small ReLU classifiers and bounded adversaries.")
    ap.add_argument("--seed", type=int, default=None, help="root random seed")
    ap.add_argument("--out", dest="out_root", default=None,
                    help="output root (default: $STACKGAME_OUT or ./out)")
    ap.add_argument("--config", default=None, help="JSON file whose keys override the flags")
    ap.add_argument("--threads", type=int, default=None, help="worker threads for seed runs")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="experiment", required=True)

    p = sub.add_parser("train", help="train a network (clean, adversarial or trade-off)")
    _data_flags(p)
    _train_flags(p)
    p.add_argument("--lambda", dest="lam", type=float, default=None)

    p = sub.add_parser("attack", help="build an attack bundle for a model and dataset")
    p.add_argument("--model", required=True)
    _data_flags(p)
    _attack_flags(p)
    p.add_argument("--exact", action="store_true", default=None, help="lattice oracle (n <= 3)")
    p.add_argument("--grid-step", type=float, default=None)
    p.add_argument("--out", dest="out_file", default=None, help="also write the bundle here")

    p = sub.add_parser("eval", help="clean/adversarial accuracy and risk of a model")
    p.add_argument("--model", required=True)
    _data_flags(p)
    _attack_flags(p)
    p.add_argument("--method", choices=("pgd", "grid"), default=None)
    p.add_argument("--grid-step", type=float, default=None)

    p = sub.add_parser("game", help="solve G1, G2 or G3 on a dataset")
    p.add_argument("game", choices=("g1", "g2", "g3"))
    _data_flags(p)
    _train_flags(p)
    _attack_flags(p)
    p.add_argument("--pool-dir", default=None, help="directory of model*.json / bundle*.json")
    p.add_argument("--mode", choices=("heuristic", "enumerate"), default=None)
    p.add_argument("--seeds", type=_seeds, default=None, help="seeds for generated pools")
    p.add_argument("--tol", type=float, default=None)
    p.add_argument("--out", dest="out_file", default=None, help="also write the record here")

    p = sub.add_parser("matrix", help="solve a zero-sum matrix game from CSV")
    p.add_argument("--file", required=True)
    p.add_argument("--solve", choices=("minmax", "maxmin", "mixed", "all"), default="mixed")
    p.add_argument("--tol", type=float, default=None)

    p = sub.add_parser("tradeoff", help="compare lambda = 0 and lambda > 0 over seeds")
    _data_flags(p)
    _train_flags(p)
    p.add_argument("--lambda", dest="lam", type=float, default=None)
    p.add_argument("--seeds", type=_seeds, default=None)
    p.add_argument("--out", dest="out_file", default=None, help="also write the report here")

    p = sub.add_parser("retrain", help="clean fine-tuning inside a per-parameter budget")
    p.add_argument("--model", required=True)
    p.add_argument("--budget-pct", type=_budget, required=True)
    _data_flags(p)
    _train_flags(p)

    p = sub.add_parser("nuprobe", help="parameter-ball stability of the adversarial 0/-1 payoff")
    p.add_argument("--model", required=True)
    p.add_argument("--nu", type=float, required=True)
    p.add_argument("--trials", type=int, default=None)
    _data_flags(p)
    p.add_argument("--grid-step", type=float, default=None)

    p = sub.add_parser("report", help="markdown/CSV tables from record files")
    p.add_argument("records", nargs="*")
    p.add_argument("--data", default=None, help="dataset for eps-vs-accuracy curves")

    return ap


_GLOBAL = ("out_root", "config", "verbose")


def config_from_args(args: argparse.Namespace) -> dict:
    cfg = {k: v for k, v in vars(args).items() if k not in _GLOBAL and v is not None}
    if args.config:
        try:
            extra = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as e:
            raise harness.ConfigError(f"cannot read config {args.config}: {e}") from None
        if not isinstance(extra, dict):
            raise harness.ConfigError("config file must hold a JSON object")
        cfg.update(extra)
        cfg["experiment"] = args.experiment
    return cfg


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = config_from_args(args)
    except harness.ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    if args.experiment == "report" and not cfg.get("records"):
        ap.error("report needs at least one record file")
    res = harness.run(cfg, root=args.out_root)
    stream = sys.stdout if res.status == 0 else sys.stderr
    print(res.text, file=stream)
    print(f"artifacts: {res.out_dir}", file=stream)
    return res.status


if __name__ == "__main__":
    sys.exit(main())
