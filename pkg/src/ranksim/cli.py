"""Command-line entry point.

Subcommands::

    ranksim run            train and evaluate one config
    ranksim sweep          run a list or grid of configs, write summary.csv
    ranksim gen-data       generate a synthetic imbalanced dataset
    ranksim rank-matrices  average label/feature rank matrices of a checkpoint

Configs are JSON. Outputs go under ``$RANKSIM_OUTPUT_ROOT`` (default
``runs``). On success a JSON summary is printed to stdout and the exit code
is 0; on failure a single JSON object ``{"error", "message", ...}`` is
printed to stderr and the exit code is nonzero (2 for bad input, 1 for a
failed run).
"""

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .baselines import reweight, write_density_csv
from .data import SkewSpec, generate, load_dataset, save_dataset, shot_regions
from .experiment import ExperimentConfig, RunError, expand_grid, output_root, run, sweep
from .metrics import average_ranking_matrices, label_sorted_batches
from .network import load_checkpoint
from .similarity import FEATURE_SIMILARITIES

EXIT_OK = 0
EXIT_RUN_FAILED = 1
EXIT_BAD_INPUT = 2


class UsageError(ValueError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _read_json(path):
    try:
        with open(path) as f:
            return json.load(f)
    except json.JSONDecodeError as err:
        raise UsageError(f"{path}: invalid JSON ({err})") from err


def _bins(text):
    """Parse '40-49' or '3,5,7-9' into a list of bin indices."""
    out = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if "-" in part:
            a, b = part.split("-", 1)
            out.extend(range(int(a), int(b) + 1))
        else:
            out.append(int(part))
    return out


def _apply_run_overrides(cfg, args):
    if args.name is not None:
        cfg["name"] = args.name
    if args.seed is not None:
        cfg["seed"] = args.seed
        if isinstance(cfg.get("dataset"), dict):
            cfg["dataset"].setdefault("seed", args.seed)
    if args.output_dir is not None:
        cfg["output_dir"] = args.output_dir
    if args.reweight is not None:
        cfg["reweight"] = args.reweight
    training = cfg.setdefault("training", {})
    for key in ("epochs", "batch_size", "lr", "loss"):
        v = getattr(args, key)
        if v is not None:
            training[key] = v
    if args.ranksim:
        cfg["ranksim"] = cfg.get("ranksim") or {}
    if args.no_ranksim:
        cfg["ranksim"] = None
    for key in ("gamma", "lam"):
        v = getattr(args, key)
        if v is not None:
            if cfg.get("ranksim") is None:
                raise UsageError(f"--{key} needs RankSim enabled (--ranksim or a ranksim config)")
            cfg["ranksim"][key] = v
    if args.lds:
        cfg["lds"] = cfg.get("lds") or {}
    if args.focal_r:
        cfg["focal_r"] = cfg.get("focal_r") or {}
    if args.rrt:
        cfg["rrt"] = cfg.get("rrt") or {}
    if args.zero_shot_bins is not None:
        ds = cfg.setdefault("dataset", {})
        ds["zero_shot_bins"] = _bins(args.zero_shot_bins)
    return cfg


def _summary(art):
    best = art.metrics["best_val"]
    return {
        "status": "ok",
        "output_dir": str(art.output_dir),
        "config_hash": art.config.config_hash(),
        "best_epoch": art.best_epoch,
        "test_mae": {region: best.get(region, "mae") for region in best.regions},
        "files": {k: str(v) for k, v in art.files.items()},
    }


def cmd_run(args):
    cfg = _read_json(args.config) if args.config else {}
    cfg = _apply_run_overrides(cfg, args)
    art = run(ExperimentConfig.from_dict(cfg))
    return _summary(art)


def cmd_sweep(args):
    doc = _read_json(args.config)
    configs = expand_grid(doc)
    name = args.name or Path(args.config).stem
    out = output_root() / name
    rows = sweep(configs, out / "summary.csv", root=out)
    failed = [r["config_hash"] for r in rows if r["status"] != "ok"]
    return {
        "status": "ok" if not failed else "partial",
        "summary": str(out / "summary.csv"),
        "runs": len(rows),
        "failed": failed,
    }


def cmd_gen_data(args):
    doc = _read_json(args.config) if args.config else {}
    if args.seed is not None:
        doc["seed"] = args.seed
    if args.n_train is not None:
        doc["n_train"] = args.n_train
    if args.noise_sigma is not None:
        doc["noise_sigma"] = args.noise_sigma
    if args.profile is not None:
        doc["profile"] = args.profile
    if args.zero_shot_bins is not None:
        doc["zero_shot_bins"] = _bins(args.zero_shot_bins)
    spec = SkewSpec.from_dict(doc)
    ds = generate(spec)
    out = Path(args.out) if args.out else output_root() / f"data-seed{spec.seed}"
    out.mkdir(parents=True, exist_ok=True)
    save_dataset(ds, out / "dataset.csv", out / "spec.json")
    density = ds.train_density()
    write_density_csv(out / "density.csv", density, reweight(density, "sqinv") if density.counts.any() else None)
    regions = shot_regions(density.counts, spec.many_min, spec.few_max)
    counts = {r: int(np.sum(regions == r)) for r in ("many", "medium", "few", "zero")}
    return {
        "status": "ok",
        "dataset": str(out / "dataset.csv"),
        "spec": str(out / "spec.json"),
        "density": str(out / "density.csv"),
        "n_train": int(ds.y_train.size),
        "n_val": int(ds.y_val.size),
        "n_test": int(ds.y_test.size),
        "bins_per_region": counts,
    }


def cmd_rank_matrices(args):
    net = load_checkpoint(args.checkpoint)
    ds = load_dataset(args.data, args.spec)
    X, y = ds.split(args.split)
    if X.shape[1] != net.input_dim:
        raise UsageError(f"checkpoint expects {net.input_dim} inputs, dataset has {X.shape[1]}")
    feats = net.forward(X)[0]
    rng = np.random.default_rng(args.seed)
    mats = average_ranking_matrices(label_sorted_batches(y, feats, args.batch_size, rng), args.feature_sim)
    out = Path(args.out) if args.out else output_root() / "rank-matrices"
    out.mkdir(parents=True, exist_ok=True)
    mats.to_csv(out / "rank_labels.csv", out / "rank_features.csv")
    return {
        "status": "ok",
        "batch_count": mats.batch_count,
        "batch_size": args.batch_size,
        "label_matrix": str(out / "rank_labels.csv"),
        "feature_matrix": str(out / "rank_features.csv"),
    }


def build_parser():
    parser = _Parser(prog="ranksim", description="Rank-similarity regularization experiments")
    parser.add_argument("--version", action="version", version=f"ranksim {__version__}")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("run", help="train and evaluate one config")
    p.add_argument("--config", help="experiment config JSON")
    p.add_argument("--name")
    p.add_argument("--seed", type=int)
    p.add_argument("--output-dir", help="run directory (relative paths live under the output root)")
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--loss", choices=("l1", "mse"))
    p.add_argument("--reweight", choices=("none", "inv", "sqinv"))
    toggle = p.add_mutually_exclusive_group()
    toggle.add_argument("--ranksim", action="store_true", help="enable the regularizer with default settings")
    toggle.add_argument("--no-ranksim", action="store_true", help="disable the regularizer")
    p.add_argument("--gamma", type=float)
    p.add_argument("--lam", type=float)
    p.add_argument("--lds", action="store_true")
    p.add_argument("--focal-r", action="store_true")
    p.add_argument("--rrt", action="store_true")
    p.add_argument("--zero-shot-bins", help="excluded bins, e.g. 40-49")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="run a list or grid of configs")
    p.add_argument("--config", required=True, help='JSON list of configs or {"base", "grid", "seeds"}')
    p.add_argument("--name", help="sweep directory name (default: config file stem)")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("gen-data", help="generate a synthetic dataset")
    p.add_argument("--config", help="dataset spec JSON")
    p.add_argument("--seed", type=int)
    p.add_argument("--n-train", type=int)
    p.add_argument("--noise-sigma", type=float)
    p.add_argument("--profile", choices=("exponential", "zipf", "two_peak"))
    p.add_argument("--zero-shot-bins")
    p.add_argument("--out", help="output directory")
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("rank-matrices", help="average rank matrices of a trained model")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True, help="dataset CSV written by gen-data")
    p.add_argument("--spec", required=True, help="spec JSON written by gen-data")
    p.add_argument("--split", default="test", choices=("train", "val", "test"))
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--feature-sim", default="cosine", choices=FEATURE_SIMILARITIES)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="output directory")
    p.set_defaults(func=cmd_rank_matrices)
    return parser


def _fail(code, kind, message, **extra):
    print(json.dumps({"error": kind, "message": message, **extra}, sort_keys=True), file=sys.stderr)
    return code


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
    except UsageError as err:
        return _fail(EXIT_BAD_INPUT, "usage", str(err))
    try:
        result = args.func(args)
    except RunError as err:
        return _fail(EXIT_RUN_FAILED, err.record.get("error", "run_failed"), str(err), **{
            k: v for k, v in err.record.items() if k not in ("error", "message")
        })
    except (UsageError, ValueError, KeyError, TypeError) as err:
        return _fail(EXIT_BAD_INPUT, "invalid_input", str(err), command=args.command)
    except OSError as err:
        return _fail(EXIT_BAD_INPUT, "io", str(err), command=args.command)
    print(json.dumps(result, indent=2, sort_keys=True))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
