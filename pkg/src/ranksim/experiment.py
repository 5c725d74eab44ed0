"""Config-driven experiment runs and sweeps.

A run trains one :class:`~ranksim.estimator.RankSimRegressor` on a synthetic
(or saved) imbalanced dataset and writes a self-describing directory::

    config.json          resolved config (re-running it reproduces metrics)
    metrics.json         test MetricReports of the best-val and final models
    metrics_best.csv     best-val report, one row per region
    metrics_final.csv    final report, one row per region
    training_log.csv     per-epoch task / ranksim loss, lr, val MAE
    best.ckpt.json       checkpoint selected by validation "all" MAE
    final.ckpt.json      checkpoint after the last epoch
    rank_labels.csv      average row-wise label ranks over sorted test batches
    rank_features.csv    the same for feature-space similarities

A sweep runs several configs and collects one CSV row per config, keyed by
the config hash. Failed runs are recorded with their error and the sweep
moves on.
"""

import csv
import hashlib
import itertools
import json
import os
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import baselines
from .data import SkewSpec, generate, load_dataset
from .estimator import RankSimRegressor
from .metrics import METRICS, REPORT_REGIONS, average_ranking_matrices, label_sorted_batches, report
from .network import DivergedError, save_checkpoint
from .regularizer import RankSimConfig
from .similarity import DegenerateVectorError

__all__ = [
    "OUTPUT_ROOT_ENV",
    "TrainingConfig",
    "ExperimentConfig",
    "RunArtifacts",
    "RunError",
    "run",
    "sweep",
    "expand_grid",
    "output_root",
]

OUTPUT_ROOT_ENV = "RANKSIM_OUTPUT_ROOT"
TRAINING_RANK_SCALE = "unit"
DEFAULT_OUTPUT_ROOT = "runs"


class RunError(RuntimeError):
    """A run aborted; ``record`` is the JSON-serializable error record."""

    def __init__(self, record):
        super().__init__(record.get("message", "run failed"))
        self.record = record


@dataclass(frozen=True)
class TrainingConfig:
    epochs: int = 90
    batch_size: int = 64
    lr: float = 1e-3
    lr_milestones: tuple = (60, 80)
    lr_decay: float = 0.1
    weight_decay: float = 1e-4
    loss: str = "mse"
    hidden: tuple = (64, 64)

    def __post_init__(self):
        object.__setattr__(self, "lr_milestones", tuple(int(m) for m in self.lr_milestones))
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))


def _build(cls, d, where):
    if d is None:
        return None
    if isinstance(d, cls):
        return d
    if not isinstance(d, dict):
        raise ValueError(f"{where} must be an object, got {type(d).__name__}")
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(d) - known)
    if unknown:
        raise ValueError(f"unknown {where} field(s): {', '.join(unknown)}")
    return cls(**d)


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything needed to reproduce one run.

    Exactly one of ``dataset`` (a :class:`SkewSpec`) and ``dataset_path``
    (``{"csv": ..., "spec": ...}``) is set; with neither, the default skew
    spec seeded by ``seed`` is used. ``ranksim``, ``lds``, ``focal_r`` and
    ``rrt`` enable the corresponding method when not ``None``.
    ``ranksim.gamma`` multiplies the unnormalized sum over subset rows.
    A ``ranksim`` object read from JSON defaults to ``rank_scale="unit"``;
    with ``rrt`` set, ``rrt.stage1_epochs`` replaces ``training.epochs``.
    Without an explicit ``dataset.seed`` the dataset takes the run ``seed``.
    """

    name: str = "run"
    seed: int = 0
    dataset: SkewSpec = None
    dataset_path: dict = None
    ranksim: RankSimConfig = None
    reweight: str = "none"
    lds: baselines.LdsKernel = None
    focal_r: baselines.FocalRConfig = None
    rrt: baselines.RRTPlan = None
    training: TrainingConfig = field(default_factory=TrainingConfig)
    ranking_batch_size: int = 64
    output_dir: str = None

    def __post_init__(self):
        if self.dataset is not None and self.dataset_path is not None:
            raise ValueError("set either dataset or dataset_path, not both")
        if self.dataset is None and self.dataset_path is None:
            object.__setattr__(self, "dataset", SkewSpec(seed=int(self.seed)))
        if self.dataset_path is not None:
            missing = {"csv", "spec"} - set(self.dataset_path)
            if missing:
                raise ValueError(f"dataset_path needs keys {sorted(missing)}")
        if self.reweight not in baselines.REWEIGHT_SCHEMES:
            raise ValueError(f"reweight must be one of {baselines.REWEIGHT_SCHEMES}, got {self.reweight!r}")
        if self.lds is not None and self.reweight == "none" and self.rrt is None:
            raise ValueError("lds needs reweight 'inv' or 'sqinv' (or an rrt stage) to take effect")
        if int(self.ranking_batch_size) < 2:
            raise ValueError("ranking_batch_size must be at least 2")

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ValueError(f"unknown config field(s): {', '.join(unknown)}")
        if d.get("dataset") is not None and not isinstance(d["dataset"], SkewSpec):
            ds = d["dataset"]
            unknown = sorted(set(ds) - {f.name for f in fields(SkewSpec)})
            if unknown:
                raise ValueError(f"unknown dataset field(s): {', '.join(unknown)}")
            d["dataset"] = SkewSpec.from_dict({"seed": d.get("seed", 0), **ds})
        rs = d.get("ranksim")
        if isinstance(rs, dict):
            rs = {"rank_scale": TRAINING_RANK_SCALE, **rs}
        d["ranksim"] = _build(RankSimConfig, rs, "ranksim")
        d["lds"] = _build(baselines.LdsKernel, d.get("lds"), "lds")
        d["focal_r"] = _build(baselines.FocalRConfig, d.get("focal_r"), "focal_r")
        d["rrt"] = _build(baselines.RRTPlan, d.get("rrt"), "rrt")
        d["training"] = _build(TrainingConfig, d.get("training", {}), "training")
        return cls(**d)

    @classmethod
    def from_json(cls, path):
        with open(path) as f:
            return cls.from_dict(json.load(f))

    def to_dict(self):
        d = {
            "name": self.name,
            "seed": int(self.seed),
            "dataset": None if self.dataset is None else self.dataset.to_dict(),
            "dataset_path": self.dataset_path,
            "ranksim": None if self.ranksim is None else asdict(self.ranksim),
            "reweight": self.reweight,
            "lds": None if self.lds is None else asdict(self.lds),
            "focal_r": None if self.focal_r is None else asdict(self.focal_r),
            "rrt": None if self.rrt is None else asdict(self.rrt),
            "training": {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(self.training).items()},
            "ranking_batch_size": int(self.ranking_batch_size),
            "output_dir": self.output_dir,
        }
        return d

    def config_hash(self):
        """Short stable hash of everything that affects the results."""
        d = self.to_dict()
        d.pop("name")
        d.pop("output_dir")
        blob = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:12]

    def estimator_params(self):
        t = self.training
        p = dict(
            hidden=t.hidden,
            epochs=t.epochs,
            batch_size=t.batch_size,
            lr=t.lr,
            lr_milestones=t.lr_milestones,
            lr_decay=t.lr_decay,
            weight_decay=t.weight_decay,
            loss=t.loss,
            reweight=self.reweight,
            random_state=int(self.seed),
        )
        if self.ranksim is not None:
            r = self.ranksim
            p.update(
                ranksim=True,
                gamma=r.gamma,
                lam=r.lam,
                penalty=r.penalty,
                huber_delta=r.huber_delta,
                feature_sim=r.feature_sim,
                unique_label_sampling=r.unique_label_sampling,
                rank_scale=r.rank_scale,
                include_diagonal=r.include_diagonal,
            )
        if self.lds is not None:
            p.update(lds=True, lds_size=self.lds.size, lds_sigma=self.lds.sigma)
        if self.focal_r is not None:
            p.update(focal_r=True, focal_beta=self.focal_r.beta, focal_gamma=self.focal_r.gamma_exp)
        if self.rrt is not None:
            p.update(
                rrt=True,
                epochs=self.rrt.stage1_epochs,
                rrt_epochs=self.rrt.stage2_epochs,
                rrt_reweight=self.rrt.stage2_reweight,
                rrt_lr=self.rrt.stage2_lr,
            )
        return p


@dataclass
class RunArtifacts:
    config: ExperimentConfig
    metrics: dict
    history: list
    best_epoch: int
    output_dir: Path
    files: dict
    ranking_matrices: object = None

    def metrics_document(self):
        return _metrics_document(self.config, self.metrics, self.best_epoch)


def output_root(default=DEFAULT_OUTPUT_ROOT):
    """Output root directory; the ``RANKSIM_OUTPUT_ROOT`` environment variable wins."""
    return Path(os.environ.get(OUTPUT_ROOT_ENV) or default)


def _resolve_dir(config, root=None):
    base = output_root() if root is None else Path(root)
    if config.output_dir is not None and Path(config.output_dir).is_absolute():
        return Path(config.output_dir)
    sub = config.output_dir or f"{config.name}-{config.config_hash()}"
    return base / sub


def _load(config):
    if config.dataset_path is not None:
        return load_dataset(config.dataset_path["csv"], config.dataset_path["spec"])
    return generate(config.dataset)


def _metrics_document(config, metrics, best_epoch):
    return {
        "config_hash": config.config_hash(),
        "best_epoch": best_epoch,
        "best_val": metrics["best_val"].to_dict(),
        "final": metrics["final"].to_dict(),
    }


def _write_json(path, obj):
    with open(path, "w") as f:
        json.dump(obj, f, indent=2, sort_keys=True)
        f.write("\n")


LOG_FIELDS = ("epoch", "stage", "lr", "task_loss", "ranksim_loss", "degenerate_batches", "val_mae")


def _write_log(path, history):
    with open(path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=LOG_FIELDS, extrasaction="ignore")
        writer.writeheader()
        for rec in history:
            writer.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in rec.items()})


def run(config, root=None):
    """Train, evaluate and write all artifacts for one config.

    Raises :class:`RunError` (after writing ``error.json`` and, if available,
    ``last_good.ckpt.json``) when training diverges.
    """
    if isinstance(config, dict):
        config = ExperimentConfig.from_dict(config)
    out = _resolve_dir(config, root)
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "config.json", config.to_dict())

    ds = _load(config)
    est = RankSimRegressor(**config.estimator_params())
    try:
        est.fit(ds.X_train, ds.y_train, eval_set=(ds.X_val, ds.y_val))
    except DivergedError as err:
        record = {
            "error": "diverged",
            "message": str(err),
            "epoch": getattr(err, "epoch", None),
            "config_hash": config.config_hash(),
            "output_dir": str(out),
        }
        net = getattr(err, "last_good_net", None)
        if net is not None:
            save_checkpoint(net, out / "last_good.ckpt.json")
            record["last_good_checkpoint"] = str(out / "last_good.ckpt.json")
        _write_log(out / "training_log.csv", getattr(err, "history", []))
        _write_json(out / "error.json", record)
        raise RunError(record) from err

    regions = ds.regions_of(ds.y_test)
    best_net = est.best_net_ if est.best_net_ is not None else est.final_net_
    metrics = {
        "best_val": report(best_net.predict(ds.X_test), ds.y_test, regions),
        "final": report(est.final_net_.predict(ds.X_test), ds.y_test, regions),
    }
    files = {
        "config": out / "config.json",
        "metrics": out / "metrics.json",
        "metrics_best": out / "metrics_best.csv",
        "metrics_final": out / "metrics_final.csv",
        "training_log": out / "training_log.csv",
        "best_checkpoint": out / "best.ckpt.json",
        "final_checkpoint": out / "final.ckpt.json",
    }
    _write_json(files["metrics"], _metrics_document(config, metrics, est.best_epoch_))
    metrics["best_val"].to_csv(files["metrics_best"])
    metrics["final"].to_csv(files["metrics_final"])
    _write_log(files["training_log"], est.history_)
    save_checkpoint(best_net, files["best_checkpoint"])
    save_checkpoint(est.final_net_, files["final_checkpoint"])

    feature_sim = config.ranksim.feature_sim if config.ranksim is not None else "cosine"
    matrices = None
    feats = best_net.forward(ds.X_test)[0]
    rng = np.random.default_rng(np.random.SeedSequence(int(config.seed)).spawn(4)[3])
    batch = min(int(config.ranking_batch_size), ds.y_test.size)
    try:
        matrices = average_ranking_matrices(label_sorted_batches(ds.y_test, feats, batch, rng), feature_sim)
    except DegenerateVectorError:
        # dead feature vectors have no angle; the matrices are simply not written
        matrices = None
    if matrices is not None:
        files["rank_labels"] = out / "rank_labels.csv"
        files["rank_features"] = out / "rank_features.csv"
        matrices.to_csv(files["rank_labels"], files["rank_features"])

    return RunArtifacts(config, metrics, est.history_, est.best_epoch_, out, files, matrices)


def _set_dotted(d, key, value):
    parts = key.split(".")
    cur = d
    for p in parts[:-1]:
        if cur.get(p) is None:
            cur[p] = {}
        cur = cur[p]
    cur[parts[-1]] = value


def expand_grid(spec):
    """Turn a sweep document into a list of config dicts.

    ``spec`` is either a list of config dicts, or ``{"base": {...},
    "grid": {"dotted.key": [values...]}, "seeds": [...]}``; the grid is the
    Cartesian product in key order, seeds vary fastest.
    """
    if isinstance(spec, list):
        return [dict(c) for c in spec]
    if not isinstance(spec, dict):
        raise ValueError("sweep spec must be a list of configs or an object with base/grid")
    unknown = sorted(set(spec) - {"base", "grid", "seeds"})
    if unknown:
        raise ValueError(f"unknown sweep field(s): {', '.join(unknown)}")
    base = spec.get("base", {})
    grid = spec.get("grid", {})
    seeds = spec.get("seeds")
    keys = list(grid)
    out = []
    for values in itertools.product(*(grid[k] for k in keys)):
        for seed in seeds if seeds is not None else [None]:
            cfg = json.loads(json.dumps(base))
            for k, v in zip(keys, values):
                _set_dotted(cfg, k, v)
            if seed is not None:
                cfg["seed"] = seed
            out.append(cfg)
    if not out:
        raise ValueError("sweep produced no configs")
    return out


def _flatten(prefix, obj, out):
    if isinstance(obj, dict):
        for k in sorted(obj):
            _flatten(f"{prefix}.{k}" if prefix else k, obj[k], out)
    elif isinstance(obj, list):
        out[prefix] = json.dumps(obj)
    else:
        out[prefix] = obj
    return out


def _metric_columns():
    return [f"{which}.{region}.{m}" for which in ("best_val", "final") for region in REPORT_REGIONS for m in METRICS]


def sweep(configs, summary_path=None, root=None):
    """Run every config; return the summary rows (and write them as CSV).

    Each row holds ``config_hash``, ``status`` (``ok``/``failed``),
    ``error``, the flattened config under ``cfg.*`` and the test metrics
    ``{best_val,final}.{region}.{metric}``.
    """
    if isinstance(configs, (ExperimentConfig, dict)):
        configs = [configs]
    configs = list(configs)
    if not configs:
        raise ValueError("sweep needs at least one config")
    rows = []
    for raw in configs:
        row = {"config_hash": "", "name": "", "status": "ok", "error": "", "output_dir": ""}
        try:
            cfg = raw if isinstance(raw, ExperimentConfig) else ExperimentConfig.from_dict(raw)
            row.update(config_hash=cfg.config_hash(), name=cfg.name)
            row.update({f"cfg.{k}": v for k, v in _flatten("", cfg.to_dict(), {}).items()})
            art = run(cfg, root)
            row["output_dir"] = str(art.output_dir)
            for which, rep in art.metrics.items():
                for region, vals in rep.regions.items():
                    for m, v in vals.items():
                        row[f"{which}.{region}.{m}"] = v
        except RunError as err:
            row.update(status="failed", error=json.dumps(err.record, sort_keys=True))
        except (ValueError, TypeError, OSError, KeyError) as err:
            row.update(status="failed", error=json.dumps({"error": type(err).__name__, "message": str(err)}))
        rows.append(row)

    if summary_path is not None:
        cfg_cols = sorted({k for r in rows for k in r if k.startswith("cfg.")})
        header = ["config_hash", "name", "status", "error", "output_dir", *cfg_cols, *_metric_columns()]
        Path(summary_path).parent.mkdir(parents=True, exist_ok=True)
        with open(summary_path, "w", newline="") as f:
            writer = csv.DictWriter(f, fieldnames=header, restval="")
            writer.writeheader()
            for r in rows:
                writer.writerow({k: ("" if v is None else v) for k, v in r.items()})
    return rows
