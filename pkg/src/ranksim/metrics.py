"""Regression metrics, shot-region reports and average ranking matrices."""

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .ranking import midrank, rank
from .similarity import pairwise_feature_similarity, pairwise_label_similarity

__all__ = [
    "mae",
    "mse",
    "gm",
    "pearson",
    "spearman",
    "MetricReport",
    "report",
    "AvgRankingMatrices",
    "average_ranking_matrices",
    "label_sorted_batches",
]

REPORT_REGIONS = ("all", "many", "medium", "few", "zero")
METRICS = ("mae", "mse", "gm", "pearson", "spearman")


def _errors(predictions, targets):
    p = np.asarray(predictions, dtype=np.float64).ravel()
    t = np.asarray(targets, dtype=np.float64).ravel()
    if p.shape != t.shape:
        raise ValueError(f"length mismatch: {p.size} vs {t.size}")
    if p.size == 0:
        raise ValueError("empty input")
    return p - t


def mae(predictions, targets):
    return float(np.mean(np.abs(_errors(predictions, targets))))


def mse(predictions, targets):
    return float(np.mean(_errors(predictions, targets) ** 2))


def gm(predictions, targets, eps=1e-6):
    """Geometric mean of absolute errors, computed in the log domain.

    Errors below ``eps`` are clamped to ``eps`` so exact hits stay finite.
    """
    e = np.maximum(np.abs(_errors(predictions, targets)), eps)
    return float(np.exp(np.mean(np.log(e))))


def pearson(predictions, targets):
    p = np.asarray(predictions, dtype=np.float64).ravel()
    t = np.asarray(targets, dtype=np.float64).ravel()
    _errors(p, t)
    if p.size < 2:
        raise ValueError("degenerate correlation")
    pc, tc = p - p.mean(), t - t.mean()
    denom = math.sqrt(float(pc @ pc) * float(tc @ tc))
    if denom == 0.0:
        raise ValueError("degenerate correlation")
    return float(np.clip((pc @ tc) / denom, -1.0, 1.0))


def spearman(predictions, targets):
    """Pearson correlation of mid-ranks."""
    p = np.asarray(predictions, dtype=np.float64).ravel()
    t = np.asarray(targets, dtype=np.float64).ravel()
    _errors(p, t)
    return pearson(midrank(p), midrank(t))


@dataclass
class MetricReport:
    """Metrics per region; regions without samples are absent."""

    regions: dict = field(default_factory=dict)
    counts: dict = field(default_factory=dict)

    def get(self, region, metric):
        return self.regions.get(region, {}).get(metric)

    def to_dict(self):
        return {"regions": self.regions, "counts": self.counts}

    def to_json(self, **kwargs):
        return json.dumps(self.to_dict(), sort_keys=True, **kwargs)

    @classmethod
    def from_dict(cls, d):
        return cls(regions=dict(d["regions"]), counts=dict(d["counts"]))

    def csv_rows(self):
        rows = []
        for region in REPORT_REGIONS:
            if region not in self.regions:
                continue
            row = {"region": region, "count": self.counts[region]}
            for m in METRICS:
                v = self.regions[region].get(m)
                row[m] = "" if v is None else repr(v)
            rows.append(row)
        return rows

    def to_csv(self, path):
        with open(path, "w", newline="") as f:
            writer = csv.DictWriter(f, fieldnames=["region", "count", *METRICS])
            writer.writeheader()
            writer.writerows(self.csv_rows())


def _region_metrics(p, t, gm_eps):
    out = {"mae": mae(p, t), "mse": mse(p, t), "gm": gm(p, t, gm_eps)}
    for name, fn in (("pearson", pearson), ("spearman", spearman)):
        try:
            out[name] = fn(p, t)
        except ValueError:
            out[name] = None
    return out


def report(predictions, targets, regions, gm_eps=1e-6):
    """Metrics over all samples and within each shot region.

    ``regions`` gives the region name of every sample.
    """
    p = np.asarray(predictions, dtype=np.float64).ravel()
    t = np.asarray(targets, dtype=np.float64).ravel()
    r = np.asarray(regions, dtype=object).ravel()
    if not (p.size == t.size == r.size):
        raise ValueError("predictions, targets and regions must have equal length")
    rep = MetricReport()
    rep.regions["all"] = _region_metrics(p, t, gm_eps)
    rep.counts["all"] = int(p.size)
    for region in REPORT_REGIONS[1:]:
        mask = r == region
        if mask.any():
            rep.regions[region] = _region_metrics(p[mask], t[mask], gm_eps)
            rep.counts[region] = int(mask.sum())
    return rep


@dataclass
class AvgRankingMatrices:
    label_matrix: np.ndarray
    feature_matrix: np.ndarray
    batch_count: int

    def to_csv(self, label_path, feature_path):
        for path, mat in ((label_path, self.label_matrix), (feature_path, self.feature_matrix)):
            np.savetxt(path, mat, delimiter=",", fmt="%.17g")


def average_ranking_matrices(batches, feature_sim="cosine"):
    """Entrywise mean of row-wise rank matrices over label-sorted batches.

    ``batches`` yields ``(labels, features)`` pairs, all with the same size.
    """
    label_sum = feature_sum = None
    count = 0
    size = None
    for labels, features in batches:
        y = np.asarray(labels, dtype=np.float64).ravel()
        if size is None:
            size = y.size
        elif y.size != size:
            raise ValueError(f"ragged batch sizes: {y.size} vs {size}")
        rk_y = rank(pairwise_label_similarity(y))
        rk_z = rank(pairwise_feature_similarity(features, feature_sim))
        if label_sum is None:
            label_sum = np.zeros(rk_y.shape)
            feature_sum = np.zeros(rk_z.shape)
        label_sum += rk_y
        feature_sum += rk_z
        count += 1
    if count == 0:
        raise ValueError("no batches")
    return AvgRankingMatrices(label_sum / count, feature_sum / count, count)


def label_sorted_batches(labels, features, batch_size, rng=None):
    """Split a set into full batches, each sorted by label.

    Samples are shuffled (when ``rng`` is given) before batching; a trailing
    partial batch is dropped.
    """
    y = np.asarray(labels, dtype=np.float64).ravel()
    z = np.asarray(features, dtype=np.float64)
    order = np.arange(y.size) if rng is None else rng.permutation(y.size)
    for start in range(0, y.size - batch_size + 1, batch_size):
        idx = order[start : start + batch_size]
        idx = idx[np.argsort(y[idx], kind="stable")]
        yield y[idx], z[idx]
