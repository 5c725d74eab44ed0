"""Rank-similarity regularizer over a batch subset.

For a subset of ``M`` items, the label-space similarity matrix and the
feature-space similarity matrix are built, every row of each is ranked, and
the penalty between matching rows is summed::

    loss = sum_i penalty(rank(S_y[i]), rank(S_z[i]))

The backward pass maps the penalty gradient through the interpolated rank
gradient and then through the feature similarity, yielding one gradient
vector per feature. Labels are constants and receive no gradient. The
balancing weight ``gamma`` is stored here but applied by the training loop.
"""

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .ranking import rank, rank_backward
from .similarity import (
    FEATURE_SIMILARITIES,
    PENALTIES,
    pairwise_feature_similarity,
    pairwise_feature_similarity_backward,
    pairwise_label_similarity,
    penalty,
    penalty_grad,
)

__all__ = [
    "RankSimConfig",
    "BatchSubset",
    "RankSimResult",
    "sample_unique_labels",
    "make_subset",
    "ranksim_loss",
    "ranksim_backward",
    "ranksim_loss_and_grad",
]


@dataclass(frozen=True)
class RankSimConfig:
    """Hyperparameters of the regularizer.

    ``gamma`` weights the regularizer in the total loss; ``lam`` is the
    interpolation strength of the rank backward pass. ``rank_scale="unit"``
    divides every rank row by its length before the penalty (the perturbation
    in the backward pass then lives on the same scale); ``include_diagonal``
    keeps each item's self-similarity in its row.
    """

    gamma: float = 100.0
    lam: float = 2.0
    penalty: str = "mse"
    huber_delta: float = 1.0
    feature_sim: str = "cosine"
    unique_label_sampling: bool = True
    rank_scale: str = "raw"
    include_diagonal: bool = True

    def __post_init__(self):
        if not self.gamma >= 0:
            raise ValueError(f"gamma must be nonnegative, got {self.gamma}")
        if not self.lam > 0:
            raise ValueError(f"lam must be positive, got {self.lam}")
        if self.penalty not in PENALTIES:
            raise ValueError(f"unknown penalty {self.penalty!r}; expected one of {PENALTIES}")
        if not self.huber_delta > 0:
            raise ValueError("huber_delta must be positive")
        if self.feature_sim not in FEATURE_SIMILARITIES:
            raise ValueError(
                f"unknown feature similarity {self.feature_sim!r}; expected one of {FEATURE_SIMILARITIES}"
            )
        if self.rank_scale not in ("raw", "unit"):
            raise ValueError(f"rank_scale must be 'raw' or 'unit', got {self.rank_scale!r}")


@dataclass
class BatchSubset:
    indices: np.ndarray
    labels: np.ndarray
    features: np.ndarray = field(repr=False)

    def __len__(self):
        return len(self.indices)


class RankSimResult(NamedTuple):
    loss: float
    grad: np.ndarray
    degenerate: bool


def sample_unique_labels(labels, rng):
    """Pick one random representative index per distinct label.

    Representatives are returned in order of each label's first occurrence.
    """
    labels = np.asarray(labels).ravel()
    groups = {}
    for idx, y in enumerate(labels.tolist()):
        groups.setdefault(y, []).append(idx)
    picked = [
        occ[0] if len(occ) == 1 else occ[int(rng.integers(len(occ)))]
        for occ in groups.values()
    ]
    return np.asarray(picked, dtype=np.int64)


def make_subset(labels, features, cfg, rng=None):
    """Build the subset the regularizer is evaluated on for one batch."""
    labels = np.asarray(labels, dtype=np.float64).ravel()
    features = np.asarray(features, dtype=np.float64)
    if cfg.unique_label_sampling:
        if rng is None:
            raise ValueError("unique label sampling needs a random generator")
        idx = sample_unique_labels(labels, rng)
    else:
        idx = np.arange(labels.size)
    return BatchSubset(indices=idx, labels=labels[idx], features=features[idx])


def _offdiag(mat):
    m = mat.shape[0]
    return mat[~np.eye(m, dtype=bool)].reshape(m, m - 1)


def _scatter_offdiag(rows):
    m = rows.shape[0]
    out = np.zeros((m, m))
    out[~np.eye(m, dtype=bool)] = rows.ravel()
    return out


def _forward(labels, features, cfg):
    sy = pairwise_label_similarity(labels)
    sz = pairwise_feature_similarity(features, cfg.feature_sim)
    if not cfg.include_diagonal:
        sy, sz = _offdiag(sy), _offdiag(sz)
    scale = 1.0 if cfg.rank_scale == "raw" else 1.0 / sz.shape[1]
    rk_y = rank(sy) * scale
    rk_z = rank(sz) * scale
    per_row = penalty(rk_y, rk_z, cfg.penalty, cfg.huber_delta)
    return sz, rk_y, rk_z, float(np.sum(per_row))


def _unpack(subset_or_labels, features):
    if isinstance(subset_or_labels, BatchSubset):
        return subset_or_labels.labels, subset_or_labels.features
    return subset_or_labels, features


def ranksim_loss_and_grad(labels, features, cfg):
    """Loss value and its interpolated gradient with respect to ``features``.

    Fewer than two items yield a zero loss, a zero gradient and
    ``degenerate=True``.
    """
    y = np.asarray(labels, dtype=np.float64).ravel()
    z = np.asarray(features, dtype=np.float64)
    if z.ndim != 2 or z.shape[0] != y.size:
        raise ValueError(f"features must be ({y.size}, d), got {z.shape}")
    if y.size < 2:
        return RankSimResult(0.0, np.zeros_like(z), True)
    sz, rk_y, rk_z, loss = _forward(y, z, cfg)
    g_rank = penalty_grad(rk_y, rk_z, cfg.penalty, cfg.huber_delta)
    scale = 1.0 if cfg.rank_scale == "raw" else 1.0 / sz.shape[1]
    g_sim = scale * rank_backward(sz, g_rank, cfg.lam, ranks=np.rint(rk_z / scale))
    if not cfg.include_diagonal:
        g_sim = _scatter_offdiag(g_sim)
    g_feat = pairwise_feature_similarity_backward(z, g_sim, cfg.feature_sim)
    return RankSimResult(loss, g_feat, False)


def ranksim_loss(labels, features=None, cfg=None):
    """Regularizer value; accepts ``(labels, features, cfg)`` or ``(subset, cfg=cfg)``."""
    y, z = _unpack(labels, features)
    y = np.asarray(y, dtype=np.float64).ravel()
    if y.size < 2:
        return 0.0
    return _forward(y, np.asarray(z, dtype=np.float64), cfg)[3]


def ranksim_backward(labels, features=None, cfg=None):
    """Per-feature gradients, unscaled by ``gamma``."""
    y, z = _unpack(labels, features)
    return ranksim_loss_and_grad(y, z, cfg).grad
