"""Conventional imbalanced-regression techniques.

Label binning, label distribution smoothing (LDS), inverse and square-root
inverse frequency re-weighting, Focal-R scale factors and the two-stage
regressor re-training (RRT) plan.
"""

import csv
from dataclasses import dataclass

import numpy as np

__all__ = [
    "BinnedLabelDensity",
    "LdsKernel",
    "FocalRConfig",
    "RRTPlan",
    "Stage",
    "bin_labels",
    "lds_smooth",
    "reweight",
    "sample_weights",
    "focal_r_weights",
    "rrt_schedule",
    "write_density_csv",
]

REWEIGHT_SCHEMES = ("none", "inv", "sqinv")


@dataclass
class BinnedLabelDensity:
    """Histogram of training labels over equal-width bins.

    ``bin_edges`` has one more entry than ``counts``. Bins are right-open
    except the last, which is closed.
    """

    bin_edges: np.ndarray
    counts: np.ndarray
    smoothed: np.ndarray | None = None

    @property
    def n_bins(self):
        return len(self.counts)

    @property
    def bin_width(self):
        return float(self.bin_edges[1] - self.bin_edges[0])

    def bin_index(self, labels):
        """Bin of each label; labels outside the edges are clipped to the end bins."""
        y = np.asarray(labels, dtype=np.float64)
        idx = np.floor((y - self.bin_edges[0]) / self.bin_width).astype(np.int64)
        return np.clip(idx, 0, self.n_bins - 1)


def bin_labels(labels, bin_width, lo=None, n_bins=None):
    """Count labels per bin.

    By default the bins start at the smallest label and extend until the
    largest label is covered. ``lo`` and ``n_bins`` pin the grid explicitly
    (e.g. to keep empty bins at the ends of a label range).

    >>> bin_labels([1, 1, 2, 3], 1).counts
    array([2, 1, 1])
    """
    y = np.asarray(labels, dtype=np.float64).ravel()
    if y.size == 0:
        raise ValueError("empty labels")
    if not bin_width > 0:
        raise ValueError("bin_width must be positive")
    if not np.all(np.isfinite(y)):
        raise ValueError("non-finite label")
    lo = float(y.min()) if lo is None else float(lo)
    if n_bins is None:
        n_bins = int(np.floor((y.max() - lo) / bin_width)) + 1
    edges = lo + bin_width * np.arange(n_bins + 1)
    density = BinnedLabelDensity(edges, np.zeros(n_bins, dtype=np.int64))
    density.counts = np.bincount(density.bin_index(y), minlength=n_bins).astype(np.int64)
    return density


@dataclass(frozen=True)
class LdsKernel:
    """Symmetric Gaussian smoothing kernel over bins."""

    size: int = 5
    sigma: float = 2.0
    kind: str = "gaussian"

    def __post_init__(self):
        if self.kind != "gaussian":
            raise ValueError(f"unsupported kernel {self.kind!r}")
        if self.size < 1 or self.size % 2 == 0:
            raise ValueError("kernel size must be a positive odd integer")
        if not self.sigma > 0:
            raise ValueError("kernel sigma must be positive")

    @property
    def weights(self):
        half = self.size // 2
        k = np.arange(-half, half + 1, dtype=np.float64)
        w = np.exp(-(k**2) / (2.0 * self.sigma**2))
        return w / w.sum()


def _reflect(idx, n):
    # half-sample mirror: ... 1 0 | 0 1 ... n-1 | n-1 n-2 ...
    idx = np.mod(idx, 2 * n)
    return np.where(idx >= n, 2 * n - 1 - idx, idx)


def lds_smooth(density, kernel=None):
    """Return a copy of ``density`` with ``smoothed`` filled by kernel convolution.

    Taps that fall outside the bin range are mirrored back into it, which
    keeps the smoothing matrix symmetric and stochastic: total mass is
    preserved and a uniform histogram is a fixed point.
    """
    kernel = LdsKernel() if kernel is None else kernel
    counts = np.asarray(density.counts, dtype=np.float64)
    n = counts.size
    w = kernel.weights
    half = kernel.size // 2
    smoothed = np.zeros(n)
    for k, wk in enumerate(w):
        smoothed += wk * counts[_reflect(np.arange(n) + k - half, n)]
    return BinnedLabelDensity(density.bin_edges.copy(), density.counts.copy(), smoothed)


def reweight(density, scheme="sqinv", use_smoothed=False):
    """Per-bin loss weights, normalized to mean 1 over the training samples.

    Bins that hold no training sample and have zero effective density get
    ``nan``; a bin with samples but zero effective density raises.
    """
    if scheme not in REWEIGHT_SCHEMES:
        raise ValueError(f"unknown reweight scheme {scheme!r}; expected one of {REWEIGHT_SCHEMES}")
    counts = np.asarray(density.counts, dtype=np.float64)
    if scheme == "none":
        return np.ones_like(counts)
    if use_smoothed:
        if density.smoothed is None:
            raise ValueError("density has not been smoothed")
        dens = np.asarray(density.smoothed, dtype=np.float64)
    else:
        dens = counts
    empty = dens <= 0
    if np.any(empty & (counts > 0)):
        raise ValueError("empty bin weight")
    with np.errstate(divide="ignore"):
        raw = np.where(empty, np.nan, 1.0 / dens)
    if scheme == "sqinv":
        raw = np.sqrt(raw)
    occupied = counts > 0
    scale = counts[occupied].sum() / np.sum(counts[occupied] * raw[occupied])
    return raw * scale


def sample_weights(density, bin_weights, labels):
    """Look up each label's bin weight."""
    w = np.asarray(bin_weights)[density.bin_index(labels)]
    if not np.all(np.isfinite(w)):
        raise ValueError("empty bin weight")
    return w


@dataclass(frozen=True)
class FocalRConfig:
    beta: float = 0.2
    gamma_exp: float = 1.0

    def __post_init__(self):
        if not (self.beta > 0 and self.gamma_exp > 0):
            raise ValueError("Focal-R beta and gamma must be positive")


def focal_r_weights(errors, cfg=None):
    """Per-sample factors ``sigmoid(beta * |e|) ** gamma``, used as constants."""
    cfg = FocalRConfig() if cfg is None else cfg
    e = np.abs(np.asarray(errors, dtype=np.float64))
    return (1.0 / (1.0 + np.exp(-cfg.beta * e))) ** cfg.gamma_exp


@dataclass(frozen=True)
class Stage:
    name: str
    epochs: int
    trainable: str  # "all" or "head"
    reweight: str | None  # None keeps the run's own scheme
    ranksim: bool


@dataclass(frozen=True)
class RRTPlan:
    """Two-stage schedule: full training, then head-only re-training."""

    stage1_epochs: int = 90
    stage2_epochs: int = 30
    stage2_reweight: str = "inv"
    stage2_lr: float = 1e-3

    def __post_init__(self):
        if self.stage1_epochs < 0 or self.stage2_epochs < 0:
            raise ValueError("epoch counts must be nonnegative")
        if self.stage2_reweight not in REWEIGHT_SCHEMES:
            raise ValueError(f"unknown reweight scheme {self.stage2_reweight!r}")


def rrt_schedule(plan):
    """Expand an :class:`RRTPlan` (or ``None`` for single-stage training) into stages.

    Stage 1 trains every parameter without re-weighting and carries the
    rank-similarity regularizer; stage 2 trains only the head with
    ``plan.stage2_reweight``.
    """
    if plan is None:
        return [Stage("train", -1, "all", None, True)]
    stages = [Stage("stage1", plan.stage1_epochs, "all", "none", True)]
    if plan.stage2_epochs > 0:
        stages.append(Stage("stage2", plan.stage2_epochs, "head", plan.stage2_reweight, False))
    return stages


def write_density_csv(path, density, bin_weights=None):
    """Write ``bin_left, bin_right, count, smoothed, weight`` rows."""
    smoothed = density.smoothed if density.smoothed is not None else [None] * density.n_bins
    weights = bin_weights if bin_weights is not None else [None] * density.n_bins
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["bin_left", "bin_right", "count", "smoothed", "weight"])
        for b in range(density.n_bins):
            s = smoothed[b]
            w = weights[b]
            writer.writerow([
                repr(float(density.bin_edges[b])),
                repr(float(density.bin_edges[b + 1])),
                int(density.counts[b]),
                "" if s is None else repr(float(s)),
                "" if w is None or not np.isfinite(w) else repr(float(w)),
            ])
