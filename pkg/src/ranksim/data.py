"""Seeded synthetic imbalanced-regression benchmarks.

Training labels follow a skewed profile over equal-width label bins (with
optional zero-shot bins left out entirely); validation and test sets are
balanced over every bin. Inputs are a fixed random Fourier embedding of the
label plus Gaussian noise::

    x_k = sin(omega_k * t + phi_k) + noise,    t = (y - lo) / (hi - lo)

Region names for evaluation: ``many`` (count > many_min), ``few``
(0 < count < few_max), ``zero`` (count == 0) and ``medium`` otherwise.
"""

import csv
import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .baselines import bin_labels

__all__ = [
    "SkewSpec",
    "ImbalancedDataset",
    "generate",
    "profile_probabilities",
    "shot_regions",
    "shot_partition",
    "save_dataset",
    "load_dataset",
]

PROFILES = ("exponential", "zipf", "two_peak")
REGIONS = ("many", "medium", "few", "zero")


@dataclass(frozen=True)
class SkewSpec:
    label_range: tuple = (0.0, 100.0)
    bin_width: float = 1.0
    n_train: int = 5000
    profile: str = "exponential"
    rate: float = 0.05  # exponential profile
    exponent: float = 1.0  # zipf profile
    zero_shot_bins: tuple = ()
    noise_sigma: float = 0.5
    input_dim: int = 16
    n_val_per_bin: int = 5
    n_test_per_bin: int = 10
    discrete_labels: bool = True
    many_min: int = 50
    few_max: int = 10
    seed: int = 0

    def __post_init__(self):
        lo, hi = self.label_range
        object.__setattr__(self, "label_range", (float(lo), float(hi)))
        object.__setattr__(self, "zero_shot_bins", tuple(int(b) for b in self.zero_shot_bins))
        if not lo < hi:
            raise ValueError("label_range must satisfy lo < hi")
        if not self.bin_width > 0:
            raise ValueError("bin_width must be positive")
        if self.profile not in PROFILES:
            raise ValueError(f"unknown profile {self.profile!r}; expected one of {PROFILES}")
        if self.n_train < 1 or self.input_dim < 1:
            raise ValueError("n_train and input_dim must be positive")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be nonnegative")
        if any(not 0 <= b < self.n_bins for b in self.zero_shot_bins):
            raise ValueError("zero-shot bins must lie inside the label range")

    @property
    def n_bins(self):
        lo, hi = self.label_range
        return int(np.ceil((hi - lo) / self.bin_width - 1e-9))

    def to_dict(self):
        d = asdict(self)
        d["label_range"] = list(self.label_range)
        d["zero_shot_bins"] = list(self.zero_shot_bins)
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        if "label_range" in d:
            d["label_range"] = tuple(d["label_range"])
        if "zero_shot_bins" in d:
            d["zero_shot_bins"] = tuple(d["zero_shot_bins"])
        return cls(**d)


@dataclass
class ImbalancedDataset:
    spec: SkewSpec
    X_train: np.ndarray = field(repr=False)
    y_train: np.ndarray = field(repr=False)
    X_val: np.ndarray = field(repr=False)
    y_val: np.ndarray = field(repr=False)
    X_test: np.ndarray = field(repr=False)
    y_test: np.ndarray = field(repr=False)

    @property
    def bin_width(self):
        return self.spec.bin_width

    @property
    def n_bins(self):
        return self.spec.n_bins

    def train_density(self):
        return bin_labels(self.y_train, self.spec.bin_width, lo=self.spec.label_range[0], n_bins=self.n_bins)

    def bin_regions(self):
        return shot_regions(self.train_density().counts, self.spec.many_min, self.spec.few_max)

    def regions_of(self, labels):
        """Shot region name for each label."""
        density = self.train_density()
        return self.bin_regions()[density.bin_index(labels)]

    def split(self, name):
        return {
            "train": (self.X_train, self.y_train),
            "val": (self.X_val, self.y_val),
            "test": (self.X_test, self.y_test),
        }[name]


def profile_probabilities(spec):
    """Probability of each label bin for the training set."""
    b = np.arange(spec.n_bins, dtype=np.float64)
    if spec.profile == "exponential":
        p = np.exp(-spec.rate * b)
    elif spec.profile == "zipf":
        p = (b + 1.0) ** (-spec.exponent)
    else:
        n = spec.n_bins
        p = (
            np.exp(-((b - 0.2 * n) ** 2) / (2 * (0.08 * n) ** 2))
            + 0.5 * np.exp(-((b - 0.7 * n) ** 2) / (2 * (0.08 * n) ** 2))
            + 0.01
        )
    p[list(spec.zero_shot_bins)] = 0.0
    if p.sum() <= 0:
        raise ValueError("all bins excluded")
    return p / p.sum()


def _embed(y, spec, omega, phi, rng):
    lo, hi = spec.label_range
    t = (np.asarray(y, dtype=np.float64) - lo) / (hi - lo)
    X = np.sin(t[:, None] * omega[None, :] + phi[None, :])
    if spec.noise_sigma > 0:
        X = X + rng.normal(0.0, spec.noise_sigma, size=X.shape)
    return X


def _labels_from_bins(bins, spec, rng):
    lo = spec.label_range[0]
    if spec.discrete_labels:
        return lo + spec.bin_width * bins.astype(np.float64)
    return lo + spec.bin_width * (bins + rng.uniform(0.0, 1.0, size=bins.size))


def generate(spec):
    """Build the train/val/test splits for ``spec``; deterministic in ``spec.seed``."""
    emb_ss, train_ss, val_ss, test_ss = np.random.SeedSequence(spec.seed).spawn(4)
    emb_rng = np.random.default_rng(emb_ss)
    omega = emb_rng.uniform(0.5, 4.0 * np.pi, size=spec.input_dim)
    phi = emb_rng.uniform(0.0, 2.0 * np.pi, size=spec.input_dim)

    probs = profile_probabilities(spec)
    rng = np.random.default_rng(train_ss)
    bins = rng.choice(spec.n_bins, size=spec.n_train, p=probs)
    y_train = _labels_from_bins(bins, spec, rng)
    X_train = _embed(y_train, spec, omega, phi, rng)

    splits = []
    for ss, per_bin in ((val_ss, spec.n_val_per_bin), (test_ss, spec.n_test_per_bin)):
        rng = np.random.default_rng(ss)
        bins = np.repeat(np.arange(spec.n_bins), per_bin)
        y = _labels_from_bins(bins, spec, rng)
        splits.append((_embed(y, spec, omega, phi, rng), y))
    (X_val, y_val), (X_test, y_test) = splits
    return ImbalancedDataset(spec, X_train, y_train, X_val, y_val, X_test, y_test)


def shot_regions(counts, many_min=50, few_max=10):
    """Region name per bin from training counts."""
    c = np.asarray(counts)
    out = np.full(c.shape, "medium", dtype=object)
    out[c > many_min] = "many"
    out[(c > 0) & (c < few_max)] = "few"
    out[c == 0] = "zero"
    return out


def shot_partition(dataset_or_counts, many_min=None, few_max=None):
    """Map bin key to region name.

    Accepts an :class:`ImbalancedDataset` (bins keyed by index, thresholds
    from its spec) or a mapping ``{key: count}``.
    """
    if isinstance(dataset_or_counts, ImbalancedDataset):
        spec = dataset_or_counts.spec
        regions = shot_regions(
            dataset_or_counts.train_density().counts,
            spec.many_min if many_min is None else many_min,
            spec.few_max if few_max is None else few_max,
        )
        return {b: str(r) for b, r in enumerate(regions)}
    keys = list(dataset_or_counts)
    regions = shot_regions(
        [dataset_or_counts[k] for k in keys],
        50 if many_min is None else many_min,
        10 if few_max is None else few_max,
    )
    return {k: str(r) for k, r in zip(keys, regions)}


def save_dataset(dataset, csv_path, spec_path=None):
    """Write all splits to CSV (``x_0..x_{d-1}, y, split``) and the spec to JSON."""
    d = dataset.spec.input_dim
    with open(csv_path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow([f"x_{k}" for k in range(d)] + ["y", "split"])
        for name in ("train", "val", "test"):
            X, y = dataset.split(name)
            for row, label in zip(X.tolist(), y.tolist()):
                writer.writerow([repr(v) for v in row] + [repr(label), name])
    if spec_path is not None:
        with open(spec_path, "w") as f:
            json.dump(dataset.spec.to_dict(), f, indent=2)


def load_dataset(csv_path, spec_path):
    with open(spec_path) as f:
        spec = SkewSpec.from_dict(json.load(f))
    rows = {"train": ([], []), "val": ([], []), "test": ([], [])}
    with open(csv_path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader)
        d = len(header) - 2
        for r in reader:
            xs, ys = rows[r[-1]]
            xs.append([float(v) for v in r[:d]])
            ys.append(float(r[d]))
    arrays = {}
    for name, (xs, ys) in rows.items():
        arrays[f"X_{name}"] = np.asarray(xs, dtype=np.float64).reshape(-1, d)
        arrays[f"y_{name}"] = np.asarray(ys, dtype=np.float64)
    return ImbalancedDataset(spec, **arrays)
