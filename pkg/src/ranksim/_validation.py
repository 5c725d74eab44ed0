"""Input checks shared by the estimator and the experiment runner."""

import numbers

import numpy as np
from sklearn.utils.validation import check_array, check_X_y

__all__ = ["check_training_data", "check_features", "check_positive", "check_choice"]


def check_training_data(X, y, sample_weight=None):
    X, y = check_X_y(X, y, dtype=np.float64, y_numeric=True, ensure_min_samples=2)
    if sample_weight is not None:
        sample_weight = np.asarray(sample_weight, dtype=np.float64).ravel()
        if sample_weight.shape != y.shape:
            raise ValueError(f"sample_weight has {sample_weight.size} entries for {y.size} samples")
        if np.any(sample_weight < 0) or not np.all(np.isfinite(sample_weight)):
            raise ValueError("sample_weight must be finite and nonnegative")
    return X, y, sample_weight


def check_features(X, n_features, owner="the estimator"):
    X = check_array(X, dtype=np.float64)
    if X.shape[1] != n_features:
        raise ValueError(f"X has {X.shape[1]} features, but {owner} is expecting {n_features} features as input.")
    return X


def check_positive(name, value, strict=True):
    if not isinstance(value, numbers.Real) or not np.isfinite(value):
        raise ValueError(f"{name} must be a finite number, got {value!r}")
    if (strict and value <= 0) or (not strict and value < 0):
        raise ValueError(f"{name} must be {'positive' if strict else 'nonnegative'}, got {value!r}")
    return value


def check_choice(name, value, choices):
    if value not in choices:
        raise ValueError(f"{name} must be one of {tuple(choices)}, got {value!r}")
    return value
