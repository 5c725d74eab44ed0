"""Similarity functions in label and feature space, and rank-vector penalties.

Scalar entry points (``feature_similarity``, ``feature_similarity_grad``)
operate on one pair of vectors. The ``pairwise_*`` functions compute whole
batch matrices and their backward pass with vectorized numpy.

Subgradient conventions: ``sign(0) = 0`` for absolute-value terms, and the
max-norm terms send their gradient to the first maximizing coordinate.
"""

import math

import numpy as np

__all__ = [
    "FEATURE_SIMILARITIES",
    "PENALTIES",
    "DegenerateVectorError",
    "label_similarity",
    "feature_similarity",
    "feature_similarity_grad",
    "penalty",
    "penalty_grad",
    "pairwise_matrix",
    "pairwise_label_similarity",
    "pairwise_feature_similarity",
    "pairwise_feature_similarity_backward",
]

FEATURE_SIMILARITIES = ("cosine", "correlation", "negative_mse", "negative_mae", "negative_linf")
PENALTIES = ("mse", "mae", "huber", "cosine_distance", "linf")


class DegenerateVectorError(ValueError):
    """A zero-norm vector was passed to an angle-based similarity."""


def _check_kind(kind, allowed, what):
    if kind not in allowed:
        raise ValueError(f"unknown {what} {kind!r}; expected one of {allowed}")


def label_similarity(y_i, y_j):
    """Negative absolute distance between two scalar labels."""
    y_i, y_j = float(y_i), float(y_j)
    if not (math.isfinite(y_i) and math.isfinite(y_j)):
        raise ValueError("non-finite label")
    return -abs(y_i - y_j)


def _pair(z1, z2):
    z1 = np.asarray(z1, dtype=np.float64).ravel()
    z2 = np.asarray(z2, dtype=np.float64).ravel()
    if z1.shape != z2.shape:
        raise ValueError(f"dimension mismatch: {z1.shape[0]} vs {z2.shape[0]}")
    if z1.size == 0:
        raise ValueError("empty vector")
    if not (np.all(np.isfinite(z1)) and np.all(np.isfinite(z2))):
        raise ValueError("non-finite input")
    return z1, z2


def _norm_or_raise(v):
    n = float(np.linalg.norm(v))
    if n == 0.0:
        raise DegenerateVectorError("degenerate vector")
    return n


def feature_similarity(z1, z2, kind="cosine"):
    """Similarity of two feature vectors under one of ``FEATURE_SIMILARITIES``."""
    _check_kind(kind, FEATURE_SIMILARITIES, "feature similarity")
    z1, z2 = _pair(z1, z2)
    if kind == "correlation":
        z1, z2 = z1 - z1.mean(), z2 - z2.mean()
        kind = "cosine"
    if kind == "cosine":
        return float(z1 @ z2) / (_norm_or_raise(z1) * _norm_or_raise(z2))
    diff = z1 - z2
    if kind == "negative_mse":
        return -float(np.mean(diff**2))
    if kind == "negative_mae":
        return -float(np.mean(np.abs(diff)))
    return -float(np.max(np.abs(diff)))


def _cosine_grad(z1, z2):
    n1, n2 = _norm_or_raise(z1), _norm_or_raise(z2)
    c = float(z1 @ z2) / (n1 * n2)
    g1 = z2 / (n1 * n2) - c * z1 / n1**2
    g2 = z1 / (n1 * n2) - c * z2 / n2**2
    return g1, g2


def feature_similarity_grad(z1, z2, kind="cosine"):
    """Partial derivatives of :func:`feature_similarity` with respect to both arguments."""
    _check_kind(kind, FEATURE_SIMILARITIES, "feature similarity")
    z1, z2 = _pair(z1, z2)
    d = z1.size
    if kind == "cosine":
        return _cosine_grad(z1, z2)
    if kind == "correlation":
        g1, g2 = _cosine_grad(z1 - z1.mean(), z2 - z2.mean())
        # chain through mean-centering, which is a symmetric projection
        return g1 - g1.mean(), g2 - g2.mean()
    diff = z1 - z2
    if kind == "negative_mse":
        g1 = -2.0 * diff / d
    elif kind == "negative_mae":
        g1 = -np.sign(diff) / d
    else:
        k = int(np.argmax(np.abs(diff)))
        g1 = np.zeros(d)
        g1[k] = -np.sign(diff[k])
    return g1, -g1


def _rank_pair(rk_a, rk_b):
    a = np.asarray(rk_a, dtype=np.float64)
    b = np.asarray(rk_b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"length mismatch: {a.shape} vs {b.shape}")
    if a.ndim not in (1, 2) or a.shape[-1] == 0:
        raise ValueError("penalty expects nonempty rank vectors (or a matrix of row vectors)")
    return a, b


def penalty(rk_a, rk_b, kind="mse", delta=1.0):
    """Distance between two rank vectors; row-wise for 2-D input.

    ``kind`` is one of ``PENALTIES``. ``delta`` is the Huber threshold.
    """
    _check_kind(kind, PENALTIES, "penalty")
    a, b = _rank_pair(rk_a, rk_b)
    diff = a - b
    if kind == "mse":
        out = np.mean(diff**2, axis=-1)
    elif kind == "mae":
        out = np.mean(np.abs(diff), axis=-1)
    elif kind == "huber":
        if not delta > 0:
            raise ValueError("huber delta must be positive")
        ad = np.abs(diff)
        out = np.mean(np.where(ad < delta, 0.5 * diff**2, delta * (ad - 0.5 * delta)), axis=-1)
    elif kind == "linf":
        out = np.max(np.abs(diff), axis=-1)
    else:
        na = np.linalg.norm(a, axis=-1)
        nb = np.linalg.norm(b, axis=-1)
        if np.any(na == 0) or np.any(nb == 0):
            raise DegenerateVectorError("degenerate vector")
        out = 1.0 - np.sum(a * b, axis=-1) / (na * nb)
    return float(out) if np.ndim(out) == 0 else out


def penalty_grad(rk_a, rk_b, kind="mse", delta=1.0):
    """Gradient of :func:`penalty` with respect to its second argument."""
    _check_kind(kind, PENALTIES, "penalty")
    a, b = _rank_pair(rk_a, rk_b)
    m = a.shape[-1]
    diff = a - b
    if kind == "mse":
        return -2.0 * diff / m
    if kind == "mae":
        return -np.sign(diff) / m
    if kind == "huber":
        if not delta > 0:
            raise ValueError("huber delta must be positive")
        return -np.where(np.abs(diff) < delta, diff, delta * np.sign(diff)) / m
    if kind == "linf":
        d2 = np.atleast_2d(diff)
        k = np.argmax(np.abs(d2), axis=-1)
        g = np.zeros_like(d2)
        rows = np.arange(d2.shape[0])
        g[rows, k] = -np.sign(d2[rows, k])
        return g.reshape(diff.shape)
    na = np.linalg.norm(a, axis=-1, keepdims=True)
    nb = np.linalg.norm(b, axis=-1, keepdims=True)
    if np.any(na == 0) or np.any(nb == 0):
        raise DegenerateVectorError("degenerate vector")
    cos = np.sum(a * b, axis=-1, keepdims=True) / (na * nb)
    return -(a / (na * nb) - cos * b / nb**2)


def pairwise_matrix(values, sim="label"):
    """Matrix of ``sim(values[i], values[j])`` over all pairs, diagonal included.

    ``sim`` is ``"label"`` (negative absolute distance of scalars), a name from
    ``FEATURE_SIMILARITIES``, or any callable of two items.
    """
    if callable(sim):
        items = list(values)
        m = len(items)
        if m < 2:
            raise ValueError("need at least 2 items")
        out = np.empty((m, m))
        for i in range(m):
            for j in range(m):
                try:
                    out[i, j] = sim(items[i], items[j])
                except Exception as exc:
                    raise type(exc)(f"similarity failed at ({i}, {j}): {exc}") from exc
        return out
    if sim == "label":
        return pairwise_label_similarity(values)
    return pairwise_feature_similarity(values, sim)


def pairwise_label_similarity(labels):
    y = np.asarray(labels, dtype=np.float64).ravel()
    if y.size < 2:
        raise ValueError("need at least 2 items")
    if not np.all(np.isfinite(y)):
        bad = int(np.flatnonzero(~np.isfinite(y))[0])
        raise ValueError(f"non-finite label at index {bad}")
    return -np.abs(y[:, None] - y[None, :])


def _unit_rows(z):
    norms = np.linalg.norm(z, axis=1)
    if np.any(norms == 0):
        bad = int(np.flatnonzero(norms == 0)[0])
        raise DegenerateVectorError(f"degenerate vector at index {bad}")
    return z / norms[:, None], norms


def _feature_matrix(features):
    z = np.asarray(features, dtype=np.float64)
    if z.ndim != 2 or z.shape[0] < 2:
        raise ValueError("features must be an (M, d) matrix with M >= 2")
    if not np.all(np.isfinite(z)):
        bad = int(np.flatnonzero(~np.all(np.isfinite(z), axis=1))[0])
        raise ValueError(f"non-finite feature vector at index {bad}")
    return z


def pairwise_feature_similarity(features, kind="cosine"):
    """``S[i, j] = feature_similarity(features[i], features[j], kind)``."""
    _check_kind(kind, FEATURE_SIMILARITIES, "feature similarity")
    z = _feature_matrix(features)
    if kind == "correlation":
        z = z - z.mean(axis=1, keepdims=True)
        kind = "cosine"
    if kind == "cosine":
        u, _ = _unit_rows(z)
        s = u @ u.T
        return np.clip(s, -1.0, 1.0)
    diff = np.abs(z[:, None, :] - z[None, :, :])
    if kind == "negative_mse":
        return -(diff**2).mean(axis=2)
    if kind == "negative_mae":
        return -diff.mean(axis=2)
    return -diff.max(axis=2)


def pairwise_feature_similarity_backward(features, grad_sim, kind="cosine"):
    """Gradient with respect to ``features`` given ``grad_sim = dL/dS``.

    ``S`` is the matrix returned by :func:`pairwise_feature_similarity`; each
    entry ``S[i, j]`` depends on both ``features[i]`` and ``features[j]``.
    """
    _check_kind(kind, FEATURE_SIMILARITIES, "feature similarity")
    z = _feature_matrix(features)
    g = np.asarray(grad_sim, dtype=np.float64)
    m, d = z.shape
    if g.shape != (m, m):
        raise ValueError(f"gradient shape mismatch: {g.shape} vs {(m, m)}")
    gs = g + g.T
    if kind in ("cosine", "correlation"):
        zc = z - z.mean(axis=1, keepdims=True) if kind == "correlation" else z
        u, norms = _unit_rows(zc)
        du = gs @ u
        dz = (du - u * np.sum(du * u, axis=1, keepdims=True)) / norms[:, None]
        if kind == "correlation":
            dz = dz - dz.mean(axis=1, keepdims=True)
        return dz
    if kind == "negative_mse":
        return -(2.0 / d) * (gs.sum(axis=1)[:, None] * z - gs @ z)
    diff = z[:, None, :] - z[None, :, :]
    if kind == "negative_mae":
        return -np.einsum("ij,ijk->ik", gs, np.sign(diff)) / d
    k = np.argmax(np.abs(diff), axis=2)
    sgn = np.sign(np.take_along_axis(diff, k[:, :, None], axis=2)[:, :, 0])
    dz = np.zeros_like(z)
    rows = np.repeat(np.arange(m), m)
    np.add.at(dz, (rows, k.ravel()), -(gs * sgn).ravel())
    return dz
