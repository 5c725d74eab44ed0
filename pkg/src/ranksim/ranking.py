"""Ranking operator and its blackbox backward pass.

``rank`` follows the competition convention: the rank of element ``i`` is
one plus the number of elements strictly larger than it, so the largest
element gets rank 1 and tied elements share the smaller rank.

``rank_backward`` returns the gradient of the piecewise-affine interpolation
of a rank-based loss rather than the true gradient (which is zero almost
everywhere). It costs exactly one additional call to ``rank`` on the input
perturbed along the incoming gradient.
"""

import numpy as np

__all__ = ["rank", "rank_backward", "midrank"]


def _as_float_array(a, name="a"):
    a = np.asarray(a, dtype=np.float64)
    if a.ndim not in (1, 2):
        raise ValueError(f"{name} must be a vector or a matrix of row vectors, got ndim={a.ndim}")
    if a.shape[-1] == 0:
        raise ValueError("empty vector")
    if not np.all(np.isfinite(a)):
        raise ValueError("non-finite input")
    return a


def _competition_ranks(a):
    # a is 2-D; rank every row independently.
    n_rows, n = a.shape
    order = np.argsort(-a, axis=1, kind="stable")
    srt = np.take_along_axis(a, order, axis=1)
    pos = np.broadcast_to(np.arange(n), (n_rows, n))
    new_group = np.ones((n_rows, n), dtype=bool)
    new_group[:, 1:] = srt[:, 1:] != srt[:, :-1]
    # index of the first element of each tie group, propagated forward
    group_start = np.maximum.accumulate(np.where(new_group, pos, 0), axis=1)
    out = np.empty((n_rows, n), dtype=np.int64)
    np.put_along_axis(out, order, group_start + 1, axis=1)
    return out


def rank(a):
    """Competition ranks of ``a`` (1 = largest).

    A 2-D input is ranked row by row.

    >>> rank([9, 5, 11, 6])
    array([2, 4, 1, 3])
    >>> rank([3, 3, 1])
    array([1, 1, 3])
    """
    a = _as_float_array(a)
    if a.ndim == 1:
        return _competition_ranks(a[None, :])[0]
    return _competition_ranks(a)


def rank_backward(a, incoming_grad, lam, ranks=None):
    """Interpolated gradient of a loss through ``rank``.

    Parameters
    ----------
    a : array-like, shape (n,) or (rows, n)
        Input that was ranked in the forward pass.
    incoming_grad : array-like, same shape as ``a``
        Gradient of the downstream loss with respect to ``rank(a)``.
    lam : float
        Interpolation strength, must be positive.
    ranks : array-like, optional
        ``rank(a)`` from the forward pass. When given, only the perturbed
        input is ranked.

    Returns
    -------
    ndarray of float, same shape as ``a``
        ``-(rank(a) - rank(a + lam * incoming_grad)) / lam``
    """
    lam = float(lam)
    if not lam > 0:
        raise ValueError(f"interpolation strength must be positive, got {lam}")
    a = _as_float_array(a)
    g = np.asarray(incoming_grad, dtype=np.float64)
    if g.shape != a.shape:
        raise ValueError(f"gradient shape mismatch: {g.shape} vs {a.shape}")
    if ranks is None:
        ranks = rank(a)
    else:
        ranks = np.asarray(ranks)
        if ranks.shape != a.shape:
            raise ValueError(f"gradient shape mismatch: ranks {ranks.shape} vs {a.shape}")
    perturbed = rank(a + lam * g)
    return -(ranks - perturbed).astype(np.float64) / lam


def midrank(a):
    """Fractional ranks (1 = largest) with ties given their average position.

    Used for correlation statistics; the regularizer uses :func:`rank`.
    """
    a = _as_float_array(a)
    if a.ndim != 1:
        raise ValueError("midrank expects a vector")
    comp = _competition_ranks(a[None, :])[0]
    # a tie group of size k starting at competition rank r occupies r..r+k-1
    _, inverse, counts = np.unique(comp, return_inverse=True, return_counts=True)
    return comp + (counts[inverse] - 1) / 2.0
