"""Dense numeric kernels.

Masked least squares, masked multiplicative-update NMF, and the norm /
cost primitives that back the constraint layer.  All heavy lifting is
numpy; inputs are plain float64 arrays.
"""

from __future__ import annotations

import numpy as np


class DimensionError(ValueError):
    """Shapes of the operands do not agree."""


class DomainError(ValueError):
    """An operand violates a value-domain precondition (e.g. negativity)."""


def make_rng(seed):
    """Seeded generator with a fixed, platform-stable algorithm (PCG64).

    Identical seed gives an identical stream on every platform.
    """
    return np.random.Generator(np.random.PCG64(seed))


def vector(data):
    """Validate and return a finite 1-d float array."""
    a = np.array(data, dtype=float)
    if a.ndim != 1:
        raise DimensionError("expected a 1-d array, got shape %s" % (a.shape,))
    if not np.all(np.isfinite(a)):
        raise DomainError("vector entries must be finite")
    return a


def matrix(data):
    """Validate and return a finite 2-d float array."""
    a = np.array(data, dtype=float)
    if a.ndim != 2:
        raise DimensionError("expected a 2-d array, got shape %s" % (a.shape,))
    if not np.all(np.isfinite(a)):
        raise DomainError("matrix entries must be finite")
    return a


def norm_l0(v, eps=0.0):
    """Number of entries with magnitude strictly above eps."""
    if eps < 0:
        raise DomainError("eps must be >= 0")
    v = np.asarray(v, dtype=float)
    return int(np.count_nonzero(np.abs(v) > eps))


def masked_l0_cost(y, t, eps=0.0):
    """Count of active entries of y falling outside the support of t.

    t is a 0/1 vector; the cost is the l0 norm of y restricted to the
    positions where t is 0.
    """
    y = np.asarray(y, dtype=float)
    t = np.asarray(t, dtype=float)
    if y.shape != t.shape:
        raise DimensionError("y and t must have the same length")
    return int(np.count_nonzero((t == 0) & (np.abs(y) > eps)))


def lp_distance(y, t, p):
    """p-norm of y - t.  p may be any real >= 1, numpy.inf, or 0.

    p = 0 counts the number of differing coordinates.
    """
    y = np.asarray(y, dtype=float)
    t = np.asarray(t, dtype=float)
    if y.shape != t.shape:
        raise DimensionError("y and t must have the same length")
    d = y - t
    if p == 0:
        return float(np.count_nonzero(d))
    if np.isinf(p):
        return float(np.max(np.abs(d))) if d.size else 0.0
    if p < 1:
        raise DomainError("p must be >= 1, inf, or 0")
    return float(np.sum(np.abs(d) ** p) ** (1.0 / p))


def solve_least_squares(X, y, mask):
    """Least squares restricted to the masked column subset.

    Returns (theta, loss) where theta is zero outside the mask support and
    minimises ||X theta - y||_2 over the masked columns.  Rank-deficient
    systems get the minimum-norm solution (SVD-based solve).  The reported
    loss is the unsquared Euclidean residual norm.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    mask = np.asarray(mask)
    if X.ndim != 2:
        raise DimensionError("X must be 2-d")
    m, d = X.shape
    if y.shape != (m,):
        raise DimensionError("y length must equal the number of rows of X")
    if mask.shape != (d,):
        raise DimensionError("mask length must equal the number of columns of X")
    theta = np.zeros(d)
    cols = np.flatnonzero(mask)
    if cols.size:
        sol, _, _, _ = np.linalg.lstsq(X[:, cols], y, rcond=None)
        theta[cols] = sol
    loss = float(np.linalg.norm(X @ theta - y))
    return theta, loss


def frobenius(A):
    return float(np.linalg.norm(np.asarray(A, dtype=float)))


def nmf_multiplicative(A, k, mask, iters, rng, eps=1e-12, on_iteration=None):
    """Masked NMF by multiplicative updates for the Frobenius objective.

    W (n x k) and H (k x m) are initialised uniformly in (0, 1] from rng,
    then W is projected onto the binary mask (W *= mask) before the first
    update and after every W update, so masked positions stay exactly 0.
    Returns (W, H, loss) with loss = ||A - W H||_F (unsquared).

    on_iteration, if given, is called as on_iteration(it, W, H, loss) after
    each update step (views, do not mutate).
    """
    A = np.asarray(A, dtype=float)
    if A.ndim != 2:
        raise DimensionError("A must be 2-d")
    if np.any(A < 0):
        raise DomainError("A must be non-negative")
    if k < 1:
        raise DomainError("k must be >= 1")
    n, m = A.shape
    mask = np.asarray(mask, dtype=float)
    if mask.shape != (n, k):
        raise DimensionError("mask must be n x k")
    # 1 - random() lands in (0, 1]; draw W first, then H, then project W.
    W = 1.0 - rng.random((n, k))
    H = 1.0 - rng.random((k, m))
    W *= mask
    for it in range(iters):
        H *= (W.T @ A) / (W.T @ W @ H + eps)
        W *= (A @ H.T) / (W @ (H @ H.T) + eps)
        W *= mask
        if on_iteration is not None:
            on_iteration(it, W, H, frobenius(A - W @ H))
    loss = frobenius(A - W @ H)
    return W, H, loss
