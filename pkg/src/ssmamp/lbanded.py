"""Calculus for L-banded covariance matrices and optimal damping.

An L-banded matrix of order t+1 is determined by a value sequence
v = (v_0, ..., v_t) through V[i, j] = v[max(i, j)].  Covariance matrices
of this shape admit closed forms for the inverse (tridiagonal), the
determinant, and the quadratic forms that drive optimal damping.  The
closed forms here are exercised against dense linear algebra in the
test suite.

Indices are 0-based throughout.
"""

from __future__ import annotations

import numpy as np

from .errors import SingularAugmentation, SingularCovariance, SingularSequence

# Relative eigenvalue threshold below which a symmetric matrix is treated
# as singular.
RCOND_THRESHOLD = 1e-10


def lbanded_matrix(v):
    """Dense L-banded matrix V[i, j] = v[max(i, j)] from a value sequence."""
    v = np.asarray(v, dtype=float)
    idx = np.arange(len(v))
    return v[np.maximum(idx[:, None], idx[None, :])]


def _deltas(v):
    """Adjacent differences d_i = v_i - v_{i+1}, with d_t = v_t.

    Raises SingularSequence when any interior difference or the final
    value vanishes, which is exactly when the L-banded matrix is singular.
    """
    v = np.asarray(v, dtype=float)
    d = np.empty(len(v))
    d[:-1] = v[:-1] - v[1:]
    d[-1] = v[-1]
    scale = np.max(np.abs(v)) if len(v) else 0.0
    if scale == 0.0 or np.any(np.abs(d) <= RCOND_THRESHOLD * scale):
        raise SingularSequence(
            "adjacent values coincide (or v_t = 0); L-banded matrix is singular"
        )
    return d


def lbanded_inverse(v):
    """Closed-form inverse of the L-banded matrix for value sequence v.

    The inverse is tridiagonal with
        (V^-1)[i, i] = 1/d_{i-1} + 1/d_i      (the 1/d_{-1} term is absent)
        (V^-1)[i, j] = -1/d_min(i,j)          for |i - j| = 1
    where d_i = v_i - v_{i+1} and d_t = v_t.
    """
    d = _deltas(v)
    t = len(d)
    inv_d = 1.0 / d
    out = np.zeros((t, t))
    diag = inv_d.copy()
    diag[1:] += inv_d[:-1]
    out[np.arange(t), np.arange(t)] = diag
    if t > 1:
        off = -inv_d[:-1]
        out[np.arange(t - 1), np.arange(1, t)] = off
        out[np.arange(1, t), np.arange(t - 1)] = off
    return out


def lbanded_determinant(v):
    """det V = v_t * prod_i (v_i - v_{i+1}); 0 when the sequence repeats."""
    v = np.asarray(v, dtype=float)
    d = np.empty(len(v))
    d[:-1] = v[:-1] - v[1:]
    d[-1] = v[-1]
    return float(np.prod(d))


def lbanded_quadratic_stats(v):
    """Row sums of V^-1 and the total 1' V^-1 1 for an L-banded V.

    For an invertible L-banded matrix the row sums of the inverse are
    (0, ..., 0, 1/v_t) and the total is 1/v_t.
    """
    _deltas(v)  # validate invertibility
    v = np.asarray(v, dtype=float)
    rowsum = np.zeros(len(v))
    rowsum[-1] = 1.0 / v[-1]
    return rowsum, 1.0 / v[-1]


def rcond(V):
    """lambda_min / lambda_max of a symmetric matrix (0 for the 0x0 case)."""
    V = np.asarray(V, dtype=float)
    if V.size == 0:
        return 0.0
    w = np.linalg.eigvalsh(0.5 * (V + V.T))
    hi = np.max(np.abs(w))
    if hi == 0.0:
        return 0.0
    return float(np.min(np.abs(w)) / hi)


def is_invertible(V, threshold=RCOND_THRESHOLD):
    """True when a symmetric matrix passes the rcond singularity test."""
    return rcond(V) >= threshold


def optimal_damping(V, threshold=RCOND_THRESHOLD):
    """Variance-optimal damping vector for error covariance V.

    Minimizing zeta' V zeta subject to sum(zeta) = 1 gives
        zeta = V^-1 1 / (1' V^-1 1),   achieved variance 1 / (1' V^-1 1).
    Raises SingularCovariance when V fails the rcond test.
    """
    V = np.asarray(V, dtype=float)
    if not is_invertible(V, threshold):
        raise SingularCovariance("covariance fails rcond test; cannot damp")
    ones = np.ones(V.shape[0])
    s = np.linalg.solve(V, ones)
    total = ones @ s
    if total <= 0.0:
        raise SingularCovariance("1' V^-1 1 is not positive")
    return s / total, 1.0 / total


def effective_index_update(V, index_set, new_index, threshold=RCOND_THRESHOLD):
    """Grow an effective index set by one candidate index.

    index_set is a tuple of indices into the covariance V whose restriction
    is invertible.  The candidate joins the set only if the augmented
    restriction still passes the rcond test; otherwise the set is unchanged.
    """
    V = np.asarray(V, dtype=float)
    trial = tuple(index_set) + (int(new_index),)
    sub = V[np.ix_(trial, trial)]
    if is_invertible(sub, threshold):
        return trial
    return tuple(index_set)


def effective_index_set(V, threshold=RCOND_THRESHOLD):
    """Run the effective-index recursion over all indices of V in order."""
    V = np.asarray(V, dtype=float)
    t = V.shape[0]
    if t == 0:
        return ()
    index_set = ()
    for i in range(t):
        index_set = effective_index_update(V, index_set, i, threshold)
    return index_set


def damping_with_backoff(V, index_set, threshold=RCOND_THRESHOLD):
    """Optimal damping restricted to an index set, embedded in full length.

    Returns (zeta, variance) with zeta of length V.shape[0], supported on
    index_set.  The restriction must be invertible (the effective-index
    recursion guarantees this); SingularCovariance propagates otherwise.
    """
    V = np.asarray(V, dtype=float)
    index_set = tuple(index_set)
    sub = V[np.ix_(index_set, index_set)]
    zeta_sub, var = optimal_damping(sub, threshold)
    zeta = np.zeros(V.shape[0])
    zeta[list(index_set)] = zeta_sub
    return zeta, var


def block_inverse_update(A_inv, b, c, threshold=RCOND_THRESHOLD):
    """Inverse of [[A, b], [b', c]] given A_inv, in O(t^2).

    Uses the bordering identity with alpha = 1 / (c - b' A^-1 b).  Raises
    SingularAugmentation when the Schur complement is (numerically) zero
    relative to c and the quadratic form.
    """
    A_inv = np.asarray(A_inv, dtype=float)
    b = np.asarray(b, dtype=float)
    t = A_inv.shape[0]
    if t == 0:
        if c <= 0.0:
            raise SingularAugmentation("scalar block is not positive")
        return np.array([[1.0 / c]])
    beta = A_inv @ b
    quad = b @ beta
    schur = c - quad
    scale = max(abs(c), abs(quad))
    # for covariance matrices the Schur complement must be strictly positive
    if scale == 0.0 or schur <= RCOND_THRESHOLD * scale:
        raise SingularAugmentation("augmented covariance is singular")
    alpha = 1.0 / schur
    out = np.empty((t + 1, t + 1))
    out[:t, :t] = A_inv + alpha * np.outer(beta, beta)
    out[:t, t] = -alpha * beta
    out[t, :t] = -alpha * beta
    out[t, t] = alpha
    return out


def lbandedness_score(V):
    """Worst relative deviation of V from L-banded shape.

    score = max_{i != j} |V[i, j] - V[m, m]| / V[m, m]  with m = max(i, j);
    zero for a 1x1 matrix and for exactly L-banded input.
    """
    V = np.asarray(V)
    t = V.shape[0]
    if t <= 1:
        return 0.0
    score = 0.0
    for j in range(1, t):
        ref = V[j, j].real if np.iscomplexobj(V) else V[j, j]
        if ref == 0.0:
            if np.any(V[:j, j] != 0.0):
                return np.inf
            continue
        dev = max(np.max(np.abs(V[:j, j] - ref)), np.max(np.abs(V[j, :j] - ref))) / abs(ref)
        score = max(score, float(dev))
    return score
