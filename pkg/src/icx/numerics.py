"""Dense kernels with explicit tolerance policy.

Rank is decided by the SVD with a cutoff relative to the largest singular
value. Independent rows are chosen by column-pivoted QR of the transpose;
the SVD decides how many, the pivots decide which.
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import InvalidArgs, NonFiniteInput, SpanViolation


@dataclass(frozen=True)
class Tolerances:
    rank_rel: float = 1e-8
    fit_abs: float = 1e-8
    pinv_rel: float = 1e-12

    def __post_init__(self):
        for name in ("rank_rel", "fit_abs", "pinv_rel"):
            if not getattr(self, name) > 0:
                raise InvalidArgs(f"{name} must be strictly positive")


DEFAULT_TOL = Tolerances()


def _as_finite(M):
    M = np.asarray(M, dtype=float)
    if M.ndim == 1:
        M = M[None, :]
    if not np.all(np.isfinite(M)):
        raise NonFiniteInput("matrix contains NaN or Inf")
    return M


def numerical_rank(M, tol=DEFAULT_TOL):
    """Count singular values above ``tol.rank_rel * sigma_max``."""
    M = _as_finite(M)
    if M.size == 0:
        return 0
    s = np.linalg.svd(M, compute_uv=False)
    if s[0] == 0.0:
        return 0
    return int(np.count_nonzero(s > tol.rank_rel * s[0]))


def pseudo_inverse(M, tol=DEFAULT_TOL):
    M = _as_finite(M)
    m, n = M.shape
    if M.size == 0:
        return np.zeros((n, m))
    U, s, Vt = np.linalg.svd(M, full_matrices=False)
    keep = s > tol.pinv_rel * s[0] if s[0] > 0 else np.zeros_like(s, dtype=bool)
    s_inv = np.zeros_like(s)
    s_inv[keep] = 1.0 / s[keep]
    return (Vt.T * s_inv) @ U.T


def select_independent_rows(Z, tol=DEFAULT_TOL, count=None):
    """Pick ``numerical_rank(Z)`` rows of ``Z`` that span all of its rows.

    Returns the chosen row indices in ascending order together with the
    submatrix they form. ``count`` overrides the SVD rank decision.
    """
    Z = _as_finite(Z)
    k = numerical_rank(Z, tol) if count is None else min(int(count), *Z.shape)
    if k == 0:
        return [], Z[:0]
    # Pivoted QR breaks exact ties by lowest column index; pre-scaling is
    # unnecessary because only the first k pivots are used.
    _, _, piv = scipy.linalg.qr(Z.T, mode="economic", pivoting=True)
    idx = sorted(int(i) for i in piv[:k])
    return idx, Z[idx]


def row_combination(Z_tilde, Z, tol=DEFAULT_TOL):
    """Coefficients ``B`` with ``B @ Z_tilde ~= Z`` (``B = Z Z_tilde^+``)."""
    Z_tilde = np.asarray(Z_tilde, dtype=float)
    Z = np.asarray(Z, dtype=float)
    if Z_tilde.shape[0] == 0:
        B = np.zeros((Z.shape[0], 0))
        resid = np.linalg.norm(Z)
    else:
        B = Z @ pseudo_inverse(Z_tilde, tol)
        resid = np.linalg.norm(B @ Z_tilde - Z)
    if resid > tol.fit_abs * (1.0 + np.linalg.norm(Z)):
        raise SpanViolation(
            f"rows not in span of the basis rows (residual {resid:.3e})")
    return B


def truncated_svd(M, r):
    """Best rank-``r`` factors ``(X, Y)`` of ``M`` and the discarded energy."""
    M = np.asarray(M, dtype=float)
    m, n = M.shape
    if r == 0 or M.size == 0:
        return np.zeros((m, r)), np.zeros((r, n)), float(np.linalg.norm(M))
    U, s, Vt = np.linalg.svd(M, full_matrices=False)
    k = min(r, s.size)
    X = np.zeros((m, r))
    Y = np.zeros((r, n))
    X[:, :k] = U[:, :k] * s[:k]
    Y[:k] = Vt[:k]
    tail = float(np.sqrt(np.sum(s[k:] ** 2)))
    return X, Y, tail
