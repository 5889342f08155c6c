"""Dense matrix primitives for sparse plus indefinite low-rank estimation.

Everything here is a pure function of its inputs. Matrices are dense
``numpy`` arrays; symmetric inputs are validated where the result depends
on symmetry.
"""

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from ._validation import check_positive, check_symmetric
from .exceptions import InvalidArgumentError

__all__ = [
    "Factor",
    "hard_truncate",
    "dispersed_truncate",
    "project_rows",
    "incoherence_bound",
    "top_eig_by_magnitude",
    "signature_split",
    "factor_from_eig",
    "factor_distance",
    "total_distance",
    "spectral_norm",
]

# Eigenvalues at or below this fraction of the largest magnitude count as
# non-positive when splitting by sign.
SIGN_RTOL = 1e-10


@dataclass(frozen=True)
class Factor:
    """Low-rank factor ``U`` with sign pattern ``diag(I_r1, -I_{r-r1})``.

    Parameters
    ----------
    U : ndarray of shape (d, r)
    r1 : int
        Number of leading columns carrying a ``+1`` sign.
    """

    U: np.ndarray
    r1: int

    def __post_init__(self):
        U = np.asarray(self.U, dtype=np.float64)
        if U.ndim != 2:
            raise InvalidArgumentError("U must be two-dimensional")
        if not 0 <= self.r1 <= U.shape[1]:
            raise InvalidArgumentError(
                f"r1={self.r1} outside [0, {U.shape[1]}]")
        object.__setattr__(self, "U", U)
        object.__setattr__(self, "r1", int(self.r1))

    @property
    def d(self):
        return self.U.shape[0]

    @property
    def r(self):
        return self.U.shape[1]

    @property
    def signs(self):
        """Diagonal of the sign matrix as a length-``r`` vector."""
        return np.concatenate([np.ones(self.r1), -np.ones(self.r - self.r1)])

    def reconstruct(self):
        """Return ``U diag(signs) U^T`` (exactly symmetric)."""
        if self.r == 0:
            return np.zeros((self.d, self.d))
        R = (self.U * self.signs) @ self.U.T
        return (R + R.T) / 2


@lru_cache(maxsize=16)
def _upper_order(d):
    rows, cols = np.triu_indices(d)
    cost = np.where(rows == cols, 1, 2)
    rows.setflags(write=False)
    cols.setflags(write=False)
    cost.setflags(write=False)
    return rows, cols, cost


def hard_truncate(A, s):
    """Keep the ``s`` largest-magnitude entries of a symmetric matrix.

    Upper-triangle entries are ranked by magnitude, ties broken by
    ``(i, j)`` in lexicographic order. An off-diagonal entry uses two units
    of the budget (it is kept together with its mirror), a diagonal entry
    one. The last pair kept may straddle the budget, so the output can have
    ``s + 1`` nonzeros.

    Parameters
    ----------
    A : array_like of shape (d, d)
        Symmetric matrix.
    s : int
        Entry budget, at least 1.

    Returns
    -------
    ndarray of shape (d, d)
    """
    A = check_symmetric(A)
    if int(s) != s or s < 1:
        raise InvalidArgumentError(f"s must be a positive integer, got {s}")
    return _hard_truncate(A, int(s))


def _hard_truncate(A, s):
    d = A.shape[0]
    if s >= d * d:
        return A.copy()
    rows, cols, cost = _upper_order(d)
    mags = np.abs(A[rows, cols])
    m = mags.size
    if s < m:
        # every kept entry costs >= 1, so only the top s can survive
        cutoff = np.partition(mags, m - s)[m - s]
        cand = np.flatnonzero(mags >= cutoff)
    else:
        cand = np.arange(m)
    order = cand[np.argsort(-mags[cand], kind="stable")]
    c = cost[order]
    kept = order[np.cumsum(c) - c < s]
    out = np.zeros_like(A)
    vals = A[rows[kept], cols[kept]]
    out[rows[kept], cols[kept]] = vals
    out[cols[kept], rows[kept]] = vals
    return out


def _row_budget(alpha, d):
    # guard against alpha * d landing a hair above an integer
    return min(d, max(1, math.ceil(alpha * d - 1e-9)))


def dispersed_truncate(A, alpha):
    """Keep entries that are in the top ``ceil(alpha d)`` of both their row
    and their column (by magnitude; ties go to the smaller index)."""
    A = check_symmetric(A)
    alpha = check_positive(alpha, "alpha")
    return _dispersed_truncate(A, alpha)


def _top_mask(mags, k):
    # row-wise top-k mask; ties at the k-th value resolved by column index
    kth = -np.partition(-mags, k - 1, axis=1)[:, k - 1:k]
    above = mags > kth
    ties = mags == kth
    room = k - above.sum(axis=1, keepdims=True)
    return above | (ties & (np.cumsum(ties, axis=1) <= room))


def _dispersed_truncate(A, alpha):
    d = A.shape[0]
    k = _row_budget(alpha, d)
    if k >= d:
        return A.copy()
    mags = np.abs(A)
    keep = _top_mask(mags, k) & _top_mask(mags.T, k).T
    return np.where(keep, A, 0.0)


def incoherence_bound(beta, r, d):
    """Squared row-norm cap ``beta * r / d`` of the incoherent factor set."""
    return beta * r / d


def project_rows(U, bound2):
    """Project each row of `U` onto the Euclidean ball of radius
    ``sqrt(bound2)``."""
    bound2 = check_positive(bound2, "bound2", strict=False)
    U = np.asarray(U, dtype=np.float64)
    norms2 = np.einsum("ij,ij->i", U, U)
    over = norms2 > bound2
    if not over.any():
        return U.copy()
    scale = np.ones_like(norms2)
    scale[over] = np.sqrt(bound2 / norms2[over])
    return U * scale[:, None]


def spectral_norm(U):
    """Largest singular value of a (tall) matrix; 0 for empty input."""
    U = np.asarray(U, dtype=np.float64)
    if U.size == 0:
        return 0.0
    # r x r Gram keeps this cheap for d >> r
    gram = U.T @ U
    return float(np.sqrt(max(np.linalg.eigvalsh(gram)[-1], 0.0)))


def top_eig_by_magnitude(R, r):
    """Return the `r` eigenpairs of a symmetric matrix with largest |eigenvalue|.

    Eigenvalues come back sorted by decreasing magnitude (stable with
    respect to the ascending order of the solver), eigenvectors as columns.
    """
    R = check_symmetric(R, "R")
    d = R.shape[0]
    if int(r) != r or not 0 <= r <= d:
        raise InvalidArgumentError(f"r must be an integer in [0, {d}], got {r}")
    if r == 0:
        return np.zeros(0), np.zeros((d, 0))
    vals, vecs = np.linalg.eigh(R)
    order = np.argsort(-np.abs(vals), kind="stable")[:r]
    return vals[order], vecs[:, order]


def signature_split(eigvals):
    """Count positive eigenvalues and order them first.

    Returns
    -------
    r1 : int
        Number of eigenvalues classified as positive.
    perm : ndarray of int
        Indices that put the positive eigenvalues first, each sign class
        keeping its incoming order.
    """
    eigvals = np.asarray(eigvals, dtype=np.float64).ravel()
    if eigvals.size == 0:
        return 0, np.zeros(0, dtype=int)
    cutoff = SIGN_RTOL * np.max(np.abs(eigvals))
    positive = eigvals > cutoff
    perm = np.concatenate([np.flatnonzero(positive),
                           np.flatnonzero(~positive)])
    return int(positive.sum()), perm


def factor_from_eig(eigvals, eigvecs):
    """Build the signed factor ``L |Xi|^{1/2} P`` from eigenpairs."""
    r1, perm = signature_split(eigvals)
    U = eigvecs * np.sqrt(np.abs(eigvals))
    return Factor(U[:, perm], r1)


def _procrustes_block(A, B):
    # argmin over orthogonal Q of ||A - B Q||_F
    W, _, Vt = np.linalg.svd(B.T @ A)
    return W @ Vt


def factor_distance(U1, U2, r1):
    """Distance between two factors modulo block-orthogonal rotations.

    Computes ``min ||U1 - U2 diag(Q1, Q2)||_F`` over orthogonal ``Q1``
    (``r1 x r1``) and ``Q2``, one orthogonal Procrustes problem per block.
    """
    U1 = np.asarray(U1, dtype=np.float64)
    U2 = np.asarray(U2, dtype=np.float64)
    if U1.shape != U2.shape or U1.ndim != 2:
        raise InvalidArgumentError(
            f"factor shapes differ: {U1.shape} vs {U2.shape}")
    r = U1.shape[1]
    if not 0 <= r1 <= r:
        raise InvalidArgumentError(f"r1={r1} outside [0, {r}]")
    total = 0.0
    for block in (slice(0, r1), slice(r1, r)):
        A, B = U1[:, block], U2[:, block]
        if A.shape[1] == 0:
            continue
        Q = _procrustes_block(A, B)
        total += np.sum((A - B @ Q) ** 2)
    return float(np.sqrt(total))


def total_distance(S, S_star, F, F_star, sigma1R):
    """``||S - S*||_F^2 / sigma1R + Pi^2(U, U*)``."""
    if F.r1 != F_star.r1:
        raise InvalidArgumentError(
            f"positive index mismatch: {F.r1} vs {F_star.r1}")
    sigma1R = check_positive(sigma1R, "sigma1R")
    sparse = np.sum((np.asarray(S) - np.asarray(S_star)) ** 2) / sigma1R
    return float(sparse + factor_distance(F.U, F_star.U, F.r1) ** 2)
