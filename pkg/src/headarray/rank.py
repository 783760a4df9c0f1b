"""Singular-value spectra and the effective rank of GHRTF matrices."""

from dataclasses import dataclass

import numpy as np

from .exceptions import DegenerateInputError, InvalidArgumentError, NumericalError
from .validation import check_complex_matrix, check_indices

RANK_RTOL = 1e-12


@dataclass(frozen=True)
class SvdSpectrum:
    """Full SVD ``H = U diag(s) V^H`` with singular values in descending order."""

    singular_values: np.ndarray
    left_vectors: np.ndarray
    right_vectors: np.ndarray
    rank_q: int

    def reconstruct(self):
        U, s, V = self.left_vectors, self.singular_values, self.right_vectors
        k = s.size
        return (U[:, :k] * s) @ V[:, :k].conj().T


@dataclass(frozen=True)
class EffectiveRankReport:
    effective_rank: float
    entropy: float
    normalized_singular_values: np.ndarray
    rank_q: int


def _numerical_rank(s, rtol=RANK_RTOL):
    if s.size == 0 or s[0] <= 0:
        return 0
    return int(np.count_nonzero(s > rtol * s[0]))


def svd(matrix):
    """Full singular value decomposition of a complex matrix.

    ``rank_q`` counts singular values above ``1e-12 * sigma_1``.
    """
    H = check_complex_matrix(matrix)
    try:
        U, s, Vh = np.linalg.svd(H, full_matrices=True)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"SVD did not converge: {exc}") from None
    return SvdSpectrum(
        singular_values=s,
        left_vectors=U,
        right_vectors=Vh.conj().T,
        rank_q=_numerical_rank(s),
    )


def _weighted(H, row_weights, col_weights):
    if row_weights is not None:
        w = np.asarray(row_weights, dtype=float)
        if w.shape != (H.shape[0],):
            raise InvalidArgumentError(f"row_weights must have shape ({H.shape[0]},)")
        H = w[:, None] * H
    if col_weights is not None:
        w = np.asarray(col_weights, dtype=float)
        if w.shape != (H.shape[1],):
            raise InvalidArgumentError(f"col_weights must have shape ({H.shape[1]},)")
        H = H * w[None, :]
    return H


def effective_rank_from_singular_values(singular_values):
    """Effective rank of a spectrum: exp of the entropy of s_i / sum(s).

    Only the values above ``1e-12 * max`` enter the distribution; the result
    is clipped into [1, q] to absorb rounding in the entropy.
    """
    s = np.sort(np.asarray(singular_values, dtype=float))[::-1]
    if s.size == 0 or not np.all(np.isfinite(s)) or np.any(s < 0):
        raise InvalidArgumentError("singular values must be finite and non-negative")
    q = _numerical_rank(s)
    if q == 0:
        raise DegenerateInputError("all singular values are zero")
    p = s[:q] / np.sum(s[:q])
    entropy = float(-np.sum(p * np.log(p)))
    entropy = min(max(entropy, 0.0), float(np.log(q)))
    rank = min(max(float(np.exp(entropy)), 1.0), float(q))
    return EffectiveRankReport(
        effective_rank=rank,
        entropy=entropy,
        normalized_singular_values=p,
        rank_q=q,
    )


def effective_rank(matrix, row_weights=None, col_weights=None):
    """Effective rank report of a complex matrix.

    Parameters
    ----------
    matrix : array_like, shape (n, d)
    row_weights, col_weights : array_like, optional
        Real diagonal weights applied as ``diag(row) @ H @ diag(col)`` before
        the decomposition (frequency and direction emphasis).

    Raises
    ------
    DegenerateInputError
        If the matrix is identically zero.
    """
    H = _weighted(check_complex_matrix(matrix), row_weights, col_weights)
    try:
        s = np.linalg.svd(H, compute_uv=False)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"SVD did not converge: {exc}") from None
    return effective_rank_from_singular_values(s)


def effective_rank_map(db, frequency_indices, direction_indices):
    """Effective rank of each single candidate position's K' x D' GHRTF matrix.

    Returns a float array of length M.
    """
    M, K, D = db.values.shape
    fidx = check_indices(frequency_indices, K, "frequency_indices")
    didx = check_indices(direction_indices, D, "direction_indices")
    if didx.size < 2:
        raise InvalidArgumentError("need at least two directions")
    block = db.values[:, fidx][:, :, didx]  # (M, K', D')
    s = np.linalg.svd(block, compute_uv=False)
    return np.array([effective_rank_from_singular_values(row).effective_rank for row in s])
