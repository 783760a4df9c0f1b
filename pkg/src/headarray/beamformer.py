"""Maximum-directivity beamformer design and robustness analysis.

The diffuse-field coherence matrix is approximated from a steering matrix
``A`` (L microphones x D directions) as ``C = A A^H / D``. All inverses of
``C`` go through the SVD of ``A``.
"""

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .exceptions import DegenerateInputError, InvalidArgumentError, SingularMatrixError
from .validation import check_complex_matrix, check_indices

MAX_CONDITION = 1e12


@dataclass(frozen=True)
class BeamformerWeights:
    """Weights ``w`` such that the beam output is ``w^H p``."""

    weights: np.ndarray
    look_index: int
    look_direction: object = None
    frequency: float = None


@dataclass(frozen=True)
class SensitivityReport:
    """Beamformer sensitivity ``T = ||w||^2`` and related quantities.

    ``direct_form`` evaluates the closed form with explicit linear solves and
    ``svd_form`` the singular-value expansion; both should agree with
    ``sensitivity`` to rounding.
    """

    sensitivity: float
    wng_db: float
    lower_bound: float
    direct_form: float
    svd_form: float


def _check_steering(A):
    A = check_complex_matrix(A, "steering matrix")
    L, D = A.shape
    if D < L:
        raise InvalidArgumentError(
            f"need at least as many directions as microphones (D={D} < L={L}); "
            "the coherence matrix would be singular"
        )
    return A


def coherence_matrix(A):
    """``C = (1/D) A A^H`` for an L x D steering matrix with D >= L."""
    A = _check_steering(A)
    C = A @ A.conj().T / A.shape[1]
    return 0.5 * (C + C.conj().T)


def _coherence_eigen(A, regularization):
    """Eigenvectors and eigenvalues of ``C + eps I`` via the SVD of A."""
    if regularization < 0 or not np.isfinite(regularization):
        raise InvalidArgumentError(f"regularization must be finite and >= 0, got {regularization}")
    U, s, _ = np.linalg.svd(A, full_matrices=False)
    eig = s**2 / A.shape[1] + regularization
    if eig[-1] <= 0 or eig[0] / eig[-1] > MAX_CONDITION:
        cond = np.inf if eig[-1] <= 0 else eig[0] / eig[-1]
        raise SingularMatrixError(
            f"coherence matrix is numerically singular (condition {cond:.3g}); "
            "use distinct microphone positions with D >= L, or add regularization"
        )
    return U, eig


def _look_vector(A, look_index):
    idx = check_indices([look_index], A.shape[1], "look_index")[0]
    return A[:, idx], int(idx)


def md_weights(A, look_index, regularization=0.0):
    """Maximum-directivity weights ``w = C^{-1} b / (b^H C^{-1} b)``.

    Parameters
    ----------
    A : array_like, shape (L, D)
        Steering matrix, D >= L.
    look_index : int
        Column of ``A`` used as the look direction ``b``.
    regularization : float
        Diagonal loading added to ``C``; off by default.

    Raises
    ------
    SingularMatrixError
        If ``C + eps I`` has condition number above 1e12.
    """
    A = _check_steering(A)
    b, idx = _look_vector(A, look_index)
    U, eig = _coherence_eigen(A, float(regularization))
    cinv_b = U @ ((U.conj().T @ b) / eig)
    denom = np.vdot(b, cinv_b).real
    return BeamformerWeights(weights=cinv_b / denom, look_index=idx)


def beampattern(weights, A):
    """Response ``w^H a(Omega_j)`` for every column of ``A``."""
    if isinstance(weights, BeamformerWeights):
        weights = weights.weights
    w = np.asarray(weights, dtype=np.complex128)
    A = check_complex_matrix(A, "steering matrix")
    if w.ndim != 1 or w.shape[0] != A.shape[0]:
        raise InvalidArgumentError(f"weights of shape {w.shape} do not match {A.shape[0]} microphones")
    return w.conj() @ A


def _svd_sensitivities(U, eig, B):
    """Sensitivity for each column of B from the eigen-expansion of C."""
    c2 = np.abs(U.conj().T @ B) ** 2
    return np.sum(c2 / eig[:, None] ** 2, axis=0) / np.sum(c2 / eig[:, None], axis=0) ** 2


def sensitivity_direct(A, b, regularization=0.0):
    """``b^H G^{-2} b / (b^H G^{-1} b)^2`` with ``G = A A^H / D + eps I``, by linear solves."""
    A = _check_steering(A)
    b = np.asarray(b, dtype=np.complex128)
    G = A @ A.conj().T / A.shape[1] + regularization * np.eye(A.shape[0])
    x = np.linalg.solve(G, b)
    y = np.linalg.solve(G, x)
    return float(np.vdot(b, y).real / np.vdot(b, x).real ** 2)


def sensitivity_svd(A, b, regularization=0.0):
    """Sensitivity through the singular values and left singular vectors of A."""
    A = _check_steering(A)
    U, eig = _coherence_eigen(A, float(regularization))
    B = np.asarray(b, dtype=np.complex128).reshape(-1, 1)
    return float(_svd_sensitivities(U, eig, B)[0])


def sensitivity(A, look_index, regularization=0.0):
    """Sensitivity report of the maximum-directivity beamformer."""
    A = _check_steering(A)
    bf = md_weights(A, look_index, regularization)
    b = A[:, bf.look_index]
    t = float(np.vdot(bf.weights, bf.weights).real)
    return SensitivityReport(
        sensitivity=t,
        wng_db=float(-10.0 * np.log10(t)),
        lower_bound=float(1.0 / np.vdot(b, b).real),
        direct_form=sensitivity_direct(A, b, regularization),
        svd_form=sensitivity_svd(A, b, regularization),
    )


def average_sensitivity(
    db,
    selection,
    frequency_index,
    look_direction_indices,
    direction_indices=None,
    regularization=0.0,
):
    """Mean sensitivity over a set of look directions.

    The coherence matrix is built from ``direction_indices`` (defaults to the
    look directions themselves).

    Raises
    ------
    DegenerateInputError
        At 0 Hz, where every steering vector is identical.
    """
    M, K, D = db.values.shape
    k = int(check_indices([frequency_index], K, "frequency_index")[0])
    if db.frequencies.values[k] == 0.0:
        raise DegenerateInputError("beamforming is undefined at 0 Hz (rank-one steering matrix)")
    looks = check_indices(look_direction_indices, D, "look_direction_indices")
    if direction_indices is None:
        direction_indices = looks
    A = _check_steering(db.steering_matrix(selection, k, direction_indices))
    B = db.steering_matrix(selection, k, looks)
    U, eig = _coherence_eigen(A, float(regularization))
    return float(np.mean(_svd_sensitivities(U, eig, B)))


class MaxDirectivityBeamformer(TransformerMixin, BaseEstimator):
    """Maximum-directivity beamformer as a transformer.

    ``fit`` takes an L x D steering matrix; ``transform`` maps measurement
    vectors of shape (n_samples, L) to beam outputs ``w^H p``.

    Parameters
    ----------
    look_index : int
        Column of the steering matrix to steer towards.
    regularization : float
        Diagonal loading of the coherence matrix.
    """

    def __init__(self, look_index=0, regularization=0.0):
        self.look_index = look_index
        self.regularization = regularization

    def fit(self, X, y=None):
        A = _check_steering(X)
        bf = md_weights(A, self.look_index, self.regularization)
        self.weights_ = bf.weights
        self.n_features_in_ = A.shape[0]
        self.sensitivity_ = float(np.vdot(bf.weights, bf.weights).real)
        self.white_noise_gain_db_ = -10.0 * np.log10(self.sensitivity_)
        self.beampattern_ = beampattern(bf.weights, A)
        return self

    def transform(self, X):
        check_is_fitted(self, "weights_")
        P = check_complex_matrix(X, "measurements")
        if P.shape[1] != self.n_features_in_:
            raise InvalidArgumentError(
                f"expected {self.n_features_in_} microphones, got {P.shape[1]}"
            )
        return P @ self.weights_.conj()
