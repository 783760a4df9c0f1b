"""MUSIC direction-of-arrival estimation on a database direction grid.

Also holds the asymptotic MUSIC variance expressions used to relate the
singular values of a steering matrix to estimation accuracy, and the
Monte-Carlo protocol that measures angular-error STD per configuration.
"""

import math
import warnings
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .exceptions import DegenerateInputError, InvalidArgumentError, NumericalError
from .ghrtf import angular_distance, unit_vectors
from .validation import check_complex_matrix, check_indices

# sqrt((pi^2 - 4) / 2): RMS angle between a fixed and a uniformly random direction.
CHANCE_STD_RAD = math.sqrt((math.pi**2 - 4.0) / 2.0)
CHANCE_STD_DEG = math.degrees(CHANCE_STD_RAD)


@dataclass(frozen=True)
class SnapshotSet:
    """N measurement vectors, stored as rows of an (N, L) array."""

    snapshots: np.ndarray
    frequency: float
    true_direction_index: int
    snr_linear: float


@dataclass(frozen=True)
class MusicTrialStats:
    frequency_hz: float
    n_mics: int
    snr_db: float
    array_type: str
    std_degrees: float
    trial_count: int
    seed: int


@dataclass(frozen=True)
class MusicVarianceReport:
    """Asymptotic MUSIC error variance for a set of sources.

    ``per_source`` holds the variance of each source direction estimate,
    ``total`` the closed-form sum ``cD/SNR + c/SNR^2 sum(1/s_i^2)``.
    """

    per_source: np.ndarray
    total: float
    singular_values: np.ndarray


def snr_db_to_linear(snr_db):
    return math.inf if snr_db == math.inf else 10.0 ** (snr_db / 10.0)


def complex_gaussian(rng, shape, variance):
    """Circularly-symmetric complex Gaussian samples with E|n|^2 = variance."""
    scale = math.sqrt(variance / 2.0)
    return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def simulate_snapshots(
    db, selection, frequency_index, direction_index, snr_db, n_snapshots=30, rng_seed=None
):
    """Simulate ``p = h(Omega_j) + n`` for a unit-amplitude source.

    The noise is white with per-entry power ``10^(-snr_db/10)``; pass
    ``snr_db=inf`` to disable it.
    """
    M, K, D = db.values.shape
    k = int(check_indices([frequency_index], K, "frequency_index")[0])
    j = int(check_indices([direction_index], D, "direction_index")[0])
    if db.frequencies.values[k] == 0.0:
        raise DegenerateInputError("DOA estimation is undefined at 0 Hz")
    if isinstance(snr_db, bool) or not isinstance(snr_db, (int, float)) or math.isnan(snr_db):
        raise InvalidArgumentError(f"snr_db must be a real number, got {snr_db!r}")
    snr = snr_db_to_linear(float(snr_db))
    if snr <= 0:
        raise InvalidArgumentError("SNR must be positive in linear scale")
    if n_snapshots < 1:
        raise InvalidArgumentError("need at least one snapshot")
    h = db.steering_matrix(selection, k, [j])[:, 0]
    if n_snapshots < h.size + 1:
        warnings.warn(
            f"{n_snapshots} snapshots for {h.size} microphones; "
            "the sample covariance will be rank deficient",
            stacklevel=2,
        )
    X = np.tile(h, (n_snapshots, 1))
    if snr != math.inf:
        rng = np.random.default_rng(rng_seed)
        X = X + complex_gaussian(rng, X.shape, 1.0 / snr)
    return SnapshotSet(
        snapshots=X,
        frequency=db.frequencies.values[k],
        true_direction_index=j,
        snr_linear=snr,
    )


def sample_covariance(snapshots):
    """``(1/N) sum_n p_n p_n^H`` without mean removal.

    Accepts an (N, L) array, a :class:`SnapshotSet`, or a stack (..., N, L).
    """
    if isinstance(snapshots, SnapshotSet):
        snapshots = snapshots.snapshots
    X = np.asarray(snapshots, dtype=np.complex128)
    if X.ndim < 2 or X.shape[-2] < 1:
        raise InvalidArgumentError(f"expected (..., N, L) snapshots, got shape {X.shape}")
    R = np.einsum("...nl,...nm->...lm", X, X.conj()) / X.shape[-2]
    return 0.5 * (R + np.swapaxes(R, -1, -2).conj())


def _noise_projection(covs, steering, n_sources):
    """||E_n^H a_j||^2 for each covariance in a (B, L, L) stack and grid column j."""
    _, vecs = np.linalg.eigh(covs)  # ascending eigenvalues
    En = vecs[..., : covs.shape[-1] - n_sources]
    proj = np.swapaxes(En, -1, -2).conj() @ steering
    return np.sum(np.abs(proj) ** 2, axis=-2)


def music_pseudospectrum(cov, steering, n_sources=1):
    """MUSIC pseudospectrum ``1 / ||E_n^H a(Omega_j)||^2`` over grid columns."""
    R = check_complex_matrix(cov, "covariance")
    A = check_complex_matrix(steering, "steering matrix")
    L = R.shape[0]
    if R.shape != (L, L) or A.shape[0] != L:
        raise InvalidArgumentError(f"covariance {R.shape} does not match steering {A.shape}")
    if not 1 <= n_sources < L:
        raise InvalidArgumentError(f"need 1 <= n_sources < L={L}, got {n_sources}")
    R = 0.5 * (R + R.conj().T)
    denom = _noise_projection(R[None], A, n_sources)[0]
    with np.errstate(divide="ignore"):
        return 1.0 / denom


def music_estimate(cov, steering, n_sources=1):
    """Grid index maximizing the MUSIC pseudospectrum, and the pseudospectrum.

    Ties go to the lowest index.
    """
    spectrum = music_pseudospectrum(cov, steering, n_sources)
    return int(np.argmax(spectrum)), spectrum


def covariance_eigenvalues(singular_values, n_mics, signal_power, noise_power):
    """Eigenvalues of ``alpha H H^H + sigma I`` from the singular values of H.

    The first D eigenvalues are ``alpha s_i^2 + sigma``, the remaining
    ``L - D`` equal ``sigma``.
    """
    s = np.asarray(singular_values, dtype=float)
    if s.size > n_mics:
        raise InvalidArgumentError("more singular values than microphones")
    lam = np.full(n_mics, float(noise_power))
    lam[: s.size] += signal_power * s**2
    return lam


def asymptotic_variance(eigenvalues, eigenvectors, steering_vector, noise_power, n_sources, c=1.0):
    """Asymptotic MUSIC variance from the covariance eigen-structure.

    ``c sigma sum_{i<=D} lambda_i / (sigma - lambda_i)^2 |a^H q_i|^2`` with
    eigenvalues in descending order.
    """
    lam = np.asarray(eigenvalues, dtype=float)[:n_sources]
    Q = np.asarray(eigenvectors)[:, :n_sources]
    proj = np.abs(np.asarray(steering_vector).conj() @ Q) ** 2
    return float(c * noise_power * np.sum(lam / (noise_power - lam) ** 2 * proj))


def theoretical_music_variance(H, source_indices, snr_linear, c_constant=1.0):
    """Asymptotic MUSIC variance in terms of the singular values of the source steering matrix.

    Per source ``j``: ``(c/SNR) sum_i (s_i^2 + 1/SNR) / s_i^4 |h_j^H u_i|^2``.
    The total is ``cD/SNR + (c/SNR^2) sum_i 1/s_i^2``.

    ``c_constant`` is a trend-only scale; absolute values are not meaningful.
    """
    H = check_complex_matrix(H, "steering matrix")
    src = check_indices(source_indices, H.shape[1], "source_indices", unique=True)
    D = src.size
    if D >= H.shape[0]:
        raise InvalidArgumentError(f"need fewer sources ({D}) than microphones ({H.shape[0]})")
    if not snr_linear > 0:
        raise InvalidArgumentError("snr_linear must be > 0")
    Hs = H[:, src]
    U, s, _ = np.linalg.svd(Hs, full_matrices=False)
    if s[-1] <= 1e-12 * s[0]:
        raise NumericalError("source steering matrix is rank deficient")
    inv_snr = 0.0 if snr_linear == math.inf else 1.0 / snr_linear
    weights = (s**2 + inv_snr) / s**4
    proj = np.abs(Hs.conj().T @ U) ** 2  # (source j, component i)
    per_source = c_constant * inv_snr * proj @ weights
    total = c_constant * D * inv_snr + c_constant * inv_snr**2 * np.sum(1.0 / s**2)
    return MusicVarianceReport(per_source=per_source, total=float(total), singular_values=s)


class MusicDOA(BaseEstimator):
    """MUSIC DOA estimator restricted to a fixed direction grid.

    ``fit`` stores the L x D grid steering matrix (and optionally the grid
    directions); ``predict`` maps snapshot sets to grid indices.

    Parameters
    ----------
    n_sources : int
        Assumed number of sources (signal-subspace dimension).
    """

    def __init__(self, n_sources=1):
        self.n_sources = n_sources

    def fit(self, X, y=None):
        A = check_complex_matrix(X, "steering matrix")
        if not 1 <= self.n_sources < A.shape[0]:
            raise InvalidArgumentError(
                f"need 1 <= n_sources < L={A.shape[0]}, got {self.n_sources}"
            )
        self.steering_ = A
        self.n_features_in_ = A.shape[0]
        self.directions_ = None if y is None else list(y)
        return self

    def _covariances(self, X):
        X = np.asarray(X, dtype=np.complex128)
        single = X.ndim == 2
        if single:
            X = X[None]
        if X.ndim != 3 or X.shape[-1] != self.n_features_in_:
            raise InvalidArgumentError(
                f"expected snapshots of shape (..., N, {self.n_features_in_}), got {X.shape}"
            )
        return sample_covariance(X), single

    def pseudospectrum(self, X):
        check_is_fitted(self, "steering_")
        covs, single = self._covariances(X)
        with np.errstate(divide="ignore"):
            spec = 1.0 / _noise_projection(covs, self.steering_, self.n_sources)
        return spec[0] if single else spec

    def predict(self, X):
        """Grid index estimates for (N, L) or (n_sets, N, L) snapshots."""
        check_is_fitted(self, "steering_")
        covs, single = self._covariances(X)
        idx = np.argmin(_noise_projection(covs, self.steering_, self.n_sources), axis=-1)
        return int(idx[0]) if single else idx


@dataclass(frozen=True)
class MusicSweep:
    """Grid of Monte-Carlo cells; defaults are the full 6x6x6x4 sweep."""

    frequencies: tuple = (100.0, 200.0, 400.0, 800.0, 1600.0, 3200.0)
    sizes: tuple = (2, 3, 4, 5, 7, 10)
    snrs_db: tuple = (-20.0, -10.0, 0.0, 10.0, 20.0, 40.0)
    array_types: tuple = ("MER", "MER-1", "MER-5", "random")

    def cells(self):
        for f in self.frequencies:
            for L in self.sizes:
                for snr in self.snrs_db:
                    for t in self.array_types:
                        yield float(f), int(L), float(snr), str(t)


@dataclass(frozen=True)
class MusicProtocol:
    trials_per_direction: int = 30
    n_snapshots: int = 30
    realizations: int = 100
    direction_indices: tuple = field(default=None)
    n_sources: int = 1


def cell_key(frequency_hz, n_mics, snr_db, array_type):
    """Stable 32-bit identifier of a sweep cell, used to derive its random streams."""
    return zlib.crc32(f"{frequency_hz!r}|{n_mics}|{snr_db!r}|{array_type}".encode())


def _cell_rng(rng_seed, key, realization):
    return np.random.default_rng(np.random.SeedSequence(rng_seed, spawn_key=(key, realization)))


def _realization_sq_errors(A, angles, snr, protocol, rng):
    """Squared angular errors for every (direction, trial) with one array."""
    L, D = A.shape
    T, N = protocol.trials_per_direction, protocol.n_snapshots
    X = np.broadcast_to(A.T[:, None, None, :], (D, T, N, L))
    if snr != math.inf:
        X = X + complex_gaussian(rng, (D, T, N, L), 1.0 / snr)
    covs = sample_covariance(X).reshape(D * T, L, L)
    est = np.argmin(_noise_projection(covs, A, protocol.n_sources), axis=-1).reshape(D, T)
    err = angles[np.arange(D)[:, None], est]
    return err**2


def run_music_cell(db, selections, frequency_hz, snr_db, protocol, rng_seed, array_type="", dirs=None):
    """Angular-error STD of one sweep cell.

    The mean squared error is taken over trials, then directions, then array
    realizations; the square root is reported in degrees.
    """
    k = db.frequency_index(frequency_hz)
    if db.frequencies.values[k] == 0.0:
        raise DegenerateInputError("DOA estimation is undefined at 0 Hz")
    if dirs is None:
        dirs = _default_music_directions(db, protocol)
    if not selections:
        raise InvalidArgumentError("no array realizations supplied")
    selections = list(selections)[: protocol.realizations]
    L = len(selections[0])
    if protocol.n_sources >= L:
        raise InvalidArgumentError(f"need more microphones than sources, got L={L}")
    if protocol.n_snapshots < L + 1:
        warnings.warn(f"{protocol.n_snapshots} snapshots for {L} microphones", stacklevel=2)
    u = unit_vectors([db.directions[j] for j in dirs])
    angles = angular_distance(u[:, None, :], u[None, :, :])
    snr = snr_db_to_linear(snr_db)
    key = cell_key(float(frequency_hz), L, float(snr_db), array_type)
    total = 0.0
    for r, sel in enumerate(selections):
        if len(sel) != L:
            raise InvalidArgumentError("all realizations in a cell must have the same size")
        A = db.steering_matrix(sel, k, dirs)
        total += float(np.mean(_realization_sq_errors(A, angles, snr, protocol, _cell_rng(rng_seed, key, r))))
    mse = total / len(selections)
    return MusicTrialStats(
        frequency_hz=float(frequency_hz),
        n_mics=L,
        snr_db=float(snr_db),
        array_type=array_type,
        std_degrees=math.degrees(math.sqrt(mse)),
        trial_count=protocol.trials_per_direction * len(dirs) * len(selections),
        seed=int(rng_seed),
    )


def _default_music_directions(db, protocol):
    if protocol.direction_indices is not None:
        return check_indices(list(protocol.direction_indices), db.values.shape[2], "direction_indices")
    group = "uniform" if "uniform" in db.direction_groups else None
    return np.asarray(db.direction_indices(group))


def run_music_monte_carlo(db, arrays, sweep=None, protocol=None, rng_seed=0, threads=1):
    """Run every cell of a sweep.

    Parameters
    ----------
    db : GhrtfDatabase
    arrays : dict
        ``(array_type, L) -> list of selections`` (one per realization).
    sweep : MusicSweep
    protocol : MusicProtocol
    rng_seed : int
        Base seed; each (cell, realization) draws from its own derived stream,
        so results do not depend on execution order or ``threads``.

    Returns
    -------
    list of MusicTrialStats, in sweep order.
    """
    sweep = sweep or MusicSweep()
    protocol = protocol or MusicProtocol()
    dirs = _default_music_directions(db, protocol)
    cells = list(sweep.cells())
    for f, L, snr, t in cells:
        if (t, L) not in arrays:
            raise InvalidArgumentError(f"no selections supplied for array type {t!r}, L={L}")

    def run(cell):
        f, L, snr, t = cell
        return run_music_cell(db, arrays[(t, L)], f, snr, protocol, rng_seed, t, dirs)

    if threads <= 1:
        return [run(c) for c in cells]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(run, cells))
