"""Generalized HRTF databases.

A database holds complex transfer coefficients ``h[m, k, j]`` from a far-field
source in direction ``j`` to candidate microphone position ``m`` on a head
surface at frequency ``k``. Coefficients are normalized to the free-field
pressure at the head centre with the head removed.

Databases can be generated from an analytical rigid-sphere model or loaded
from disk, so that externally computed (BEM, measured) data can be used with
the same downstream tools.
"""

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special
from scipy.spatial import cKDTree

from .exceptions import FormatError, InvalidArgumentError, NumericalError
from .validation import check_indices, check_positive

DEFAULT_HEAD_RADIUS = 0.0875
DEFAULT_SPEED_OF_SOUND = 343.0
DEFAULT_CANDIDATES = 242
FORMAT_VERSION = 1

# Modal truncation order is ceil(2 ka) + _ORDER_MARGIN.
_ORDER_MARGIN = 12
# Largest admissible magnitude of the last retained modal term, relative to the
# largest term.
_TAIL_TOLERANCE = 1e-10
_GOLDEN_ANGLE = math.pi * (3.0 - math.sqrt(5.0))


@dataclass(frozen=True)
class Direction:
    """A direction on the unit sphere.

    Parameters
    ----------
    azimuth : float
        Radians in [0, 2*pi).
    elevation : float
        Polar angle in radians, measured from the +z pole, in [0, pi].
    """

    azimuth: float
    elevation: float

    def __post_init__(self):
        az, el = float(self.azimuth), float(self.elevation)
        if not (math.isfinite(az) and math.isfinite(el)):
            raise InvalidArgumentError(f"non-finite direction ({az}, {el})")
        if not 0.0 <= el <= math.pi:
            raise InvalidArgumentError(f"elevation {el} outside [0, pi]")
        az = math.fmod(az, 2 * math.pi)
        if az < 0:
            az += 2 * math.pi
        if az >= 2 * math.pi:
            az = 0.0
        object.__setattr__(self, "azimuth", az)
        object.__setattr__(self, "elevation", el)

    @classmethod
    def from_degrees(cls, azimuth, elevation):
        return cls(math.radians(azimuth), math.radians(elevation))

    @classmethod
    def from_vector(cls, xyz):
        x, y, z = (float(c) for c in xyz)
        r = math.sqrt(x * x + y * y + z * z)
        if r == 0 or not math.isfinite(r):
            raise InvalidArgumentError("cannot take the direction of a zero vector")
        return cls(math.atan2(y, x), math.acos(max(-1.0, min(1.0, z / r))))

    @property
    def vector(self):
        s = math.sin(self.elevation)
        return np.array(
            [s * math.cos(self.azimuth), s * math.sin(self.azimuth), math.cos(self.elevation)]
        )

    def angle_to(self, other):
        """Great-circle angle in radians, in [0, pi]."""
        return float(angular_distance(self.vector, other.vector))


def unit_vectors(directions):
    """Stack the unit vectors of a sequence of directions into an (n, 3) array."""
    az = np.array([d.azimuth for d in directions], dtype=float)
    el = np.array([d.elevation for d in directions], dtype=float)
    return np.column_stack([np.sin(el) * np.cos(az), np.sin(el) * np.sin(az), np.cos(el)])


def angular_distance(u, v):
    """Great-circle angle between unit vectors, broadcasting over leading axes.

    Uses atan2(|u x v|, u.v), which stays accurate near 0 and pi.
    """
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    cross = np.linalg.norm(np.cross(u, v), axis=-1)
    dot = np.sum(u * v, axis=-1)
    return np.arctan2(cross, dot)


@dataclass(frozen=True)
class FrequencyGrid:
    """Strictly increasing, non-negative frequencies in Hz."""

    values: tuple

    def __post_init__(self):
        vals = tuple(float(f) for f in self.values)
        if not vals:
            raise InvalidArgumentError("frequency grid is empty")
        arr = np.array(vals)
        if not np.all(np.isfinite(arr)) or np.any(arr < 0):
            raise InvalidArgumentError("frequencies must be finite and >= 0")
        if np.any(np.diff(arr) <= 0):
            raise InvalidArgumentError("frequencies must be strictly increasing")
        object.__setattr__(self, "values", vals)

    def __len__(self):
        return len(self.values)

    def __array__(self, dtype=None, copy=None):
        return np.array(self.values, dtype=dtype)

    @classmethod
    def default(cls):
        """{0, 100, ..., 5000} Hz, 51 values."""
        return cls.parse("0:100:5000")

    @classmethod
    def parse(cls, text):
        """Parse ``start:step:stop`` (inclusive stop) or a comma-separated list."""
        text = text.strip()
        if ":" in text:
            parts = text.split(":")
            if len(parts) != 3:
                raise InvalidArgumentError(f"expected start:step:stop, got {text!r}")
            try:
                start, step, stop = (float(p) for p in parts)
            except ValueError:
                raise InvalidArgumentError(f"bad frequency range {text!r}") from None
            if step <= 0 or stop < start:
                raise InvalidArgumentError(f"bad frequency range {text!r}")
            count = int(math.floor((stop - start) / step + 1e-9)) + 1
            return cls(tuple(start + i * step for i in range(count)))
        try:
            return cls(tuple(float(p) for p in text.split(",") if p.strip()))
        except ValueError:
            raise InvalidArgumentError(f"bad frequency list {text!r}") from None


@dataclass(frozen=True)
class CandidatePositionSet:
    """Candidate microphone positions on the head surface.

    Each position is a direction from the head centre plus a radius in metres.
    """

    directions: tuple
    radii: tuple
    head_radius: float

    def __post_init__(self):
        dirs = tuple(self.directions)
        radii = tuple(float(r) for r in self.radii)
        check_positive(self.head_radius, "head_radius")
        if len(dirs) < 2:
            raise InvalidArgumentError("need at least two candidate positions")
        if len(radii) != len(dirs):
            raise InvalidArgumentError("radii and directions differ in length")
        if any(not (math.isfinite(r) and r > 0) for r in radii):
            raise InvalidArgumentError("candidate radii must be finite and > 0")
        # chord length ~ angle at this scale
        pairs = cKDTree(unit_vectors(dirs)).query_pairs(r=1e-9)
        if pairs:
            i, j = min(pairs)
            raise InvalidArgumentError(f"candidate positions {i} and {j} coincide")
        object.__setattr__(self, "directions", dirs)
        object.__setattr__(self, "radii", radii)
        object.__setattr__(self, "head_radius", float(self.head_radius))

    def __len__(self):
        return len(self.directions)

    @property
    def xyz(self):
        """Cartesian coordinates in metres, shape (M, 3)."""
        return unit_vectors(self.directions) * np.array(self.radii)[:, None]

    @classmethod
    def on_sphere(cls, n=DEFAULT_CANDIDATES, head_radius=DEFAULT_HEAD_RADIUS):
        dirs = fibonacci_directions(n)
        return cls(tuple(dirs), (float(head_radius),) * len(dirs), head_radius)


def fibonacci_directions(n):
    """Deterministic, nearly uniform directions from a Fibonacci spherical lattice."""
    if not isinstance(n, (int, np.integer)) or isinstance(n, bool) or n < 1:
        raise InvalidArgumentError(f"lattice size must be a positive integer, got {n!r}")
    i = np.arange(n)
    z = 1.0 - (2.0 * i + 1.0) / n
    polar = np.arccos(z)
    az = np.mod(i * _GOLDEN_ANGLE, 2 * math.pi)
    return [Direction(float(a), float(p)) for a, p in zip(az, polar)]


def direction_grid(kind, n=None):
    """Return one of the three source-direction grids.

    Parameters
    ----------
    kind : {'horizontal36', 'median36', 'sphere_uniform'}
        ``horizontal36``: 36 azimuths in 10 degree steps on the horizontal
        plane. ``median36``: 36 directions every 10 degrees around the x-z
        great circle (azimuth 0 or pi). ``sphere_uniform``: ``n`` points of a
        Fibonacci lattice.
    n : int, optional
        Number of points for ``sphere_uniform`` (>= 4).
    """
    if kind == "horizontal36":
        return [Direction(math.radians(10.0 * j), math.pi / 2) for j in range(36)]
    if kind == "median36":
        out = []
        for j in range(36):
            psi = math.radians(10.0 * j)
            if psi <= math.pi:
                out.append(Direction(0.0, psi))
            else:
                out.append(Direction(math.pi, 2 * math.pi - psi))
        return out
    if kind == "sphere_uniform":
        if n is None or not isinstance(n, (int, np.integer)) or n < 4:
            raise InvalidArgumentError(f"sphere_uniform needs n >= 4, got {n!r}")
        return fibonacci_directions(int(n))
    raise InvalidArgumentError(f"unknown direction grid {kind!r}")


def default_directions():
    """The 312-direction union (240 uniform, 36 horizontal, 36 median).

    Returns the direction list and a mapping from group name to index list.
    """
    uniform = direction_grid("sphere_uniform", 240)
    horizontal = direction_grid("horizontal36")
    median = direction_grid("median36")
    groups = {
        "uniform": list(range(0, 240)),
        "horizontal": list(range(240, 276)),
        "median": list(range(276, 312)),
    }
    return uniform + horizontal + median, groups


def _modal_coefficients(ka, order):
    """Per-order weights w_n with p = sum_n w_n P_n(cos theta).

    w_n = (2n+1) (-i)^n i / ((ka)^2 h_n'(ka)), h_n = h_n^(1).
    """
    n = np.arange(order + 1)
    with np.errstate(over="ignore", invalid="ignore"):
        dh = special.spherical_jn(n, ka, derivative=True) + 1j * special.spherical_yn(
            n, ka, derivative=True
        )
        w = (2 * n + 1) * (-1j) ** n * 1j / (ka * ka * dh)
    # y_n' overflows to -inf for high orders at tiny ka; those terms vanish.
    w[~np.isfinite(dh)] = 0.0
    if not np.all(np.isfinite(w)):
        raise NumericalError(f"non-finite modal coefficient at ka={ka}")
    peak = np.max(np.abs(w))
    if order > 0 and abs(w[-1]) > _TAIL_TOLERANCE * peak:
        raise NumericalError(
            f"modal series not converged at ka={ka:.4g}: last term "
            f"{abs(w[-1]):.3e} vs peak {peak:.3e} at order {order}"
        )
    return w


def _legendre_stack(x, order):
    """P_0..P_order evaluated at x, shape (order+1, *x.shape)."""
    x = np.asarray(x, dtype=float)
    out = np.empty((order + 1,) + x.shape)
    out[0] = 1.0
    if order >= 1:
        out[1] = x
    for n in range(1, order):
        out[n + 1] = ((2 * n + 1) * x * out[n] - n * out[n - 1]) / (n + 1)
    return out


def truncation_order(ka):
    return int(math.ceil(2.0 * ka)) + _ORDER_MARGIN


def sphere_ghrtf(
    head_radius,
    frequency,
    mic,
    source,
    speed_of_sound=DEFAULT_SPEED_OF_SOUND,
    order=None,
):
    """Surface pressure on a rigid sphere due to a unit plane wave.

    The wave arrives from ``source``; the pressure is evaluated at the surface
    point in direction ``mic`` and normalized to the incident pressure at the
    sphere centre. Time convention is exp(-i omega t).

    Parameters
    ----------
    head_radius : float
        Sphere radius in metres.
    frequency : float
        Hz, >= 0. Exactly 1 is returned at 0 Hz.
    mic, source : Direction
    speed_of_sound : float
        m/s.
    order : int, optional
        Truncation order of the modal sum; defaults to ``ceil(2 ka) + 12``.

    Returns
    -------
    complex
    """
    a = check_positive(head_radius, "head_radius")
    f = check_positive(frequency, "frequency", allow_zero=True)
    c = check_positive(speed_of_sound, "speed_of_sound")
    if f == 0.0:
        return 1.0 + 0.0j
    ka = 2 * math.pi * f / c * a
    order = truncation_order(ka) if order is None else int(order)
    cos_theta = float(np.clip(np.dot(mic.vector, source.vector), -1.0, 1.0))
    w = _modal_coefficients(ka, order)
    return complex(np.dot(w, _legendre_stack(cos_theta, order)))


@dataclass(frozen=True, eq=False)
class GhrtfDatabase:
    """Complex GHRTF coefficients indexed (candidate, frequency, direction).

    ``values`` has shape (M, K, D) and is read-only.
    ``direction_groups`` maps optional group names (e.g. ``'uniform'``) to
    direction index lists.
    """

    candidates: CandidatePositionSet
    frequencies: FrequencyGrid
    directions: tuple
    values: np.ndarray
    provenance: str = ""
    direction_groups: dict = field(default_factory=dict)

    def __post_init__(self):
        values = np.array(self.values, dtype=np.complex128, copy=True)
        shape = (len(self.candidates), len(self.frequencies), len(self.directions))
        if values.shape != shape:
            raise InvalidArgumentError(f"values shape {values.shape} != (M, K, D) {shape}")
        if not np.all(np.isfinite(values)):
            raise InvalidArgumentError("database values must be finite")
        values.setflags(write=False)
        groups = {}
        for name, idx in dict(self.direction_groups).items():
            groups[str(name)] = check_indices(idx, shape[2], f"group {name!r}").tolist()
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "directions", tuple(self.directions))
        object.__setattr__(self, "direction_groups", groups)

    @property
    def shape(self):
        return self.values.shape

    @property
    def frequency_array(self):
        return np.array(self.frequencies.values)

    def direction_indices(self, group=None):
        """Indices of a named direction group, or all directions if ``group`` is None."""
        if group is None:
            return list(range(len(self.directions)))
        try:
            return list(self.direction_groups[group])
        except KeyError:
            raise InvalidArgumentError(
                f"database has no direction group {group!r}; "
                f"available: {sorted(self.direction_groups)}"
            ) from None

    def frequency_index(self, frequency):
        """Index of an exact grid frequency in Hz."""
        freqs = self.frequency_array
        hits = np.flatnonzero(np.isclose(freqs, float(frequency), rtol=0, atol=1e-9))
        if hits.size == 0:
            raise InvalidArgumentError(f"{frequency} Hz is not on the database grid")
        return int(hits[0])

    def steering_matrix(self, selection, frequency_index, direction_indices=None):
        """Narrow-band L x D' steering matrix of a selection."""
        if direction_indices is None:
            direction_indices = range(self.values.shape[2])
        return stack_ghrtf(self, selection, [frequency_index], direction_indices)


def build_sphere_database(
    head_radius=DEFAULT_HEAD_RADIUS,
    candidates=None,
    frequencies=None,
    directions=None,
    speed_of_sound=DEFAULT_SPEED_OF_SOUND,
    direction_groups=None,
):
    """Evaluate the rigid-sphere model for every (candidate, frequency, direction).

    Defaults give the 242-candidate, 51-frequency, 312-direction database.
    """
    a = check_positive(head_radius, "head_radius")
    c = check_positive(speed_of_sound, "speed_of_sound")
    if candidates is None:
        candidates = CandidatePositionSet.on_sphere(DEFAULT_CANDIDATES, a)
    if frequencies is None:
        frequencies = FrequencyGrid.default()
    elif not isinstance(frequencies, FrequencyGrid):
        frequencies = FrequencyGrid(tuple(frequencies))
    if directions is None:
        directions, default_groups = default_directions()
        if direction_groups is None:
            direction_groups = default_groups
    directions = tuple(directions)
    if not directions:
        raise InvalidArgumentError("need at least one source direction")

    cos_theta = np.clip(unit_vectors(candidates.directions) @ unit_vectors(directions).T, -1, 1)
    freqs = np.array(frequencies.values)
    ka_all = 2 * np.pi * freqs / c * a
    max_order = truncation_order(float(ka_all.max()))
    legendre = _legendre_stack(cos_theta, max_order)

    values = np.empty((len(candidates), len(freqs), len(directions)), dtype=np.complex128)
    for k, ka in enumerate(ka_all):
        if ka == 0.0:
            values[:, k, :] = 1.0
            continue
        order = truncation_order(ka)
        try:
            w = _modal_coefficients(ka, order)
        except NumericalError as exc:
            raise NumericalError(f"frequency index {k} ({freqs[k]} Hz): {exc}") from None
        values[:, k, :] = np.tensordot(w, legendre[: order + 1], axes=1)
    if not np.all(np.isfinite(values)):
        m, k, j = np.argwhere(~np.isfinite(values))[0]
        raise NumericalError(f"non-finite coefficient at (m={m}, k={k}, j={j})")

    provenance = (
        f"rigid-sphere modal series; head_radius_m={a!r}; speed_of_sound_mps={c!r}; "
        f"truncation=ceil(2ka)+{_ORDER_MARGIN}; time convention exp(-i w t); "
        f"candidates={len(candidates)}; direction grids: Fibonacci lattice"
    )
    return GhrtfDatabase(
        candidates=candidates,
        frequencies=frequencies,
        directions=directions,
        values=values,
        provenance=provenance,
        direction_groups=direction_groups or {},
    )


def stack_ghrtf(db, selection, frequency_indices, direction_indices):
    """Stack per-microphone GHRTFs into one (L*K') x D' matrix.

    Row ``k * L + l`` (0-based) holds microphone ``selection[l]`` at frequency
    ``frequency_indices[k]``, i.e. microphones vary fastest. With a single
    frequency this is the narrow-band steering matrix.
    """
    M, K, D = db.values.shape
    sel = check_indices(selection, M, "selection", unique=True)
    fidx = check_indices(frequency_indices, K, "frequency_indices")
    didx = check_indices(direction_indices, D, "direction_indices")
    block = db.values[np.ix_(sel, fidx, didx)]  # (L, K', D')
    return block.transpose(1, 0, 2).reshape(len(fidx) * len(sel), len(didx))


def _header_dict(db):
    return {
        "format_version": FORMAT_VERSION,
        "M": db.values.shape[0],
        "K": db.values.shape[1],
        "D": db.values.shape[2],
        "head_radius_m": db.candidates.head_radius,
        "frequencies_hz": list(db.frequencies.values),
        "candidate_positions": [
            [d.azimuth, d.elevation, r]
            for d, r in zip(db.candidates.directions, db.candidates.radii)
        ],
        "directions": [[d.azimuth, d.elevation] for d in db.directions],
        "provenance": db.provenance,
        "direction_groups": db.direction_groups,
    }


def save_database(db, path):
    """Write a database: one line of JSON header, then the raw complex payload.

    The payload is M*K*D little-endian float64 (real, imag) pairs in
    candidate-major, then frequency, then direction order.
    """
    header = json.dumps(_header_dict(db), separators=(",", ":"), allow_nan=False)
    payload = np.ascontiguousarray(db.values, dtype="<c16").tobytes()
    with open(path, "wb") as fh:
        fh.write(header.encode("utf-8"))
        fh.write(b"\n")
        fh.write(payload)


def _require(header, key, kind):
    if key not in header:
        raise FormatError(f"header missing field {key!r}", 0)
    value = header[key]
    if kind is int and (not isinstance(value, int) or isinstance(value, bool)):
        raise FormatError(f"header field {key!r} must be an integer", 0)
    if kind is list and not isinstance(value, list):
        raise FormatError(f"header field {key!r} must be a list", 0)
    return value


def load_database(path):
    """Read a database written by :func:`save_database`.

    Raises
    ------
    FormatError
        On a malformed header, a payload whose length disagrees with the
        declared (M, K, D), or non-finite values. The message names the first
        offending byte offset.
    """
    with open(path, "rb") as fh:
        raw = fh.read()
    newline = raw.find(b"\n")
    if newline < 0:
        raise FormatError("no header terminator found", len(raw))
    try:
        header = json.loads(raw[:newline].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"malformed JSON header: {exc}", 0) from None
    if not isinstance(header, dict):
        raise FormatError("header is not a JSON object", 0)

    version = _require(header, "format_version", int)
    if version != FORMAT_VERSION:
        raise FormatError(f"unsupported format_version {version}", 0)
    M, K, D = (_require(header, key, int) for key in ("M", "K", "D"))
    if min(M, K, D) < 1:
        raise FormatError(f"invalid dimensions M={M}, K={K}, D={D}", 0)
    freqs = _require(header, "frequencies_hz", list)
    positions = _require(header, "candidate_positions", list)
    dirs = _require(header, "directions", list)
    if (len(freqs), len(positions), len(dirs)) != (K, M, D):
        raise FormatError(
            f"header lists have lengths (K={len(freqs)}, M={len(positions)}, "
            f"D={len(dirs)}), declared (K={K}, M={M}, D={D})",
            0,
        )
    if "head_radius_m" not in header:
        raise FormatError("header missing field 'head_radius_m'", 0)

    start = newline + 1
    expected = M * K * D * 16
    actual = len(raw) - start
    if actual != expected:
        raise FormatError(
            f"payload is {actual} bytes, header declares M*K*D*16 = {expected}",
            start + min(actual, expected),
        )
    values = np.frombuffer(raw, dtype="<c16", count=M * K * D, offset=start)
    bad = ~np.isfinite(values)
    if bad.any():
        idx = int(np.flatnonzero(bad)[0])
        shift = 0 if not np.isfinite(values[idx].real) else 8
        raise FormatError(f"non-finite value at entry {idx}", start + idx * 16 + shift)

    try:
        candidates = CandidatePositionSet(
            tuple(Direction(p[0], p[1]) for p in positions),
            tuple(p[2] for p in positions),
            header["head_radius_m"],
        )
        frequencies = FrequencyGrid(tuple(freqs))
        directions = tuple(Direction(d[0], d[1]) for d in dirs)
        return GhrtfDatabase(
            candidates=candidates,
            frequencies=frequencies,
            directions=directions,
            values=values.reshape(M, K, D).astype(np.complex128),
            provenance=str(header.get("provenance", "")),
            direction_groups=header.get("direction_groups") or {},
        )
    except (InvalidArgumentError, TypeError, IndexError) as exc:
        raise FormatError(f"invalid header content: {exc}", 0) from None
