import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import special

from headarray.exceptions import FormatError, InvalidArgumentError, NumericalError
from headarray.ghrtf import (
    CandidatePositionSet,
    Direction,
    FrequencyGrid,
    GhrtfDatabase,
    build_sphere_database,
    direction_grid,
    load_database,
    save_database,
    sphere_ghrtf,
    stack_ghrtf,
    truncation_order,
)

A = 0.0875
C = 343.0

azimuths = st.floats(0, 2 * math.pi, exclude_max=True)
elevations = st.floats(0, math.pi)
directions = st.builds(Direction, azimuths, elevations)


def reference_series(ka, cos_theta, order):
    """Plain loop over the modal sum with scipy's Legendre polynomials."""
    total = 0j
    for n in range(order + 1):
        dh = special.spherical_jn(n, ka, derivative=True) + 1j * special.spherical_yn(
            n, ka, derivative=True
        )
        total += (2 * n + 1) * (-1j) ** n * special.eval_legendre(n, cos_theta) * 1j / (ka**2 * dh)
    return total


class TestDirection:
    @given(directions)
    def test_unit_norm(self, d):
        assert abs(np.linalg.norm(d.vector) - 1.0) <= 1e-12

    @given(directions, directions)
    def test_angle_range(self, a, b):
        assert 0.0 <= a.angle_to(b) <= math.pi

    def test_rejects_bad_elevation(self):
        with pytest.raises(InvalidArgumentError):
            Direction(0.0, 4.0)
        with pytest.raises(InvalidArgumentError):
            Direction(float("nan"), 1.0)

    def test_azimuth_wrapped(self):
        assert Direction(-math.pi / 2, 1.0).azimuth == pytest.approx(1.5 * math.pi)

    def test_from_vector(self):
        d = Direction.from_vector([0.0, 1.0, 0.0])
        assert d.azimuth == pytest.approx(math.pi / 2)
        assert d.elevation == pytest.approx(math.pi / 2)


class TestSphereGhrtf:
    def test_zero_frequency_is_exactly_one(self):
        v = sphere_ghrtf(A, 0.0, Direction(0.3, 1.0), Direction(2.0, 2.5))
        assert v == 1 + 0j

    @given(directions, directions, st.floats(1.0, 5000.0))
    @settings(max_examples=50)
    def test_reciprocity(self, mic, src, f):
        a = sphere_ghrtf(A, f, mic, src)
        b = sphere_ghrtf(A, f, src, mic)
        assert abs(a - b) <= 1e-12 * max(1.0, abs(a))

    def test_matches_higher_order_reference_at_3khz(self):
        mic = src = Direction(0.0, math.pi / 2)
        ka = 2 * math.pi * 3000.0 / C * A
        expected = reference_series(ka, 1.0, truncation_order(ka) + 20)
        got = sphere_ghrtf(A, 3000.0, mic, src)
        assert abs(got - expected) <= 1e-9 * abs(expected)

    @given(st.floats(0.01, 8.0), st.floats(-1.0, 1.0))
    @settings(max_examples=100)
    def test_truncation_stability(self, ka, cos_theta):
        f = ka * C / (2 * math.pi * A)
        theta = math.acos(cos_theta)
        mic, src = Direction(0.0, 0.0), Direction(0.0, theta)
        base = sphere_ghrtf(A, f, mic, src)
        more = sphere_ghrtf(A, f, mic, src, order=truncation_order(ka) + 8)
        assert abs(base - more) <= 1e-9 * abs(more)

    def test_bright_and_shadow_sides(self):
        # high-frequency limit: pressure doubling facing the source, attenuation behind
        src = Direction(0.0, math.pi / 2)
        front = sphere_ghrtf(A, 5000.0, src, src)
        back = sphere_ghrtf(A, 5000.0, Direction(math.pi, math.pi / 2), src)
        assert abs(front) > 1.8
        assert abs(back) < abs(front)

    def test_front_leads_in_phase(self):
        # exp(-i w t): the surface point facing the source is reached earlier than the centre,
        # so its phase is negative at low frequency (approximately -ka)
        src = Direction(0.0, math.pi / 2)
        v = sphere_ghrtf(A, 200.0, src, src)
        assert np.angle(v) < 0

    def test_low_frequency_limit(self):
        v = sphere_ghrtf(A, 0.1, Direction(0.0, 0.0), Direction(0.0, 2.0))
        assert abs(v - 1.0) < 1e-3

    @pytest.mark.parametrize("args", [(0.0, 100.0), (-1.0, 100.0), (A, -5.0), (A, float("inf"))])
    def test_invalid_arguments(self, args):
        with pytest.raises(InvalidArgumentError):
            sphere_ghrtf(args[0], args[1], Direction(0, 0), Direction(0, 1))

    def test_invalid_speed_of_sound(self):
        with pytest.raises(InvalidArgumentError):
            sphere_ghrtf(A, 100.0, Direction(0, 0), Direction(0, 1), speed_of_sound=0.0)

    def test_truncation_too_low_is_reported(self):
        with pytest.raises(NumericalError):
            sphere_ghrtf(A, 5000.0, Direction(0, 0), Direction(0, 1), order=3)


class TestGrids:
    def test_default_frequency_grid(self):
        grid = FrequencyGrid.default()
        assert len(grid) == 51
        assert grid.values[0] == 0.0 and grid.values[-1] == 5000.0
        assert np.allclose(np.diff(grid.values), 100.0)

    def test_frequency_parse_list(self):
        assert FrequencyGrid.parse("100, 200,400").values == (100.0, 200.0, 400.0)

    @pytest.mark.parametrize("text", ["5:1", "0:0:10", "10:1:0", "a,b", "100,50"])
    def test_frequency_parse_rejects(self, text):
        with pytest.raises(InvalidArgumentError):
            FrequencyGrid.parse(text)

    def test_horizontal36(self):
        dirs = direction_grid("horizontal36")
        assert len(dirs) == 36
        assert all(d.elevation == math.pi / 2 for d in dirs)
        assert np.allclose(np.degrees([d.azimuth for d in dirs]), 10.0 * np.arange(36))

    def test_median36(self):
        dirs = direction_grid("median36")
        assert len(dirs) == 36
        for d in dirs:
            if 0 < d.elevation < math.pi:
                assert d.azimuth in (0.0, math.pi)
        # consecutive directions are 10 degrees apart around the full circle
        steps = [dirs[i].angle_to(dirs[(i + 1) % 36]) for i in range(36)]
        assert np.allclose(np.degrees(steps), 10.0)

    def test_sphere_uniform_spacing(self):
        dirs = direction_grid("sphere_uniform", 240)
        assert len(dirs) == 240
        worst = math.pi
        for i in range(240):
            for j in range(i + 1, 240):
                dot = float(np.dot(dirs[i].vector, dirs[j].vector))
                worst = min(worst, math.acos(max(-1.0, min(1.0, dot))))
        assert math.degrees(worst) > 8.0

    def test_sphere_uniform_deterministic(self):
        assert direction_grid("sphere_uniform", 17) == direction_grid("sphere_uniform", 17)

    @pytest.mark.parametrize("kind,n", [("sphere_uniform", 3), ("sphere_uniform", None), ("cube", 10)])
    def test_invalid_grid(self, kind, n):
        with pytest.raises(InvalidArgumentError):
            direction_grid(kind, n)


class TestCandidates:
    def test_rejects_coincident_positions(self):
        d = Direction(0.5, 1.0)
        with pytest.raises(InvalidArgumentError):
            CandidatePositionSet((d, Direction(0.5, 1.0)), (A, A), A)

    def test_rejects_single_position(self):
        with pytest.raises(InvalidArgumentError):
            CandidatePositionSet((Direction(0, 0),), (A,), A)

    def test_xyz_on_sphere(self):
        cand = CandidatePositionSet.on_sphere(50, A)
        assert np.allclose(np.linalg.norm(cand.xyz, axis=1), A)


class TestBuildDatabase:
    def test_zero_frequency_database(self):
        db = build_sphere_database(
            candidates=CandidatePositionSet.on_sphere(2),
            frequencies=FrequencyGrid((0.0,)),
            directions=(Direction(0, 0), Direction(1, 1), Direction(2, 2)),
        )
        assert db.values.size == 6
        assert np.all(db.values == 1 + 0j)

    def test_matches_pointwise_evaluation(self, toy_db):
        rng = np.random.default_rng(0)
        for _ in range(20):
            m, k, j = (int(rng.integers(n)) for n in toy_db.shape)
            expected = sphere_ghrtf(
                A, toy_db.frequencies.values[k], toy_db.candidates.directions[m], toy_db.directions[j]
            )
            assert abs(toy_db.values[m, k, j] - expected) <= 1e-12

    def test_default_shape(self):
        db = build_sphere_database()
        assert db.shape == (242, 51, 312)
        assert db.values.size == 242 * 51 * 312
        assert sorted(db.direction_groups) == ["horizontal", "median", "uniform"]
        assert len(db.direction_indices("uniform")) == 240

    def test_values_are_read_only(self, toy_db):
        with pytest.raises(ValueError):
            toy_db.values[0, 0, 0] = 0

    def test_deterministic(self, toy_db):
        again = build_sphere_database(
            candidates=toy_db.candidates,
            frequencies=toy_db.frequencies,
            directions=toy_db.directions,
        )
        assert np.array_equal(again.values, toy_db.values)

    def test_rejects_wrong_shape(self, toy_db):
        with pytest.raises(InvalidArgumentError):
            GhrtfDatabase(toy_db.candidates, toy_db.frequencies, toy_db.directions, toy_db.values[:, :2])


def naive_stack(db, selection, fidx, didx):
    L = len(selection)
    H = np.zeros((L * len(fidx), len(didx)), dtype=complex)
    for kk, k in enumerate(fidx):
        for ll, m in enumerate(selection):
            i = L * kk + ll  # i = L(k-1) + l with 1-based k, l
            for jj, j in enumerate(didx):
                H[i, jj] = db.values[m, k, j]
    return H


class TestStack:
    def test_row_index_map(self, toy_db):
        # L=4, k=2, l=3 (1-based) lands in row i=7, i.e. 0-based row 6
        sel = [0, 5, 7, 9]
        H = stack_ghrtf(toy_db, sel, [1, 3], range(40))
        assert np.array_equal(H[6], toy_db.values[sel[2], 3, :])

    def test_single_frequency_is_slice(self, toy_db):
        H = stack_ghrtf(toy_db, [3, 1], [4], range(40))
        assert np.array_equal(H, toy_db.values[[3, 1], 4, :])

    def test_two_mics_three_frequencies(self, toy_db):
        H = stack_ghrtf(toy_db, [2, 8], [1, 2, 5], [0, 3, 9, 11, 20])
        assert H.shape == (6, 5)
        # 1-based row 3 is mic 1 at frequency 2
        assert np.array_equal(H[2], toy_db.values[2, 2, [0, 3, 9, 11, 20]])

    @given(st.data())
    @settings(max_examples=60, deadline=None)
    def test_matches_naive_construction(self, toy_db, data):
        L = data.draw(st.integers(1, 4))
        sel = data.draw(st.lists(st.integers(0, 11), min_size=L, max_size=L, unique=True))
        fidx = data.draw(st.lists(st.integers(0, 5), min_size=1, max_size=4))
        didx = data.draw(st.lists(st.integers(0, 39), min_size=1, max_size=4))
        assert np.array_equal(stack_ghrtf(toy_db, sel, fidx, didx), naive_stack(toy_db, sel, fidx, didx))

    @pytest.mark.parametrize(
        "sel,fidx,didx",
        [([1, 1], [0], [0]), ([12], [0], [0]), ([0], [6], [0]), ([0], [0], [40]), ([], [0], [0]), ([-1], [0], [0])],
    )
    def test_invalid_indices(self, toy_db, sel, fidx, didx):
        with pytest.raises(InvalidArgumentError):
            stack_ghrtf(toy_db, sel, fidx, didx)


class TestSerialization:
    def test_round_trip_bit_exact(self, small_db, tmp_path):
        path = tmp_path / "db.bin"
        save_database(small_db, path)
        back = load_database(path)
        assert back.values.tobytes() == small_db.values.tobytes()
        assert back.frequencies == small_db.frequencies
        assert back.directions == small_db.directions
        assert back.candidates == small_db.candidates
        assert back.direction_groups == small_db.direction_groups
        assert back.provenance == small_db.provenance

    def test_payload_layout(self, toy_db, tmp_path):
        path = tmp_path / "db.bin"
        save_database(toy_db, path)
        raw = path.read_bytes()
        payload = raw[raw.index(b"\n") + 1:]
        m, k, j = 3, 2, 17
        offset = ((m * 6 + k) * 40 + j) * 16
        re, im = np.frombuffer(payload[offset:offset + 16], dtype="<f8")
        assert complex(re, im) == toy_db.values[m, k, j]

    def test_truncated_payload(self, toy_db, tmp_path):
        path = tmp_path / "db.bin"
        save_database(toy_db, path)
        raw = path.read_bytes()
        path.write_bytes(raw[:-7])
        with pytest.raises(FormatError, match="payload"):
            load_database(path)

    def test_trailing_bytes(self, toy_db, tmp_path):
        path = tmp_path / "db.bin"
        save_database(toy_db, path)
        path.write_bytes(path.read_bytes() + b"\0" * 16)
        with pytest.raises(FormatError):
            load_database(path)

    def test_non_finite_value_offset(self, toy_db, tmp_path):
        path = tmp_path / "db.bin"
        save_database(toy_db, path)
        raw = bytearray(path.read_bytes())
        start = raw.index(b"\n") + 1
        bad = start + 5 * 16 + 8  # imaginary part of entry 5
        raw[bad:bad + 8] = np.array([np.nan], dtype="<f8").tobytes()
        path.write_bytes(bytes(raw))
        with pytest.raises(FormatError) as info:
            load_database(path)
        assert info.value.offset == bad

    def test_malformed_header(self, tmp_path):
        path = tmp_path / "db.bin"
        path.write_bytes(b"{not json\n")
        with pytest.raises(FormatError):
            load_database(path)

    def test_missing_header_terminator(self, tmp_path):
        path = tmp_path / "db.bin"
        path.write_bytes(b'{"M": 1}')
        with pytest.raises(FormatError):
            load_database(path)

    def test_declared_size_mismatch(self, toy_db, tmp_path):
        import json

        path = tmp_path / "db.bin"
        save_database(toy_db, path)
        raw = path.read_bytes()
        nl = raw.index(b"\n")
        header = json.loads(raw[:nl])
        header["D"] = 41
        path.write_bytes(json.dumps(header).encode() + raw[nl:])
        with pytest.raises(FormatError):
            load_database(path)
