import numpy as np
import pytest

from headarray.ghrtf import (
    CandidatePositionSet,
    FrequencyGrid,
    build_sphere_database,
    direction_grid,
)

# (criterion number, passed, detail) tuples recorded by tests/test_acceptance.py
ACCEPTANCE_RESULTS = []


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def toy_db():
    """M=12, K=6 (0..5 kHz), D=40 rigid-sphere database."""
    return build_sphere_database(
        candidates=CandidatePositionSet.on_sphere(12),
        frequencies=FrequencyGrid.parse("0:1000:5000"),
        directions=direction_grid("sphere_uniform", 40),
    )


@pytest.fixture(scope="session")
def small_db():
    """M=30 database on a 500 Hz grid with the three direction groups (60 uniform)."""
    dirs = (
        direction_grid("sphere_uniform", 60)
        + direction_grid("horizontal36")
        + direction_grid("median36")
    )
    groups = {
        "uniform": list(range(60)),
        "horizontal": list(range(60, 96)),
        "median": list(range(96, 132)),
    }
    return build_sphere_database(
        candidates=CandidatePositionSet.on_sphere(30),
        frequencies=FrequencyGrid.parse("0:100:5000"),
        directions=dirs,
        direction_groups=groups,
    )


def random_complex(rng, *shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number, passed, detail in sorted(ACCEPTANCE_RESULTS):
        status = "PASS" if passed else "FAIL"
        terminalreporter.write_line(f"criterion {number:>2}: {status}  {detail}")
