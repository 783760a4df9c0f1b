"""Microphone-array design on a head surface by effective-rank maximization."""

from .beamformer import (
    MaxDirectivityBeamformer,
    average_sensitivity,
    beampattern,
    coherence_matrix,
    md_weights,
    sensitivity,
)
from .exceptions import (
    CapacityError,
    DegenerateInputError,
    FormatError,
    HeadArrayError,
    InvalidArgumentError,
    NumericalError,
    SingularMatrixError,
)
from .ghrtf import (
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
)
from .music import (
    MusicDOA,
    music_estimate,
    run_music_monte_carlo,
    sample_covariance,
    simulate_snapshots,
    theoretical_music_variance,
)
from .placement import (
    ArraySelection,
    GaConfig,
    PlacementOptimizer,
    exhaustive_search,
    fitness,
    ga_optimize,
)
from .rank import effective_rank, effective_rank_map, svd

__version__ = "0.1.0"

__all__ = [
    "MaxDirectivityBeamformer",
    "average_sensitivity",
    "beampattern",
    "coherence_matrix",
    "md_weights",
    "sensitivity",
    "CapacityError",
    "DegenerateInputError",
    "FormatError",
    "HeadArrayError",
    "InvalidArgumentError",
    "NumericalError",
    "SingularMatrixError",
    "CandidatePositionSet",
    "Direction",
    "FrequencyGrid",
    "GhrtfDatabase",
    "build_sphere_database",
    "direction_grid",
    "load_database",
    "save_database",
    "sphere_ghrtf",
    "stack_ghrtf",
    "MusicDOA",
    "music_estimate",
    "run_music_monte_carlo",
    "sample_covariance",
    "simulate_snapshots",
    "theoretical_music_variance",
    "ArraySelection",
    "GaConfig",
    "PlacementOptimizer",
    "exhaustive_search",
    "fitness",
    "ga_optimize",
    "effective_rank",
    "effective_rank_map",
    "svd",
]
