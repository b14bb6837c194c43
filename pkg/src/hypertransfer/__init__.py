"""Surrogate-aligned transfer of hyperparameter configurations.

Learn a mapping from configurations that perform well on a cheap source
task to configurations with comparable relative performance on an
expensive target task: fit radial-basis surrogates to both tasks, pair
large sample arrays by surrogate rank, train a small sigmoid network on
the pairs, and spend the target budget on the images of the best source
configurations.
"""

from .bench import (BENCHMARK_NAMES, OutputWarp, ShiftSpec, TestFunction,
                    benchmark_pair, benchmark_parts, branin,
                    cnn_tuning_space, hartmann6, make_pair, quadratic_bowl8,
                    rosenbrock8)
from .mapper import (MapperNetwork, RankPairDataset, TrainSettings,
                     build_rank_pairs, correlation, train)
from .sampling import latin_hypercube
from .space import (DELTA_DUP, Axis, DuplicateConfigError,
                    HyperparameterSpace, Observation, ObservationSet,
                    best_of)
from .surrogate import RbfSurrogate, SurrogateFitError
from .transfer import (HtsSettings, MappedConfig, Objective, ObjectiveError,
                       RunTrace, TraceRecord, baseline_linear_transfer,
                       baseline_no_transfer, hts_run, initializer_handoff,
                       map_top_r)

__version__ = "0.1.0"

__all__ = [
    "Axis",
    "BENCHMARK_NAMES",
    "DELTA_DUP",
    "DuplicateConfigError",
    "HtsSettings",
    "HyperparameterSpace",
    "MappedConfig",
    "MapperNetwork",
    "Objective",
    "ObjectiveError",
    "Observation",
    "ObservationSet",
    "OutputWarp",
    "RankPairDataset",
    "RbfSurrogate",
    "RunTrace",
    "ShiftSpec",
    "SurrogateFitError",
    "TestFunction",
    "TraceRecord",
    "TrainSettings",
    "baseline_linear_transfer",
    "baseline_no_transfer",
    "benchmark_pair",
    "benchmark_parts",
    "best_of",
    "branin",
    "build_rank_pairs",
    "cnn_tuning_space",
    "correlation",
    "hartmann6",
    "hts_run",
    "initializer_handoff",
    "latin_hypercube",
    "make_pair",
    "map_top_r",
    "quadratic_bowl8",
    "rosenbrock8",
    "train",
    "__version__",
]
