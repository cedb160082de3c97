"""Simulation toolkit for k-nearest-neighbor ball volumes of Poisson
processes in the half-space model of hyperbolic space."""

from .geometry import (
    BallSpec,
    HPoint,
    Region,
    ball_bbox,
    ball_in_region,
    ball_volume,
    dist_hyp,
    inverse_ball_volume,
    region_volume,
)
from .limitlaw import (
    BinnedDensity,
    RefMeasure,
    Regime,
    relative_entropy,
    scalar_rate,
    solve_regime,
)
from .nnscore import LayeredIndex, ScoredPoint, knn_radius, score, stopping_set
from .pipeline import (
    ExperimentConfig,
    SimOptions,
    compare_run,
    load_run,
    run_experiment,
)
from .rng import RngStream
from .sampler import PointConfig, dilation_regions, sample_extended, sample_region
from .blocks import AtomMeasure, BlockSet, build_blocks, build_eta, build_xi, sample_zeta
from .stats import empirical_law_tv, poisson_fit, tv_discrete

__version__ = "0.1.0"

__all__ = [
    "AtomMeasure",
    "BallSpec",
    "BinnedDensity",
    "BlockSet",
    "ExperimentConfig",
    "HPoint",
    "LayeredIndex",
    "PointConfig",
    "RefMeasure",
    "Regime",
    "Region",
    "RngStream",
    "ScoredPoint",
    "SimOptions",
    "ball_bbox",
    "ball_in_region",
    "ball_volume",
    "build_blocks",
    "build_eta",
    "build_xi",
    "compare_run",
    "dilation_regions",
    "dist_hyp",
    "empirical_law_tv",
    "inverse_ball_volume",
    "knn_radius",
    "load_run",
    "poisson_fit",
    "region_volume",
    "relative_entropy",
    "run_experiment",
    "sample_extended",
    "sample_region",
    "sample_zeta",
    "scalar_rate",
    "score",
    "solve_regime",
    "stopping_set",
    "tv_discrete",
]
