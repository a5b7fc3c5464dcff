"""Exact and model-free policy gradient for entropy-regularized
linear-quadratic mean-field control with common noise."""

from .exact_pg import GDTrace, IterateRecord, LevelSetConstants, constants, cost, exact_gd, gradient, stability_check
from .linalg import (
    ConvergenceError,
    DimensionError,
    RiccatiError,
    StabilityError,
    is_stable,
    solve_lyapunov,
    solve_riccati,
)
from .model import AnalyticSolution, ModelParams, PolicyParams, solve_optimal, table1_params, upsilon, validate
from .pgloop import MFRunConfig, StepSchedule, model_free_pg, multi_seed_study
from .popsim import EpisodeResult, SimConfig, aggregate_mean_identity, run_episode
from .zograd import GradConfig, GradientEstimate, estimate_gradient, estimator_diagnostics, sample_sphere

__version__ = "0.1.0"
