"""Monte Carlo bounds for Bermudan min-put options under jump-diffusion.

Lower bounds come from a least-squares exercise policy, benchmark upper
bounds from nested simulation of the dual, and fast true upper bounds from a
regression-fitted martingale assembled as an Ito sum over the simulation
increments.
"""

from .analytic import EuroPricerConfig, bs_min_put, bs_min_put_delta, merton_put_1d
from .dual_ab import NestedConfig, ab_upper_bound
from .dual_tm import MartingaleModel, build_martingale, fit_integrands, tm_upper_bound
from .estimates import BoundEstimate
from .harness import ExperimentConfig, reproduce_table, run_experiment
from .lower_bound import Policy, exercise_time, fit_policy, lower_bound
from .model import (DiscretizationGrids, ModelParams, PathBundle,
                    build_space_partition, build_time_grid, min_put_payoff,
                    simulate_paths)
from .regression import BasisSpec, FitResult, evaluate_basis, solve_least_squares

__version__ = "0.1.0"

__all__ = [
    "BasisSpec", "BoundEstimate", "DiscretizationGrids", "EuroPricerConfig",
    "ExperimentConfig", "FitResult", "MartingaleModel", "ModelParams",
    "NestedConfig", "PathBundle", "Policy", "ab_upper_bound",
    "bs_min_put", "bs_min_put_delta", "build_martingale",
    "build_space_partition", "build_time_grid", "evaluate_basis",
    "exercise_time", "fit_integrands", "fit_policy", "lower_bound",
    "merton_put_1d", "min_put_payoff", "reproduce_table", "run_experiment",
    "simulate_paths", "solve_least_squares", "tm_upper_bound",
]
