"""Optimization by annealed sequential Monte Carlo on emulated state space models.

An objective ``f`` is recast as the negative log-density of a state space
model, ``log pi(x; kappa) = -kappa f(x) + const``, and a ladder of
increasing ``kappa`` concentrates SMC ensembles on the minimizer.
"""

from .annealing import (
    AnnealOptions,
    AnnealRecord,
    AnnealResult,
    AnnealTrace,
    TemperatureSchedule,
    annealed_smc,
    convergence_check,
    convergence_iteration,
    geometric_schedule,
    post_mcmc_blocked_gibbs,
    post_mcmc_mh,
)
from .estimators import L1TrendSMC, LassoSMC, SplineSMC, TradingPathSMC
from .exceptions import (
    AnnealSMCError,
    BandwidthError,
    ConvergenceError,
    DegenerateEnsembleError,
    InvalidInputError,
    PropagationError,
    SingularFitError,
    UnsupportedModelError,
    WeightCollapseWarning,
)
from .model import EmulatedModel, log_target_density, temper
from .smc import (
    ResamplePolicy,
    WeightedEnsemble,
    empirical_map,
    ess,
    normalize_log_weights,
    resample,
    smc_run,
    weighted_mean_path,
)
from .viterbi import GridSet, grids_from_ensemble, viterbi_mlp, zero_snap_refine

__version__ = "0.1.0"

__all__ = [
    "AnnealOptions",
    "AnnealRecord",
    "AnnealResult",
    "AnnealSMCError",
    "AnnealTrace",
    "BandwidthError",
    "ConvergenceError",
    "DegenerateEnsembleError",
    "EmulatedModel",
    "GridSet",
    "InvalidInputError",
    "L1TrendSMC",
    "LassoSMC",
    "PropagationError",
    "ResamplePolicy",
    "SingularFitError",
    "SplineSMC",
    "TemperatureSchedule",
    "TradingPathSMC",
    "UnsupportedModelError",
    "WeightCollapseWarning",
    "WeightedEnsemble",
    "annealed_smc",
    "convergence_check",
    "convergence_iteration",
    "empirical_map",
    "ess",
    "geometric_schedule",
    "grids_from_ensemble",
    "log_target_density",
    "normalize_log_weights",
    "post_mcmc_blocked_gibbs",
    "post_mcmc_mh",
    "resample",
    "smc_run",
    "temper",
    "viterbi_mlp",
    "weighted_mean_path",
    "zero_snap_refine",
]
