"""Emulated-model builders for the four benchmark problems and a linear-Gaussian toy."""

from .datasets import (
    PROBLEM_IDS,
    generate_dataset,
    load_dataset,
    objective_value,
    piecewise_trend,
    save_dataset,
)
from .l1trend import L1TrendModel, L1TrendProblem, build_l1trend_model, l1trend_objective
from .lasso import LassoModel, LassoProblem, build_lasso_model, lasso_objective
from .pilot import BackwardPilot, backward_pilot_scores
from .spline import SplineModel, SplineProblem, build_spline_model, spline_objective
from .toy import LinearGaussianModel, PriorProposal, build_linear_gaussian_model
from .trading import (
    TradingModel,
    TradingProblem,
    build_trading_model,
    trading_ideal_path,
    trading_objective,
)

__all__ = [
    "PROBLEM_IDS",
    "BackwardPilot",
    "L1TrendModel",
    "L1TrendProblem",
    "LassoModel",
    "LassoProblem",
    "LinearGaussianModel",
    "PriorProposal",
    "SplineModel",
    "SplineProblem",
    "TradingModel",
    "TradingProblem",
    "backward_pilot_scores",
    "build_l1trend_model",
    "build_lasso_model",
    "build_linear_gaussian_model",
    "build_spline_model",
    "build_trading_model",
    "generate_dataset",
    "l1trend_objective",
    "lasso_objective",
    "load_dataset",
    "objective_value",
    "piecewise_trend",
    "save_dataset",
    "spline_objective",
    "trading_ideal_path",
    "trading_objective",
]
