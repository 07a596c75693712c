"""Synthetic datasets for the four problems, CSV persistence and objective evaluation."""

import csv
from pathlib import Path

import numpy as np

from ..exceptions import InvalidInputError
from ..smc import check_random_state
from .l1trend import L1TrendProblem
from .lasso import LassoProblem
from .spline import SplineProblem
from .trading import TradingProblem, trading_ideal_path

PROBLEM_IDS = ("spline", "lasso", "trading", "l1trend")

DEFAULTS = {
    "spline": {"T": 50, "noise_sd": 0.25, "lam": 10.0},
    "lasso": {"n": 40, "p": 20, "rho": 0.4, "prob": 0.2, "noise_sd": 0.3, "lam": 5.0},
    "trading": {"T": 20, "sigma_x2": 0.25, "sigma_y2": 1.0, "alpha": 0.5},
    "l1trend": {"T": 60, "noise_sd": 0.1, "lam": 10.0},
}


def _params(problem_id, params):
    if problem_id not in PROBLEM_IDS:
        raise InvalidInputError(f"unknown problem {problem_id!r}; choose from {PROBLEM_IDS}")
    out = dict(DEFAULTS[problem_id])
    unknown = set(params or {}) - set(out)
    if unknown:
        raise InvalidInputError(f"unknown {problem_id} parameters: {sorted(unknown)}")
    out.update(params or {})
    return out


def piecewise_trend(T=60):
    """Noise-free zig-zag with slopes +1/20, -1/20, +1/20 on blocks of 20."""
    t = np.arange(1, int(T) + 1, dtype=float)
    return np.select([t <= 20, t <= 40], [(t - 1) / 20, (40 - t) / 20], (t - 41) / 20)


def generate_dataset(problem_id, params=None, random_state=None):
    """Build a problem instance with reproducible synthetic data.

    ``params`` overrides the defaults in :data:`DEFAULTS`.  Trading data are
    deterministic and ignore ``random_state``.
    """
    p = _params(problem_id, params)
    rng = check_random_state(random_state)
    if problem_id == "spline":
        t = np.arange(1, int(p["T"]) + 1)
        y = np.sin(9 * (t - 1) / 100) + p["noise_sd"] * rng.standard_normal(t.size)
        return SplineProblem(y, p["lam"])
    if problem_id == "lasso":
        n, k = int(p["n"]), int(p["p"])
        cov = np.full((k, k), p["rho"])
        np.fill_diagonal(cov, 1.0)
        Z = rng.multivariate_normal(np.zeros(k), cov, size=n)
        beta = (rng.random(k) < p["prob"]).astype(float)
        Y = Z @ beta + p["noise_sd"] * rng.standard_normal(n)
        problem = LassoProblem(Y, Z, p["lam"])
        problem.true_beta = beta
        return problem
    if problem_id == "trading":
        return TradingProblem(trading_ideal_path(int(p["T"])), p["sigma_x2"],
                              p["sigma_y2"], p["alpha"])
    y = piecewise_trend(int(p["T"])) + p["noise_sd"] * rng.standard_normal(int(p["T"]))
    return L1TrendProblem(y, p["lam"])


def save_dataset(problem, path):
    """Write ``t,value[,z1..zp]`` rows; ``t`` is one-based (zero-based for trading)."""
    path = Path(path)
    if isinstance(problem, LassoProblem):
        values, extra = problem.Y, problem.Z
    else:
        values, extra = problem.y, None
    start = 0 if isinstance(problem, TradingProblem) else 1
    header = ["t", "value"]
    if extra is not None:
        header += [f"z{j + 1}" for j in range(extra.shape[1])]
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for i, v in enumerate(values):
            row = [i + start, repr(float(v))]
            if extra is not None:
                row += [repr(float(z)) for z in extra[i]]
            writer.writerow(row)
    return path


def load_series(path):
    """Read a dataset CSV into ``(values, covariates or None)``."""
    with Path(path).open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or header[:2] != ["t", "value"]:
            raise InvalidInputError(f"{path}: expected header starting with t,value")
        rows = [[float(c) for c in row] for row in reader if row]
    if not rows:
        raise InvalidInputError(f"{path}: no data rows")
    data = np.asarray(rows)
    # contiguous copies: strided views change BLAS rounding, breaking replay
    covariates = np.ascontiguousarray(data[:, 2:]) if data.shape[1] > 2 else None
    return np.ascontiguousarray(data[:, 1]), covariates


def load_dataset(problem_id, path, params=None):
    """Rebuild a problem from a CSV written by :func:`save_dataset`."""
    p = _params(problem_id, params)
    values, Z = load_series(path)
    if problem_id == "lasso":
        if Z is None:
            raise InvalidInputError("lasso dataset needs covariate columns z1..zp")
        return LassoProblem(values, Z, p["lam"])
    if problem_id == "spline":
        return SplineProblem(values, p["lam"])
    if problem_id == "trading":
        return TradingProblem(values, p["sigma_x2"], p["sigma_y2"], p["alpha"])
    return L1TrendProblem(values, p["lam"])


def objective_value(problem, decision_variables):
    """Objective of the original optimization problem at ``decision_variables``.

    Spline inputs are ``(T, 3)`` state paths; LASSO takes coefficients;
    trading takes positions ``x_0..x_T``; l1 trend takes levels.
    """
    x = np.asarray(decision_variables, dtype=float)
    if isinstance(problem, SplineProblem):
        if x.shape[-2:] != (problem.y.size, 3):
            raise InvalidInputError("spline path must have shape (T, 3)")
    elif isinstance(problem, LassoProblem):
        if x.shape[-1] != problem.Z.shape[1]:
            raise InvalidInputError("coefficient vector length must equal p")
    elif isinstance(problem, L1TrendProblem):
        if x.shape[-1] != problem.y.size:
            raise InvalidInputError("trend path length must equal T")
    elif not isinstance(problem, TradingProblem):
        raise InvalidInputError(f"unsupported problem type {type(problem).__name__}")
    value = problem.objective(x)
    return float(value) if np.ndim(value) == 0 else value
