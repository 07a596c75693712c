"""scikit-learn style front ends for the annealed SMC solvers.

Each estimator takes its data in ``fit``, runs annealed SMC, and exposes
the best path found together with the annealing trace.  Hyperparameters
follow the ``get_params`` / ``set_params`` protocol, so estimators clone
and grid-search like any other.
"""

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .annealing import AnnealOptions, annealed_smc, geometric_schedule
from .problems import (
    L1TrendProblem,
    LassoProblem,
    SplineProblem,
    TradingProblem,
    backward_pilot_scores,
)
from .smc import ResamplePolicy, check_random_state, weighted_mean_path
from .viterbi import grids_from_ensemble, viterbi_mlp, zero_snap_refine


def _series(X, name="X"):
    arr = check_array(X, ensure_2d=False, dtype=float, input_name=name)
    if arr.ndim == 2:
        if arr.shape[1] != 1:
            raise ValueError(f"{name} must be a 1-d series or a single column")
        arr = arr[:, 0]
    return arr


def _check_length(X, n):
    if _series(X).size != n:
        raise ValueError(f"X has {_series(X).size} entries; the estimator was fitted on {n}")


class _AnnealedSMCBase(BaseEstimator):
    """Shared fitting loop; subclasses build the problem and post-process."""

    def _options(self, base_model, rng):
        priority = None
        pilot = getattr(self, "pilot_particles", None)
        if pilot:
            priority = backward_pilot_scores(base_model, pilot, rng)
        return AnnealOptions(
            initial_policy=ResamplePolicy.ess_below(self.ess_fraction),
            post_mcmc=self.post_mcmc,
            priority=priority,
        )

    def _anneal(self, problem):
        rng = check_random_state(self.random_state)
        model = problem.build_model(self.kappa0)
        schedule = geometric_schedule(self.kappa0, self.ratio, self.n_iter)
        result = annealed_smc(model, schedule, self.n_particles0, self.n_particles,
                              self._options(model, rng), rng)
        self.problem_ = problem
        self.model_ = model
        self.ensemble_ = result.ensemble
        self.trace_ = result.trace
        self.n_iter_converged_ = result.converged_at
        self.mean_path_ = weighted_mean_path(result.ensemble)
        return result


class SplineSMC(RegressorMixin, _AnnealedSMCBase):
    """Cubic smoothing spline on the knots ``t = 1..T`` by annealed SMC.

    ``fit(X)`` takes the observed series.  ``predict(t)`` evaluates the
    fitted spline at (possibly fractional) knot positions in ``[1, T]``.
    """

    def __init__(self, lam=10.0, kappa0=4.0, ratio=1.5, n_iter=16, n_particles=1000,
                 n_particles0=1000, ess_fraction=0.3, post_mcmc="gibbs", random_state=None):
        self.lam = lam
        self.kappa0 = kappa0
        self.ratio = ratio
        self.n_iter = n_iter
        self.n_particles = n_particles
        self.n_particles0 = n_particles0
        self.ess_fraction = ess_fraction
        self.post_mcmc = post_mcmc
        self.random_state = random_state

    def fit(self, X, y=None):
        series = _series(X)
        result = self._anneal(SplineProblem(series, self.lam))
        self.path_ = result.best_path
        self.objective_ = float(result.best_objective)
        return self

    def transform(self, X):
        """Smoothed levels at the knots; ``X`` must be the fitted series."""
        check_is_fitted(self, "path_")
        _check_length(X, self.path_.shape[0])
        return self.path_[:, 0].copy()

    def predict(self, X):
        """Spline values at knot positions ``X`` (1-based)."""
        check_is_fitted(self, "path_")
        t = _series(X)
        T = self.path_.shape[0]
        if np.any((t < 1) | (t > T)):
            raise ValueError(f"positions must lie in [1, {T}]")
        i = np.minimum(np.floor(t).astype(int), T - 1) - 1
        s = t - (i + 1)
        a, b, c = self.path_[i, 0], self.path_[i, 1], self.path_[i, 2]
        c_next = self.path_[np.minimum(i + 1, T - 1), 2]
        return a + b * s + c * s**2 + (c_next - c) / 3 * s**3

    def score(self, X, y=None, sample_weight=None):
        """Negative objective of the fitted path (higher is better)."""
        check_is_fitted(self, "path_")
        return -float(self.problem_.objective(self.path_))


class LassoSMC(RegressorMixin, _AnnealedSMCBase):
    """LASSO regression ``||y - X b||^2 + lam |b|_1`` by annealed SMC.

    No intercept is fitted.  With ``zero_snap`` the weighted-mean
    coefficients are greedily snapped to zero where that lowers the objective.
    """

    def __init__(self, lam=5.0, kappa0=0.05, ratio=1.5, n_iter=30, n_particles=2000,
                 n_particles0=5000, ess_fraction=0.3, post_mcmc=("mh", 10),
                 zero_snap=True, random_state=None):
        self.lam = lam
        self.kappa0 = kappa0
        self.ratio = ratio
        self.n_iter = n_iter
        self.n_particles = n_particles
        self.n_particles0 = n_particles0
        self.ess_fraction = ess_fraction
        self.post_mcmc = post_mcmc
        self.zero_snap = zero_snap
        self.random_state = random_state

    def fit(self, X, y):
        X = check_array(X, dtype=float)
        y = _series(y, "y")
        if y.shape[0] != X.shape[0]:
            raise ValueError("X and y have inconsistent numbers of samples")
        problem = LassoProblem(y, X, self.lam)
        self._anneal(problem)
        coef = self.mean_path_[:, 0]
        self.coef_unrefined_ = coef.copy()
        if self.zero_snap:
            coef = zero_snap_refine(coef, problem.objective)
        self.coef_ = coef
        self.objective_ = float(problem.objective(coef))
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X):
        check_is_fitted(self, "coef_")
        X = check_array(X, dtype=float)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} features, expected {self.n_features_in_}")
        return X @ self.coef_


class _PathTransformer(TransformerMixin, _AnnealedSMCBase):
    viterbi_top_q = None

    def _refine(self, result):
        path, value = result.best_path, float(result.best_objective)
        if self.viterbi_top_q:
            grids = grids_from_ensemble(result.ensemble, top_q=self.viterbi_top_q)
            cand = viterbi_mlp(self.model_, grids)
            cand_value = float(self.model_.objective(cand[None])[0])
            if cand_value < value:
                path, value = cand, cand_value
        return path, value


class L1TrendSMC(_PathTransformer):
    """l1 trend filtering ``sum (y - x)^2 + lam sum |second difference|``."""

    def __init__(self, lam=10.0, kappa0=10.0, ratio=1.3, n_iter=40, n_particles=2000,
                 n_particles0=5000, ess_fraction=0.1, post_mcmc=("mh", 10),
                 viterbi_top_q=None, random_state=None):
        self.lam = lam
        self.kappa0 = kappa0
        self.ratio = ratio
        self.n_iter = n_iter
        self.n_particles = n_particles
        self.n_particles0 = n_particles0
        self.ess_fraction = ess_fraction
        self.post_mcmc = post_mcmc
        self.viterbi_top_q = viterbi_top_q
        self.random_state = random_state

    def fit(self, X, y=None):
        result = self._anneal(L1TrendProblem(_series(X), self.lam))
        path, self.objective_ = self._refine(result)
        self.trend_ = path[:, 0].copy()
        return self

    def transform(self, X):
        """The fitted trend; ``X`` must be the series passed to ``fit``."""
        check_is_fitted(self, "trend_")
        _check_length(X, self.trend_.size)
        return self.trend_.copy()


class TradingPathSMC(_PathTransformer):
    """Cost-aware trading path tracking an ideal path ``y_0..y_T``.

    With ``constrained`` the positions start and end at zero.
    """

    def __init__(self, sigma_x2=0.25, sigma_y2=1.0, alpha=0.5, constrained=True,
                 kappa0=1.0, ratio=2.0, n_iter=20, n_particles=1000, n_particles0=1000,
                 ess_fraction=0.3, post_mcmc="none", pilot_particles=300,
                 viterbi_top_q=None, random_state=None):
        self.sigma_x2 = sigma_x2
        self.sigma_y2 = sigma_y2
        self.alpha = alpha
        self.constrained = constrained
        self.kappa0 = kappa0
        self.ratio = ratio
        self.n_iter = n_iter
        self.n_particles = n_particles
        self.n_particles0 = n_particles0
        self.ess_fraction = ess_fraction
        self.post_mcmc = post_mcmc
        self.pilot_particles = pilot_particles
        self.viterbi_top_q = viterbi_top_q
        self.random_state = random_state

    def fit(self, X, y=None):
        problem = TradingProblem(_series(X), self.sigma_x2, self.sigma_y2, self.alpha,
                                 self.constrained)
        result = self._anneal(problem)
        path, self.objective_ = self._refine(result)
        self.positions_ = self.model_.full_paths(path[None])[0]
        return self

    def transform(self, X):
        """Positions ``x_0..x_T``; ``X`` must be the ideal path passed to ``fit``."""
        check_is_fitted(self, "positions_")
        _check_length(X, self.positions_.size)
        return self.positions_.copy()


__all__ = ["L1TrendSMC", "LassoSMC", "SplineSMC", "TradingPathSMC"]
