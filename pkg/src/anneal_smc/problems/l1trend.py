"""l1 trend filtering as an AR(2) model with Laplace innovations.

``f(x) = sum (y_t - x_t)^2 + lam sum |x_{t-1} - 2 x_t + x_{t+1}|`` and the
model targets ``exp(-kappa f / 2)``: ``y_t = x_t + N(0, 1/kappa)`` and
``x_t = 2 x_{t-1} - x_{t-2} + Laplace(0, 2 / (lam kappa))``.  The first two
levels carry a flat prior.
"""

from dataclasses import dataclass

import numpy as np

from ..model import EmulatedModel
from ..proposals import ConditionalProposal
from ._common import as_series, check_kappa, norm_logpdf, positive


def l1trend_objective(y, lam, x):
    x = np.asarray(x, dtype=float)
    fit = np.sum((y - x) ** 2, axis=-1)
    d2 = x[..., :-2] - 2 * x[..., 1:-1] + x[..., 2:]
    return fit + lam * np.sum(np.abs(d2), axis=-1)


class L1TrendModel(EmulatedModel):
    state_dim = 1
    memory_depth = 2
    boltzmann_scale = 0.5
    proposal_lag = 2
    proposal_family = "laplace"
    default_post_mcmc = ("mh", 10)

    def __init__(self, y, lam, kappa, kappa0=None):
        self.y = as_series(y, min_length=3)
        self.lam = positive(lam, "lambda")
        self.kappa = check_kappa(kappa)
        self.kappa0 = self.kappa if kappa0 is None else check_kappa(kappa0, "kappa0")
        self.horizon = self.y.size

    @property
    def laplace_scale(self):
        return 2.0 / (self.lam * self.kappa)

    @property
    def sigma_y2(self):
        return 1.0 / self.kappa

    def with_kappa(self, kappa):
        return L1TrendModel(self.y, self.lam, kappa, self.kappa0)

    def _trend(self, history):
        return 2 * history[:, -1, 0] - history[:, -2, 0]

    def state_logpdf(self, t, u, history):
        if t < 2:
            return np.zeros(u.shape[0])
        b = self.laplace_scale
        return -np.abs(u[:, 0] - self._trend(history)) / b - np.log(2 * b)

    def obs_logpdf(self, t, x, history):
        return norm_logpdf(self.y[t], x[:, 0], self.sigma_y2)

    def objective(self, paths):
        return l1trend_objective(self.y, self.lam, np.asarray(paths, dtype=float)[..., 0])

    def log_target(self, paths):
        T = self.horizon
        const = -(T - 2) * np.log(2 * self.laplace_scale)
        const -= 0.5 * T * np.log(2 * np.pi * self.sigma_y2)
        return -0.5 * self.kappa * self.objective(paths) + const

    def site_log_target(self, paths, t):
        """Terms of :meth:`log_target` that involve ``x_t``."""
        x = np.asarray(paths, dtype=float)[..., 0]
        T = self.horizon
        out = -0.5 * self.kappa * (self.y[t] - x[:, t]) ** 2
        for s in range(max(t, 2), min(t + 3, T)):
            out = out - np.abs(x[:, s] - 2 * x[:, s - 1] + x[:, s - 2]) / self.laplace_scale
        return out

    def native_proposal(self):
        return L1TrendNativeProposal(self)


class L1TrendNativeProposal(ConditionalProposal):
    """Observation-centred draws for the two flat-prior levels, then the state law."""

    suff_lag = 2

    def __init__(self, model):
        self.model = model

    def sample(self, t, history, rng):
        mdl = self.model
        n = history.shape[0]
        if t < 2:
            return (mdl.y[t] + np.sqrt(mdl.sigma_y2) * rng.standard_normal(n))[:, None]
        return (mdl._trend(history) + rng.laplace(0.0, mdl.laplace_scale, n))[:, None]

    def logpdf(self, t, u, history):
        mdl = self.model
        if t < 2:
            return norm_logpdf(u[:, 0], mdl.y[t], mdl.sigma_y2)
        return mdl.state_logpdf(t, u, history)


@dataclass
class L1TrendProblem:
    y: np.ndarray
    lam: float = 10.0

    def __post_init__(self):
        self.y = as_series(self.y, min_length=3)
        self.lam = positive(self.lam, "lambda")

    def objective(self, x):
        return l1trend_objective(self.y, self.lam, x)

    def build_model(self, kappa):
        return build_l1trend_model(self.y, self.lam, kappa)


def build_l1trend_model(y, lam, kappa):
    """Emulated model targeting ``exp(-kappa f / 2)`` for l1 trend filtering."""
    return L1TrendModel(y, lam, kappa)
