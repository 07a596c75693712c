"""Scalar linear-Gaussian AR(1) model used to validate the SMC machinery.

``x_1 ~ N(m0, v0)``, ``x_t = phi x_{t-1} + N(0, q)``, ``y_t = x_t + N(0, r)``
at ``kappa = 1``; at other temperatures every variance is divided by
``kappa``.  The objective is the negative log-posterior at ``kappa = 1``
without constants, so the Boltzmann identity holds with scale one.
"""

import numpy as np

from ..model import EmulatedModel
from ..proposals import ConditionalProposal
from ._common import as_series, check_kappa, norm_logpdf, positive


class LinearGaussianModel(EmulatedModel):
    state_dim = 1
    memory_depth = 1
    proposal_lag = 1

    def __init__(self, y, phi=1.0, q=1.0, r=1.0, m0=0.0, v0=1.0, kappa=1.0, kappa0=None):
        self.y = as_series(y)
        self.phi = float(phi)
        self.q, self.r, self.v0 = positive(q, "q"), positive(r, "r"), positive(v0, "v0")
        self.m0 = float(m0)
        self.kappa = check_kappa(kappa)
        self.kappa0 = self.kappa if kappa0 is None else check_kappa(kappa0, "kappa0")
        self.horizon = self.y.size

    def with_kappa(self, kappa):
        return LinearGaussianModel(
            self.y, self.phi, self.q, self.r, self.m0, self.v0, kappa, self.kappa0
        )

    def _prior_mean(self, t, history):
        if t == 0:
            return np.full(history.shape[0], self.m0)
        return self.phi * history[:, -1, 0]

    def _prior_var(self, t):
        return (self.v0 if t == 0 else self.q) / self.kappa

    def state_logpdf(self, t, u, history):
        return norm_logpdf(u[:, 0], self._prior_mean(t, history), self._prior_var(t))

    def obs_logpdf(self, t, x, history):
        return norm_logpdf(self.y[t], x[:, 0], self.r / self.kappa)

    def objective(self, paths):
        x = np.asarray(paths, dtype=float)[..., 0]
        f = (x[..., 0] - self.m0) ** 2 / (2 * self.v0)
        f = f + np.sum((x[..., 1:] - self.phi * x[..., :-1]) ** 2, axis=-1) / (2 * self.q)
        return f + np.sum((self.y - x) ** 2, axis=-1) / (2 * self.r)

    def native_proposal(self):
        return LinearGaussianOptimalProposal(self)

    # reverse-time hooks used by the backward pilot
    def transition_logpdf(self, t, x_prev, x_next):
        return norm_logpdf(x_next, self.phi * x_prev, self.q / self.kappa)

    def terminal_sample(self, n, rng):
        var = self.r / self.kappa
        return self.y[-1] + np.sqrt(var) * rng.standard_normal(n), np.zeros(n)

    def reverse_sample(self, t, x_next, rng):
        q, r = self.q / self.kappa, self.r / self.kappa
        prec = self.phi**2 / q + 1 / r
        mean = (self.phi * x_next / q + self.y[t] / r) / prec
        x = mean + rng.standard_normal(x_next.shape) / np.sqrt(prec)
        log_norm = norm_logpdf(x_next, self.phi * self.y[t], q + self.phi**2 * r)
        return x, log_norm


class LinearGaussianOptimalProposal(ConditionalProposal):
    """Locally optimal proposal ``q_t ∝ p_t g_t``."""

    suff_lag = 1

    def __init__(self, model):
        self.model = model

    def _moments(self, t, history):
        mdl = self.model
        pm, pv = mdl._prior_mean(t, history), mdl._prior_var(t)
        rv = mdl.r / mdl.kappa
        var = 1.0 / (1.0 / pv + 1.0 / rv)
        return var * (pm / pv + mdl.y[t] / rv), var

    def sample(self, t, history, rng):
        mean, var = self._moments(t, history)
        return (mean + np.sqrt(var) * rng.standard_normal(mean.shape))[:, None]

    def logpdf(self, t, u, history):
        mean, var = self._moments(t, history)
        return norm_logpdf(u[:, 0], mean, var)


class PriorProposal(ConditionalProposal):
    """Bootstrap proposal: sample the state equation of any scalar toy model."""

    suff_lag = 1

    def __init__(self, model):
        self.model = model

    def sample(self, t, history, rng):
        mdl = self.model
        mean = mdl._prior_mean(t, history)
        return (mean + np.sqrt(mdl._prior_var(t)) * rng.standard_normal(mean.shape))[:, None]

    def logpdf(self, t, u, history):
        return self.model.state_logpdf(t, u, history)


def build_linear_gaussian_model(y, phi=1.0, q=1.0, r=1.0, m0=0.0, v0=1.0, kappa=1.0):
    return LinearGaussianModel(y, phi, q, r, m0, v0, kappa)
