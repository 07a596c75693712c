"""LASSO regression emulated as a sequential model over the coefficients.

With partial residuals ``eps_t = Y - sum_{l<=t} beta_l Z_l`` the objective
``||Y - Z beta||^2 + lam sum |beta_t|`` splits into per-coefficient terms,
giving a Gaussian state equation centred at the univariate least-squares
fit to ``eps_{t-1}`` and an exponential-density observation at ``w_t = 0``
whose log-weight absorbs the penalty.
"""

from dataclasses import dataclass

import numpy as np

from ..exceptions import InvalidInputError
from ..model import EmulatedModel
from ..proposals import ConditionalProposal
from ._common import as_series, check_kappa, norm_logpdf


def _check_design(Y, Z):
    Y = as_series(Y, "Y")
    Z = np.asarray(Z, dtype=float)
    if Z.ndim != 2 or Z.shape[0] != Y.size or Z.shape[1] < 1:
        raise InvalidInputError("Z must be an (n, p) matrix matching Y")
    if not np.all(np.isfinite(Z)):
        raise InvalidInputError("Z contains non-finite values")
    norms = np.sum(Z**2, axis=0)
    zero = np.flatnonzero(norms == 0)
    if zero.size:
        raise InvalidInputError(f"column t={int(zero[0]) + 1} of Z has zero norm")
    return Y, Z


def lasso_objective(Y, Z, lam, beta):
    beta = np.asarray(beta, dtype=float)
    resid = Y - beta @ Z.T
    return np.sum(resid**2, axis=-1) + lam * np.sum(np.abs(beta), axis=-1)


def lasso_sequential_objective(Y, Z, lam, beta):
    """Objective accumulated coefficient by coefficient through partial residuals."""
    beta = np.asarray(beta, dtype=float)
    eps = np.array(Y, dtype=float)
    total = float(Y @ Y)
    for t in range(Z.shape[1]):
        zt = Z[:, t]
        nt = zt @ zt
        s = eps @ zt
        total += nt * (beta[t] - s / nt) ** 2 - s**2 / nt + lam * abs(beta[t])
        eps = eps - beta[t] * zt
    return total


class LassoModel(EmulatedModel):
    state_dim = 1
    proposal_lag = None
    default_post_mcmc = ("mh", 10)

    def __init__(self, Y, Z, lam, kappa, kappa0=None):
        self.Y, self.Z = _check_design(Y, Z)
        self.lam = float(lam)
        if not np.isfinite(self.lam) or self.lam < 0:
            raise InvalidInputError("lambda must be non-negative")
        self.kappa = check_kappa(kappa)
        self.kappa0 = self.kappa if kappa0 is None else check_kappa(kappa0, "kappa0")
        self.gram = self.Z.T @ self.Z
        self.zy = self.Z.T @ self.Y
        self.norms = np.diag(self.gram).copy()
        self.horizon = self.Z.shape[1]
        self.memory_depth = self.horizon - 1

    def with_kappa(self, kappa):
        return LassoModel(self.Y, self.Z, self.lam, kappa, self.kappa0)

    def inner_residual(self, t, history):
        """``eps_{t-1}' Z_t`` for each particle."""
        h = history[:, :t, 0]
        return self.zy[t] - h @ self.gram[:t, t]

    def state_logpdf(self, t, u, history):
        s = self.inner_residual(t, history)
        nt = self.norms[t]
        return norm_logpdf(u[:, 0], s / nt, 1.0 / (2 * self.kappa * nt))

    def obs_logpdf(self, t, x, history):
        s = self.inner_residual(t, history)
        return self.kappa * (s**2 / self.norms[t] - self.lam * np.abs(x[:, 0]))

    def log_target(self, paths):
        const = 0.5 * np.sum(np.log(self.kappa * self.norms / np.pi))
        return -self.kappa * (self.objective(paths) - self.Y @ self.Y) + const

    def site_log_target(self, paths, t):
        """Terms of :meth:`log_target` that involve ``beta_t``."""
        beta = np.asarray(paths, dtype=float)[..., 0]
        bt = beta[:, t]
        cross = self.zy[t] - beta @ self.gram[:, t] + self.norms[t] * bt
        return -self.kappa * (self.norms[t] * bt**2 - 2 * bt * cross + self.lam * np.abs(bt))

    def objective(self, paths):
        beta = np.asarray(paths, dtype=float)[..., 0]
        return lasso_objective(self.Y, self.Z, self.lam, beta)

    def native_proposal(self):
        return LassoStateProposal(self)


class LassoStateProposal(ConditionalProposal):
    """The state equation itself; the observation weight carries the penalty."""

    suff_lag = None

    def __init__(self, model):
        self.model = model

    def sample(self, t, history, rng):
        mdl = self.model
        s = mdl.inner_residual(t, history)
        nt = mdl.norms[t]
        sd = np.sqrt(1.0 / (2 * mdl.kappa * nt))
        return (s / nt + sd * rng.standard_normal(s.shape))[:, None]

    def logpdf(self, t, u, history):
        return self.model.state_logpdf(t, u, history)


@dataclass
class LassoProblem:
    Y: np.ndarray
    Z: np.ndarray
    lam: float = 5.0

    def __post_init__(self):
        self.Y, self.Z = _check_design(self.Y, self.Z)
        self.lam = float(self.lam)
        if not np.isfinite(self.lam) or self.lam < 0:
            raise InvalidInputError("lambda must be non-negative")

    def objective(self, beta):
        return lasso_objective(self.Y, self.Z, self.lam, beta)

    def build_model(self, kappa):
        return build_lasso_model(self.Y, self.Z, self.lam, kappa)


def build_lasso_model(Y, Z, lam, kappa):
    """Emulated model whose most likely path is the LASSO solution."""
    return LassoModel(Y, Z, lam, kappa)
