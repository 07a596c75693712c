"""Conditional proposals estimated from a weighted ensemble.

The annealing driver samples ``x_t`` at temperature ``kappa_k`` from an
estimate of ``pi(x_t | suff(x_{1:t-1}); kappa_{k-1})`` built from the
previous iteration's particles.  The sufficient statistic is the block of
the last ``lag`` states.
"""

import numpy as np
from scipy.special import logsumexp

from .exceptions import BandwidthError, InvalidInputError, SingularFitError
from .smc import check_random_state, normalize_log_weights

LOG_2PI = np.log(2 * np.pi)
# log of the smallest positive normal double: kernel weights below it underflow
LOG_UNDERFLOW = np.log(np.finfo(float).tiny)


class ConditionalProposal:
    """Per-time-step sampler ``q_t(u_t | history)`` with evaluable density.

    ``u_t`` are the model's free coordinates at step ``t``; ``history`` is
    ``paths[:, :t]``.
    """

    suff_lag = None

    def sample(self, t, history, rng):
        raise NotImplementedError

    def logpdf(self, t, u, history):
        raise NotImplementedError


def conditioning_block(history, t, lag):
    """Flatten the trailing ``lag`` states of ``history`` into features."""
    history = np.asarray(history, dtype=float)
    start = 0 if lag is None else max(0, t - int(lag))
    block = history[:, start:t]
    return block.reshape(block.shape[0], -1)


def _targets(ensemble, t, model):
    x = ensemble.paths[:, t]
    if model is not None:
        x = model.free_coords(t, x)
    return np.asarray(x, dtype=float).reshape(ensemble.size, -1)


def weighted_moments(data, weights):
    """Weighted mean and centered weighted covariance of the rows of ``data``."""
    mu = weights @ data
    centered = data - mu
    cov = (centered * weights[:, None]).T @ centered
    return mu, cov


def _as_features(features, k):
    features = np.asarray(features, dtype=float)
    if features.ndim == 2:
        return features
    return features.reshape(-1, k) if k else features.reshape(1, 0)


class GaussianConditional:
    """``N(mu_u + (h - mu_c) B, S)``: Gaussian conditional on features ``h``."""

    family = "gaussian"

    def __init__(self, mean_u, mean_c, coef, cov):
        self.mean_u = np.asarray(mean_u, dtype=float)
        self.mean_c = np.asarray(mean_c, dtype=float)
        self.coef = np.asarray(coef, dtype=float)
        self.cov = np.atleast_2d(np.asarray(cov, dtype=float))
        try:
            self._chol = np.linalg.cholesky(self.cov)
        except np.linalg.LinAlgError as exc:
            raise SingularFitError(
                "conditional covariance is not positive definite; increase jitter"
            ) from exc
        self._logdet = 2 * np.sum(np.log(np.diag(self._chol)))

    @property
    def dim(self):
        return self.mean_u.shape[0]

    def mean(self, features):
        features = _as_features(features, self.mean_c.shape[0])
        return self.mean_u + (features - self.mean_c) @ self.coef

    def sample(self, features, rng):
        loc = self.mean(features)
        z = rng.standard_normal(loc.shape)
        return loc + z @ self._chol.T

    def logpdf(self, u, features):
        u = np.asarray(u, dtype=float).reshape(-1, self.dim)
        r = u - self.mean(features)
        z = np.linalg.solve(self._chol, r.T)
        return -0.5 * (np.sum(z**2, axis=0) + self._logdet + self.dim * LOG_2PI)


class LaplaceConditional(GaussianConditional):
    """Laplace conditional matching the Gaussian fit's mean and variance.

    Coordinates are independent with location equal to the conditional mean
    and scale ``sd / sqrt(2)``, so each marginal variance is preserved.
    """

    family = "laplace"

    def __init__(self, mean_u, mean_c, coef, cov):
        super().__init__(mean_u, mean_c, coef, cov)
        self.scale = np.sqrt(np.diag(self.cov)) / np.sqrt(2.0)

    def sample(self, features, rng):
        loc = self.mean(features)
        return loc + rng.laplace(0.0, 1.0, size=loc.shape) * self.scale

    def logpdf(self, u, features):
        u = np.asarray(u, dtype=float).reshape(-1, self.dim)
        r = np.abs(u - self.mean(features)) / self.scale
        return -np.sum(r + np.log(2 * self.scale), axis=1)


def _fit_block(ensemble, t, lag, model, jitter):
    if not 0 <= t < ensemble.paths.shape[1]:
        raise InvalidInputError(f"time index {t} outside the horizon")
    w = ensemble.weights
    feats = conditioning_block(ensemble.paths[:, :t], t, lag)
    targets = _targets(ensemble, t, model)
    k = feats.shape[1]
    mu, cov = weighted_moments(np.hstack([feats, targets]), w)
    dim = cov.shape[0]
    cov = cov + jitter * max(np.trace(cov) / dim, np.finfo(float).tiny) * np.eye(dim)
    cc, cu, uu = cov[:k, :k], cov[:k, k:], cov[k:, k:]
    if k:
        try:
            coef = np.linalg.solve(cc, cu)
        except np.linalg.LinAlgError as exc:
            raise SingularFitError(
                f"feature covariance singular at t={t}; increase jitter"
            ) from exc
        cond = uu - cu.T @ coef
    else:
        coef = np.zeros((0, uu.shape[0]))
        cond = uu
    cond = 0.5 * (cond + cond.T)
    return mu[k:], mu[:k], coef, cond


def fit_gaussian_conditional(ensemble, t, lag, model=None, jitter=1e-9):
    """Fit ``N`` to the weighted ``(lag+1)``-block and condition on the past.

    The block covariance is the centered weighted covariance plus
    ``jitter * trace / dim`` on the diagonal.
    """
    return GaussianConditional(*_fit_block(ensemble, t, lag, model, jitter))


def fit_laplace_conditional(ensemble, t, lag, model=None, jitter=1e-9):
    """Laplace proposal with the Gaussian conditional's mean and variance."""
    return LaplaceConditional(*_fit_block(ensemble, t, lag, model, jitter))


def silverman_bandwidth(data, weights):
    """Weighted Silverman rule per column; zero-spread columns give 0."""
    data = np.asarray(data, dtype=float).reshape(len(weights), -1)
    mu = weights @ data
    sd = np.sqrt(np.maximum(weights @ (data - mu) ** 2, 0.0))
    n_eff = 1.0 / np.sum(weights**2)
    return 1.06 * sd * n_eff ** (-0.2)


class KernelConditional:
    """Nonparametric conditional: kernel-weighted donor plus Gaussian jitter.

    A donor ``l`` is drawn with probability proportional to
    ``w_l * K_b1(h_l - h)`` and ``u = u_l + eps`` with ``eps ~ N(0, b2^2)``.
    Both kernels are Gaussian product kernels.
    """

    family = "nonparametric"

    def __init__(self, donor_features, donor_targets, log_weights, b1, b2):
        self.features = np.asarray(donor_features, dtype=float)
        self.targets = np.asarray(donor_targets, dtype=float)
        self.log_w = np.log(normalize_log_weights(log_weights))
        k = self.features.shape[1]
        self.b1 = np.broadcast_to(np.asarray(b1, dtype=float), (k,)).copy()
        self.b2 = np.broadcast_to(np.asarray(b2, dtype=float), (self.targets.shape[1],)).copy()
        if np.any(self.b1 <= 0) or np.any(self.b2 < 0):
            raise InvalidInputError("bandwidths must be positive")

    @property
    def dim(self):
        return self.targets.shape[1]

    def donor_log_probs(self, features):
        features = _as_features(features, self.features.shape[1])
        use = np.isfinite(self.b1)
        if not np.any(use):
            logk = np.zeros((features.shape[0], self.features.shape[0]))
        else:
            diff = (features[:, None, use] - self.features[None, :, use]) / self.b1[use]
            logk = -0.5 * np.sum(diff**2, axis=2)
        scores = logk + self.log_w
        top = np.max(scores, axis=1)
        if np.any(top < LOG_UNDERFLOW):
            raise BandwidthError(self.b1.tolist())
        return scores - logsumexp(scores, axis=1, keepdims=True)

    def sample(self, features, rng):
        logp = self.donor_log_probs(features)
        cdf = np.cumsum(np.exp(logp), axis=1)
        u = rng.random((logp.shape[0], 1)) * cdf[:, -1:]
        donors = np.minimum((cdf < u).sum(axis=1), cdf.shape[1] - 1)
        eps = rng.standard_normal((logp.shape[0], self.dim)) * self.b2
        return self.targets[donors] + eps

    def logpdf(self, u, features):
        if np.any(self.b2 == 0):
            raise InvalidInputError("density undefined for b2 = 0")
        u = np.asarray(u, dtype=float).reshape(-1, self.dim)
        logp = self.donor_log_probs(features)
        z = (u[:, None, :] - self.targets[None]) / self.b2
        logk = -0.5 * np.sum(z**2, axis=2) - np.sum(np.log(self.b2)) - 0.5 * self.dim * LOG_2PI
        return logsumexp(logp + logk, axis=1)


def fit_kernel_conditional(ensemble, t, lag, model=None, b1=None, b2=None):
    """Kernel conditional with weighted-Silverman defaults (``b2 = b1 / 2``)."""
    w = ensemble.weights
    feats = conditioning_block(ensemble.paths[:, :t], t, lag)
    targets = _targets(ensemble, t, model)
    if b1 is None:
        b1 = silverman_bandwidth(feats, w) if feats.shape[1] else np.zeros(0)
        b1 = np.where(b1 > 0, b1, np.inf)
    if b2 is None:
        b2 = 0.5 * silverman_bandwidth(targets, w)
        floor = 1e-12 * np.maximum(1.0, np.abs(w @ targets))
        b2 = np.maximum(b2, floor)
    return KernelConditional(feats, targets, ensemble.log_weights, b1, b2)


def sample_nonparametric_conditional(ensemble, t, history, kernel_b1, kernel_b2,
                                     random_state=None, lag=1, model=None):
    """Draw ``x_t`` for each row of ``history`` from the empirical conditional."""
    rng = check_random_state(random_state)
    fit = fit_kernel_conditional(ensemble, t, lag, model, kernel_b1, kernel_b2)
    return fit.sample(conditioning_block(history, t, lag), rng)


FAMILIES = {
    "gaussian": fit_gaussian_conditional,
    "laplace": fit_laplace_conditional,
    "nonparametric": fit_kernel_conditional,
}


class FittedProposal(ConditionalProposal):
    """Sequence of per-step conditionals fitted from one ensemble."""

    def __init__(self, steps, lag):
        self.steps = list(steps)
        self.suff_lag = lag

    def sample(self, t, history, rng):
        return self.steps[t].sample(conditioning_block(history, t, self.suff_lag), rng)

    def logpdf(self, t, u, history):
        return self.steps[t].logpdf(u, conditioning_block(history, t, self.suff_lag))


def ensemble_proposal(ensemble, model, family="gaussian", lag="model", **kwargs):
    """Fit a conditional for every step of ``model`` from ``ensemble``.

    ``lag="model"`` uses ``model.proposal_lag``; ``None`` conditions on the
    full history.
    """
    if family not in FAMILIES:
        raise InvalidInputError(f"unknown proposal family {family!r}")
    if lag == "model":
        lag = model.proposal_lag
    fit = FAMILIES[family]
    steps = [fit(ensemble, t, lag, model, **kwargs) for t in range(model.horizon)]
    return FittedProposal(steps, lag)


__all__ = [
    "ConditionalProposal",
    "FittedProposal",
    "GaussianConditional",
    "KernelConditional",
    "LaplaceConditional",
    "ensemble_proposal",
    "fit_gaussian_conditional",
    "fit_kernel_conditional",
    "fit_laplace_conditional",
    "sample_nonparametric_conditional",
    "silverman_bandwidth",
]
