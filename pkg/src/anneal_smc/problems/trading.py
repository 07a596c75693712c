"""Optimal trading path with quadratic-plus-linear transaction costs.

Positions ``x_0..x_T`` track an ideal path ``y``.  Each trade ``d = x_t - x_{t-1}``
costs ``(|d| + alpha)^2 / sigma_x2`` and each departure from the ideal path
costs ``(y_t - x_t)^2 / sigma_y2``.  The objective is

    f(x) = sum_{t=1}^{T} (|d_t| + alpha)^2 / sigma_x2
           + sum_{t=1}^{T-1} (y_t - x_t)^2 / sigma_y2

with ``x_0 = x_T = 0``; the emulated model targets ``exp(-kappa f / 2)``.
In the unconstrained variant ``x_T`` is free and is observed as well.

Model index ``s`` is position ``x_{s+1}``.  Given the anchor ``z`` (the
previous position) the kernel ``exp(-(|x - z| + alpha)^2 / (2 s^2))`` with
``s^2 = sigma_x2 / kappa`` has the closed-form normalizer

    Z = 2 s sqrt(2 pi) Phi(-alpha / s).

The product of this kernel and a Gaussian observation is a two-piece
Gaussian, one piece on each side of ``z``; it gives the exact locally
optimal proposal and the reverse-time sampler for the backward pilot.
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import log_ndtr
from scipy.stats import truncnorm

from ..exceptions import InvalidInputError
from ..model import EmulatedModel
from ..proposals import ConditionalProposal
from ._common import LOG_2PI, as_series, check_kappa, norm_logpdf, positive


def trading_ideal_path(T=20):
    """``y_t = 25 exp(-(t+1)/8) - 40 exp(-(t+1)/4)`` for ``t = 0..T``."""
    t = np.arange(int(T) + 1)
    return 25 * np.exp(-(t + 1) / 8) - 40 * np.exp(-(t + 1) / 4)


def trading_objective(y, sigma_x2, sigma_y2, alpha, x, constrained=True):
    """Objective of full position paths ``x_0..x_T`` (vectorized over rows)."""
    x = np.asarray(x, dtype=float)
    d = np.abs(np.diff(x, axis=-1))
    cost = np.sum((d + alpha) ** 2, axis=-1) / sigma_x2
    stop = -1 if constrained else None
    dev = np.sum((y[1:stop] - x[..., 1:stop]) ** 2, axis=-1) / sigma_y2
    return cost + dev


class _Kernel:
    """Transaction-cost kernel at one temperature, with its Gaussian observation."""

    def __init__(self, sigma_x2, sigma_y2, alpha, kappa):
        self.alpha = alpha
        self.s2 = sigma_x2 / kappa
        self.v = sigma_y2 / kappa
        s = np.sqrt(self.s2)
        self.log_z = np.log(2.0) + np.log(s) + 0.5 * LOG_2PI + log_ndtr(-alpha / s)
        self.prec = 1.0 / self.s2 + 1.0 / self.v

    def logpdf(self, x, anchor):
        return -(np.abs(x - anchor) + self.alpha) ** 2 / (2 * self.s2) - self.log_z

    def _pieces(self, anchor, y):
        P, s2, v, a = self.prec, self.s2, self.v, self.alpha
        out = []
        for sign in (1.0, -1.0):
            shift = anchor - sign * a
            mu = (shift / s2 + y / v) / P
            const = -0.5 * (shift**2 / s2 + y**2 / v - P * mu**2)
            tail = log_ndtr(sign * (mu - anchor) * np.sqrt(P))
            out.append((mu, const + 0.5 * np.log(2 * np.pi / P) + tail))
        return out

    def log_mass(self, anchor, y):
        """``log int p(x | anchor) N(y; x, v) dx``."""
        (_, right), (_, left) = self._pieces(anchor, y)
        return np.logaddexp(right, left) - self.log_z - 0.5 * np.log(2 * np.pi * self.v)

    def sample(self, anchor, y, rng):
        """Draw from the normalized product ``p(x | anchor) N(y; x, v)``."""
        anchor = np.asarray(anchor, dtype=float)
        (mu_r, lm_r), (mu_l, lm_l) = self._pieces(anchor, y)
        lm_r, lm_l = np.broadcast_arrays(lm_r, lm_l)
        p_right = np.exp(lm_r - np.logaddexp(lm_r, lm_l))
        right = rng.random(p_right.shape) < p_right
        sd = 1.0 / np.sqrt(self.prec)
        mu = np.where(right, mu_r, mu_l)
        # standardized truncation bounds: [z, inf) on the right, (-inf, z) on the left
        edge = (anchor - mu) / sd
        lo = np.where(right, edge, -np.inf)
        hi = np.where(right, np.inf, edge)
        return truncnorm.rvs(lo, hi, loc=mu, scale=sd, random_state=rng)

    def product_logpdf(self, x, anchor, y):
        """Log-density of the normalized product evaluated at ``x``."""
        e = -(np.abs(x - anchor) + self.alpha) ** 2 / (2 * self.s2) - (y - x) ** 2 / (2 * self.v)
        (_, right), (_, left) = self._pieces(anchor, y)
        return e - np.logaddexp(right, left)


class TradingModel(EmulatedModel):
    state_dim = 1
    memory_depth = 1
    boltzmann_scale = 0.5
    proposal_lag = 1
    default_post_mcmc = "none"

    def __init__(self, y, sigma_x2, sigma_y2, alpha, kappa, kappa0=None,
                 constrained=True, endpoint=0.0):
        self.y = as_series(y, min_length=3)
        self.sigma_x2 = positive(sigma_x2, "sigma_x2")
        self.sigma_y2 = positive(sigma_y2, "sigma_y2")
        self.alpha = float(alpha)
        if not np.isfinite(self.alpha) or self.alpha < 0:
            raise InvalidInputError("alpha must be non-negative")
        self.kappa = check_kappa(kappa)
        self.kappa0 = self.kappa if kappa0 is None else check_kappa(kappa0, "kappa0")
        self.constrained = bool(constrained)
        self.endpoint = float(endpoint)
        self.T = self.y.size - 1
        self.horizon = self.T - 1 if self.constrained else self.T
        self.kernel = _Kernel(self.sigma_x2, self.sigma_y2, self.alpha, self.kappa)

    def with_kappa(self, kappa):
        return TradingModel(self.y, self.sigma_x2, self.sigma_y2, self.alpha, kappa,
                            self.kappa0, self.constrained, self.endpoint)

    def obs_at(self, t):
        """Ideal position matched by model step ``t``."""
        return self.y[t + 1]

    def _anchor(self, t, history):
        if t == 0:
            return np.full(history.shape[0], self.endpoint)
        return history[:, -1, 0]

    def state_logpdf(self, t, u, history):
        return self.kernel.logpdf(u[:, 0], self._anchor(t, history))

    def obs_logpdf(self, t, x, history):
        out = norm_logpdf(self.obs_at(t), x[:, 0], self.kernel.v)
        if self.constrained and t == self.horizon - 1:
            out = out + self.kernel.logpdf(self.endpoint, x[:, 0])
        return out

    def full_paths(self, paths):
        """Prepend ``x_0`` (and append ``x_T`` when constrained) to model paths."""
        x = np.asarray(paths, dtype=float)[..., 0]
        lead = np.full(x.shape[:-1] + (1,), self.endpoint)
        parts = [lead, x, lead] if self.constrained else [lead, x]
        return np.concatenate(parts, axis=-1)

    def objective(self, paths):
        return trading_objective(self.y, self.sigma_x2, self.sigma_y2, self.alpha,
                                 self.full_paths(paths), self.constrained)

    def log_target(self, paths):
        n_trans = self.T
        n_obs = self.horizon
        const = -n_trans * self.kernel.log_z - 0.5 * n_obs * np.log(2 * np.pi * self.kernel.v)
        return -0.5 * self.kappa * self.objective(paths) + const

    def native_proposal(self):
        return TradingNativeProposal(self)

    # reverse-time hooks used by the backward pilot
    def transition_logpdf(self, t, x_prev, x_next):
        return self.kernel.logpdf(x_next, x_prev)

    def terminal_sample(self, n, rng):
        y = self.obs_at(self.horizon - 1)
        if self.constrained:
            anchor = np.full(n, self.endpoint)
            x = self.kernel.sample(anchor, y, rng)
            return x, self.kernel.log_mass(anchor, y)
        return y + np.sqrt(self.kernel.v) * rng.standard_normal(n), np.zeros(n)

    def reverse_sample(self, t, x_next, rng):
        y = self.obs_at(t)
        return self.kernel.sample(x_next, y, rng), self.kernel.log_mass(x_next, y)


class TradingNativeProposal(ConditionalProposal):
    """Exact ``q_t ∝ p_t g_t``: a two-piece truncated Gaussian about ``x_{t-1}``."""

    suff_lag = 1

    def __init__(self, model):
        self.model = model

    def sample(self, t, history, rng):
        mdl = self.model
        return mdl.kernel.sample(mdl._anchor(t, history), mdl.obs_at(t), rng)[:, None]

    def logpdf(self, t, u, history):
        mdl = self.model
        return mdl.kernel.product_logpdf(u[:, 0], mdl._anchor(t, history), mdl.obs_at(t))


@dataclass
class TradingProblem:
    y: np.ndarray
    sigma_x2: float = 0.25
    sigma_y2: float = 1.0
    alpha: float = 0.5
    constrained: bool = True

    def __post_init__(self):
        self.y = as_series(self.y, min_length=3)

    def objective(self, x):
        """Objective of a full path ``x_0..x_T`` (free positions are also accepted)."""
        x = np.asarray(x, dtype=float)
        T = self.y.size - 1
        free = T - 1 if self.constrained else T
        if x.shape[-1] == free:
            lead = np.zeros(x.shape[:-1] + (1,))
            x = np.concatenate([lead, x, lead] if self.constrained else [lead, x], axis=-1)
        if x.shape[-1] != T + 1:
            raise InvalidInputError(f"trading path must have {T + 1} or {free} entries")
        return trading_objective(self.y, self.sigma_x2, self.sigma_y2, self.alpha, x,
                                 self.constrained)

    def build_model(self, kappa):
        return build_trading_model(self.y, self.sigma_x2, self.sigma_y2, self.alpha,
                                   kappa, self.constrained)


def build_trading_model(y, sigma_x2, sigma_y2, alpha, kappa, constrained=True):
    """Emulated trading model; ``constrained`` pins ``x_0 = x_T = 0``."""
    return TradingModel(y, sigma_x2, sigma_y2, alpha, kappa, constrained=constrained)
