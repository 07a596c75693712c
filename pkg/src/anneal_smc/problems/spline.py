"""Cubic smoothing spline as a linear-Gaussian emulated model.

The state is ``(a_t, b_t, c_t) = (m(t), m'(t), m''(t)/2)``.  ``c`` follows an
AR(1) with coefficient ``-(2 - sqrt 3)``; ``a`` and ``b`` follow from the
natural-spline recursions, so only ``c_t`` is random after the first step.
``a_t`` is observed with variance ``1/(2 kappa)``.

A path is fully determined by ``theta = (a_1, b_1, c_2, ..., c_T)``, and the
target is a Gaussian in ``theta``; :meth:`SplineModel.quadratic_form`
exposes it for the exact blocked Gibbs move and the oracles.
"""

from dataclasses import dataclass

import numpy as np

from ..exceptions import InvalidInputError
from ..model import EmulatedModel
from ..proposals import ConditionalProposal
from ._common import as_series, check_kappa, norm_logpdf, positive

SQRT3 = np.sqrt(3.0)
#: AR coefficient of c_t is -R
R = 2.0 - SQRT3
TRANSITION = np.array([
    [1.0, 1.0, SQRT3 / 3],
    [0.0, 1.0, SQRT3 - 1],
    [0.0, 0.0, -R],
])
LOADING = np.array([1.0 / 3, 1.0, 1.0])
TERMINAL_MODES = ("exact", "paper", "pin")


def spline_objective(y, lam, paths):
    """``sum (y_t - a_t)^2 + 4/3 lam sum (c_t^2 + c_t c_{t+1} + c_{t+1}^2)``."""
    x = np.asarray(paths, dtype=float)
    a, c = x[..., 0], x[..., 2]
    fit = np.sum((y - a) ** 2, axis=-1)
    pen = np.sum(c[..., :-1] ** 2 + c[..., :-1] * c[..., 1:] + c[..., 1:] ** 2, axis=-1)
    return fit + 4.0 / 3.0 * lam * pen


def paths_from_theta(theta):
    """Run the spline recursions from ``(a_1, b_1, c_2..c_T)``; ``c_1 = 0``."""
    theta = np.atleast_2d(np.asarray(theta, dtype=float))
    m, T = theta.shape[0], theta.shape[1] - 1
    out = np.zeros((m, T, 3))
    out[:, 0, 0], out[:, 0, 1] = theta[:, 0], theta[:, 1]
    for t in range(1, T):
        a, b, c = out[:, t - 1, 0], out[:, t - 1, 1], out[:, t - 1, 2]
        ct = theta[:, t + 1]
        out[:, t] = np.column_stack([a + b + (ct + 2 * c) / 3, b + c + ct, ct])
    return out


def theta_from_paths(paths):
    x = np.asarray(paths, dtype=float)
    return np.concatenate([x[..., 0, :2], x[..., 1:, 2]], axis=-1)


class SplineModel(EmulatedModel):
    state_dim = 3
    memory_depth = 1
    singular_transition = True
    proposal_lag = 1
    default_post_mcmc = "gibbs"

    def __init__(self, y, lam, kappa, kappa0=None, terminal="exact", slope_sd=None):
        self.y = as_series(y, min_length=3)
        self.lam = positive(lam, "lambda")
        self.kappa = check_kappa(kappa)
        self.kappa0 = self.kappa if kappa0 is None else check_kappa(kappa0, "kappa0")
        if terminal not in TERMINAL_MODES:
            raise InvalidInputError(f"terminal must be one of {TERMINAL_MODES}")
        self.terminal = terminal
        self.slope_sd = slope_sd
        self.horizon = self.y.size

    @property
    def sigma_b2(self):
        return 3.0 * R / (4.0 * self.lam * self.kappa)

    @property
    def sigma_y2(self):
        return 1.0 / (2.0 * self.kappa)

    def with_kappa(self, kappa):
        return SplineModel(self.y, self.lam, kappa, self.kappa0, self.terminal, self.slope_sd)

    def free_dim(self, t):
        return 2 if t == 0 else 1

    def free_coords(self, t, x):
        return x[:, :2] if t == 0 else x[:, 2:3]

    def complete_state(self, t, u, history):
        if t == 0:
            return np.column_stack([u[:, 0], u[:, 1], np.zeros(u.shape[0])])
        prev = history[:, -1]
        c = u[:, 0]
        return np.column_stack([
            prev[:, 0] + prev[:, 1] + (c + 2 * prev[:, 2]) / 3,
            prev[:, 1] + prev[:, 2] + c,
            c,
        ])

    def state_logpdf(self, t, u, history):
        if t == 0:
            # a_1 and b_1 carry a flat prior; a_1 is pinned down by g_1
            return np.zeros(u.shape[0])
        return norm_logpdf(u[:, 0] + R * history[:, -1, 2], 0.0, self.sigma_b2)

    def _terminal_coef(self):
        """Coefficient ``k`` of the extra ``k * lam * c_T^2`` in ``-log pi / kappa``."""
        extra = 2.0 / SQRT3
        if self.terminal == "exact":
            return 0.0
        if self.terminal == "paper":
            return extra
        return extra + 2.0 / (3.0 * R)

    def obs_logpdf(self, t, x, history):
        out = norm_logpdf(self.y[t], x[:, 0], self.sigma_y2)
        if t == self.horizon - 1:
            # transitions alone put 2/(3R) on c_T^2 where the objective has 4/3
            out = out + self.kappa * self.lam * (2.0 / SQRT3 - self._terminal_coef()) * x[:, 2] ** 2
        return out

    def objective(self, paths):
        return spline_objective(self.y, self.lam, paths)

    def target_objective(self, paths):
        """Objective whose Boltzmann density the model targets (mode-dependent)."""
        c_T = np.asarray(paths, dtype=float)[..., -1, 2]
        return self.objective(paths) + self._terminal_coef() * self.lam * c_T**2

    def quadratic_form(self):
        """``(H, h)`` with ``target_objective = theta' H theta - 2 h' theta + y'y``."""
        T = self.horizon
        basis = paths_from_theta(np.eye(T + 1))  # (T+1, T, 3)
        A = basis[:, :, 0].T
        C = basis[:, :, 2].T
        pc = np.zeros((T, T))
        idx = np.arange(T - 1)
        pc[idx, idx] += 4.0 / 3
        pc[idx + 1, idx + 1] += 4.0 / 3
        pc[idx, idx + 1] = pc[idx + 1, idx] = 2.0 / 3
        pc[T - 1, T - 1] += self._terminal_coef()
        H = A.T @ A + self.lam * C.T @ pc @ C
        return H, A.T @ self.y

    to_theta = staticmethod(theta_from_paths)
    from_theta = staticmethod(paths_from_theta)

    def native_proposal(self):
        return SplineNativeProposal(self)


class SplineNativeProposal(ConditionalProposal):
    """``q_t ∝ p_t g_t`` on the innovation; data-centred Gaussian for ``b_1``.

    ``b_1`` has a flat prior, so any proper proposal is admissible; it is
    centred on the least-squares slope of the first five observations.
    """

    suff_lag = 1

    def __init__(self, model):
        self.model = model
        y = model.y[: min(5, model.horizon)]
        k = y.size
        t = np.arange(k) - (k - 1) / 2
        self.slope = float(t @ y / (t @ t))
        sd = model.slope_sd
        if sd is None:
            sd = 3.0 * np.sqrt(model.sigma_y2 / (t @ t))
        self.slope_sd = float(sd)

    def _innovation(self, t, history):
        mdl = self.model
        prev = history[:, -1]
        abar = prev[:, 0] + prev[:, 1] + prev[:, 2] * SQRT3 / 3
        prec = 1.0 / mdl.sigma_b2 + 1.0 / (9.0 * mdl.sigma_y2)
        mean = (mdl.y[t] - abar) / (3.0 * mdl.sigma_y2) / prec
        return mean, 1.0 / prec, -R * prev[:, 2]

    def sample(self, t, history, rng):
        mdl = self.model
        n = history.shape[0]
        if t == 0:
            a = mdl.y[0] + np.sqrt(mdl.sigma_y2) * rng.standard_normal(n)
            b = self.slope + self.slope_sd * rng.standard_normal(n)
            return np.column_stack([a, b])
        mean, var, shift = self._innovation(t, history)
        return (shift + mean + np.sqrt(var) * rng.standard_normal(n))[:, None]

    def logpdf(self, t, u, history):
        mdl = self.model
        if t == 0:
            return (norm_logpdf(u[:, 0], mdl.y[0], mdl.sigma_y2)
                    + norm_logpdf(u[:, 1], self.slope, self.slope_sd**2))
        mean, var, shift = self._innovation(t, history)
        return norm_logpdf(u[:, 0] - shift, mean, var)


@dataclass
class SplineProblem:
    y: np.ndarray
    lam: float = 10.0

    def __post_init__(self):
        self.y = as_series(self.y, min_length=3)
        self.lam = positive(self.lam, "lambda")

    def objective(self, paths):
        return spline_objective(self.y, self.lam, paths)

    def build_model(self, kappa, **kwargs):
        return build_spline_model(self.y, self.lam, kappa, **kwargs)


def build_spline_model(y, lam, kappa, terminal="exact", slope_sd=None):
    """Emulated model for the cubic smoothing spline with penalty ``lam``."""
    return SplineModel(y, lam, kappa, terminal=terminal, slope_sd=slope_sd)
