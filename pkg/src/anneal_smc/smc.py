"""Sequential importance sampling with resampling, and path estimators."""

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .exceptions import (
    DegenerateEnsembleError,
    InvalidInputError,
    PropagationError,
    WeightCollapseWarning,
)

SCHEMES = ("systematic", "multinomial")
TRIGGERS = ("ess", "at_end", "never")


def check_random_state(random_state):
    """Return a ``numpy.random.Generator`` for ``None``, an int or a Generator."""
    if isinstance(random_state, np.random.Generator):
        return random_state
    if random_state is None or isinstance(random_state, (int, np.integer)):
        return np.random.default_rng(random_state)
    if isinstance(random_state, np.random.SeedSequence):
        return np.random.default_rng(random_state)
    raise InvalidInputError(f"cannot build a Generator from {random_state!r}")


def normalize_log_weights(log_weights):
    """Return normalized weights (summing to one) from log-weights."""
    lw = np.asarray(log_weights, dtype=float)
    top = np.max(lw) if lw.size else -np.inf
    if not np.isfinite(top):
        raise DegenerateEnsembleError("all weights are zero")
    w = np.exp(lw - top)
    return w / w.sum()


def ess(log_weights):
    """Effective sample size ``(sum w)^2 / sum w^2`` computed from log-weights."""
    lw = np.asarray(log_weights, dtype=float)
    finite = lw[np.isfinite(lw)]
    if finite.size == 0:
        raise DegenerateEnsembleError("ESS undefined: all weights are zero")
    return float(np.exp(2 * logsumexp(finite) - logsumexp(2 * finite)))


@dataclass
class WeightedEnsemble:
    """``m`` weighted state paths targeting ``pi(. ; kappa)``."""

    paths: np.ndarray
    log_weights: np.ndarray
    kappa: float
    rng_stamp: object = None
    ess_history: list = field(default_factory=list)

    def __post_init__(self):
        self.paths = np.asarray(self.paths, dtype=float)
        self.log_weights = np.asarray(self.log_weights, dtype=float)
        if self.paths.ndim != 3:
            raise InvalidInputError("paths must have shape (m, T, d)")
        if self.paths.shape[0] < 1 or self.log_weights.shape != (self.paths.shape[0],):
            raise InvalidInputError("need one log-weight per path and m >= 1")
        if not np.any(np.isfinite(self.log_weights)):
            raise DegenerateEnsembleError("ensemble has no finite log-weight")

    @property
    def size(self):
        return self.paths.shape[0]

    @property
    def weights(self):
        return normalize_log_weights(self.log_weights)

    def ess(self):
        return ess(self.log_weights)

    def copy(self):
        return WeightedEnsemble(
            self.paths.copy(), self.log_weights.copy(), self.kappa,
            self.rng_stamp, list(self.ess_history),
        )


@dataclass(frozen=True)
class ResamplePolicy:
    """When and how to resample.

    ``trigger`` is ``"ess"`` (resample when ESS < ``rho * m``), ``"at_end"``
    (once after the last propagation step) or ``"never"``.
    """

    scheme: str = "systematic"
    trigger: str = "ess"
    rho: float = 0.3

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise InvalidInputError(f"unknown resampling scheme {self.scheme!r}")
        if self.trigger not in TRIGGERS:
            raise InvalidInputError(f"unknown resampling trigger {self.trigger!r}")
        if not 0 < self.rho <= 1:
            raise InvalidInputError(f"rho must lie in (0, 1], got {self.rho!r}")

    @classmethod
    def ess_below(cls, rho, scheme="systematic"):
        return cls(scheme=scheme, trigger="ess", rho=rho)

    @classmethod
    def at_end_only(cls, scheme="systematic"):
        return cls(scheme=scheme, trigger="at_end")

    @classmethod
    def never(cls):
        return cls(trigger="never")


def resample_indices(probs, m, scheme, rng):
    """Draw ``m`` ancestor indices with probabilities ``probs``."""
    cdf = np.cumsum(probs)
    cdf[-1] = 1.0
    if scheme == "systematic":
        u = (rng.random() + np.arange(m)) / m
    elif scheme == "multinomial":
        u = np.sort(rng.random(m))
    else:
        raise InvalidInputError(f"unknown resampling scheme {scheme!r}")
    return np.minimum(np.searchsorted(cdf, u, side="right"), len(probs) - 1)


def _resample_log(ensemble, log_priority, scheme, rng):
    log_priority = np.asarray(log_priority, dtype=float)
    if not np.any(np.isfinite(log_priority)):
        raise DegenerateEnsembleError("all priority scores are zero")
    probs = normalize_log_weights(log_priority)
    idx = resample_indices(probs, ensemble.size, scheme, rng)
    lw = ensemble.log_weights[idx] - log_priority[idx]
    lw -= np.max(lw)
    return WeightedEnsemble(
        ensemble.paths[idx], lw, ensemble.kappa, ensemble.rng_stamp,
        list(ensemble.ess_history),
    ), idx


def resample(ensemble, priority_scores=None, policy=None, random_state=None):
    """Resample paths with probability proportional to ``priority_scores``.

    Each selected path ``J`` carries the adjusted weight ``w_J / beta_J``, so
    weighted expectations are preserved in expectation.  ``None`` scores mean
    ``beta = w``, which leaves all output weights equal.
    """
    policy = policy or ResamplePolicy()
    rng = check_random_state(random_state)
    if priority_scores is None:
        log_priority = ensemble.log_weights
    else:
        beta = np.asarray(priority_scores, dtype=float)
        if beta.shape != (ensemble.size,) or np.any(beta < 0) or not np.all(np.isfinite(beta)):
            raise InvalidInputError("priority scores must be m finite non-negative reals")
        if not np.any(beta > 0):
            raise DegenerateEnsembleError("all priority scores are zero")
        with np.errstate(divide="ignore"):
            log_priority = np.log(beta)
    return _resample_log(ensemble, log_priority, policy.scheme, rng)[0]


def smc_run(model, proposal, m, policy=None, random_state=None, priority=None,
            rng_stamp=None):
    """Sequential importance sampling with optional resampling.

    At every step ``x_t`` is drawn from ``proposal`` and the log-weight is
    incremented by ``log p_t + log g_t - log q_t``.  ``priority``, if given,
    is a callable ``(t, paths[:, :t+1]) -> log adjustment`` whose output is
    added to the log-weights to form the log priority scores at resampling
    time (``beta = w * exp(adjustment)``).

    Returns a :class:`WeightedEnsemble` properly weighted for
    ``pi(. ; model.kappa)``.
    """
    m = int(m)
    if m < 1:
        raise InvalidInputError("m must be a positive count")
    policy = policy or ResamplePolicy()
    rng = check_random_state(random_state)
    T, d = model.horizon, model.state_dim
    paths = np.zeros((m, T, d))
    log_w = np.zeros(m)
    ess_history = []
    collapsed = 0
    for t in range(T):
        history = paths[:, :t]
        u = np.asarray(proposal.sample(t, history, rng), dtype=float).reshape(m, -1)
        if not np.all(np.isfinite(u)):
            raise PropagationError(t)
        x = model.complete_state(t, u, history)
        incr = (
            model.state_logpdf(t, u, history)
            + model.obs_logpdf(t, x, history)
            - proposal.logpdf(t, u, history)
        )
        paths[:, t] = x
        log_w = log_w + incr
        log_w[np.isnan(log_w)] = -np.inf
        top = np.max(log_w)
        if not np.isfinite(top):
            raise DegenerateEnsembleError(f"all weights vanished at t={t}")
        log_w -= top
        current = ess(log_w)
        ess_history.append(current)
        collapsed = collapsed + 1 if current <= 1 + 1e-9 else 0
        if collapsed == 3:
            warnings.warn(
                f"weight collapse: ESS = 1 for 3 consecutive steps (t={t})",
                WeightCollapseWarning, stacklevel=2,
            )
        last = t == T - 1
        if policy.trigger == "ess":
            due = current < policy.rho * m
        elif policy.trigger == "at_end":
            due = last
        else:
            due = False
        if due:
            log_beta = log_w
            if priority is not None and not last:
                log_beta = log_w + np.asarray(priority(t, paths[:, : t + 1]), dtype=float)
            ens, idx = _resample_log(
                WeightedEnsemble(paths, log_w, model.kappa), log_beta, policy.scheme, rng
            )
            paths, log_w = ens.paths.copy(), ens.log_weights
    return WeightedEnsemble(paths, log_w, model.kappa, rng_stamp, ess_history)


def empirical_map(ensemble, model):
    """Sample path with the largest log-target density (lowest index on ties)."""
    values = model.log_target(ensemble.paths)
    return ensemble.paths[int(np.argmax(values))].copy()


def weighted_mean_path(ensemble):
    """Coordinate-wise weighted average of the ensemble paths."""
    w = ensemble.weights
    return np.tensordot(w, ensemble.paths, axes=1)
