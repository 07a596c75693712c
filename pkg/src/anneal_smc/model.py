"""Emulated state space models.

An emulated model is an artificial state space model whose posterior over
state paths is proportional to ``exp(-scale * kappa * f(path))`` for an
objective ``f``.  Minimizing ``f`` is then the same as finding the most
likely state path, and ``kappa`` plays the role of an inverse temperature.

Paths are stored as arrays of shape ``(m, T, d)``: ``m`` particles, horizon
``T`` and state dimension ``d``.  Time is zero-based throughout.  Every
density method is vectorized over the leading particle axis, and
``history`` arguments hold the previously generated states
``paths[:, :t]``.  Markov models only ever read ``history[:, -memory_depth:]``.
"""

from abc import ABC, abstractmethod

import numpy as np

from .exceptions import InvalidInputError


def check_kappa(kappa, name="kappa"):
    kappa = float(kappa)
    if not np.isfinite(kappa) or kappa <= 0:
        raise InvalidInputError(f"{name} must be a positive real, got {kappa!r}")
    return kappa


class EmulatedModel(ABC):
    """Temperature-indexed state space model emulating an objective.

    Subclasses set ``horizon``, ``state_dim``, ``memory_depth``, ``kappa`` and
    ``kappa0`` and implement the state/observation log-densities, the
    objective and :meth:`with_kappa`.

    At step ``t`` only ``free_dim(t)`` coordinates are actually random; the
    rest of ``x_t`` may be a deterministic function of those and the history
    (singular dynamics).  Proposals and ``state_logpdf`` work on the free
    coordinates ``u_t``; :meth:`complete_state` maps them to the full state.
    """

    horizon: int
    state_dim: int
    memory_depth: int
    kappa: float
    kappa0: float
    #: ``log pi(path) = -boltzmann_scale * kappa * objective(path) + const``
    boltzmann_scale = 1.0
    #: transition has fewer degrees of freedom than the state
    singular_transition = False
    #: trailing states the ensemble-fitted proposals condition on (None = all)
    proposal_lag = 1
    #: family of the ensemble-fitted proposals used by default
    proposal_family = "gaussian"
    #: default post-MCMC move used by the annealing driver
    default_post_mcmc = "none"

    def free_dim(self, t):
        return self.state_dim

    def complete_state(self, t, u, history):
        return u

    def free_coords(self, t, x):
        return x

    @abstractmethod
    def state_logpdf(self, t, u, history):
        """Log-density of the free coordinates ``u`` of ``x_t`` given history."""

    @abstractmethod
    def obs_logpdf(self, t, x, history):
        """Log observation density ``log g_t`` at ``x_t``."""

    @abstractmethod
    def objective(self, paths):
        """Original objective ``f`` for each path (vectorized)."""

    @abstractmethod
    def with_kappa(self, kappa):
        """Return the same model at inverse temperature ``kappa``."""

    @abstractmethod
    def native_proposal(self):
        """Proposal used for plain SMC at the base temperature."""

    def step_logpdf(self, t, x, history):
        u = self.free_coords(t, x)
        return self.state_logpdf(t, u, history) + self.obs_logpdf(t, x, history)

    def log_target(self, paths):
        """Sum of step log-densities; problems may override with a closed form."""
        paths = np.asarray(paths, dtype=float)
        total = np.zeros(paths.shape[0])
        for t in range(self.horizon):
            total += self.step_logpdf(t, paths[:, t], paths[:, :t])
        return total

    def as_paths(self, path):
        """Coerce ``(T,)``, ``(T, d)`` or ``(m, T, d)`` input to ``(m, T, d)``."""
        x = np.asarray(path, dtype=float)
        if x.ndim == 1 and self.state_dim == 1:
            x = x[:, None]
        if x.ndim == 2:
            x = x[None]
        if x.ndim != 3 or x.shape[1:] != (self.horizon, self.state_dim):
            raise InvalidInputError(
                f"path shape {np.shape(path)} incompatible with horizon "
                f"{self.horizon} and state_dim {self.state_dim}"
            )
        if not np.all(np.isfinite(x)):
            raise InvalidInputError("path contains non-finite entries")
        return x

    def __repr__(self):
        return (
            f"{type(self).__name__}(T={self.horizon}, d={self.state_dim}, "
            f"kappa={self.kappa:g}, kappa0={self.kappa0:g})"
        )


def log_target_density(model, path):
    """Log posterior density of one path, or of each path in a batch.

    Equals ``-model.boltzmann_scale * model.kappa * model.objective(path)``
    up to a path-independent constant.
    """
    paths = model.as_paths(path)
    values = model.log_target(paths)
    if np.ndim(path) == 3:
        return values
    return float(values[0])


def temper(model, kappa_new):
    """Move ``model`` to inverse temperature ``kappa_new``.

    Log-densities scale by ``kappa_new / model.kappa0`` relative to the base
    model; normalizing constants are recomputed in closed form by the
    problem builder.  The objective is unchanged.
    """
    return model.with_kappa(check_kappa(kappa_new, "kappa_new"))
