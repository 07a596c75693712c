"""Backward pilot estimates of future-observation likelihoods.

For a Markov model with a reversible kernel the look-ahead

    beta_t(x) = p(y_{t+1}, ..., y_T | x_t = x)

can be estimated from one SMC pass run backward in time under a flat
artificial prior.  Backward particles at ``t + 1`` are weighted for
``g_{t+1}(x) beta_{t+1}(x)``, so integrating the forward kernel against them
gives ``beta_t(x) ≈ sum_j W_j p_{t+1}(x^{(j)}_{t+1} | x)``.

The model must provide three hooks:

``transition_logpdf(t, x_prev, x_next)``
    ``log p_t(x_next | x_prev)``, broadcasting over both arguments.
``terminal_sample(n, rng)``
    draw from the normalized product of the last observation (and any
    terminal factor); returns ``(x, log_mass)``.
``reverse_sample(t, x_next, rng)``
    draw ``x_t`` from the normalized ``p_{t+1}(x_next | x_t) g_t(x_t)``;
    returns ``(x, log_mass)``.
"""

import numpy as np
from scipy.special import logsumexp

from ..exceptions import DegenerateEnsembleError, InvalidInputError, UnsupportedModelError
from ..smc import check_random_state, ess, normalize_log_weights, resample_indices

_HOOKS = ("transition_logpdf", "terminal_sample", "reverse_sample")


class BackwardPilot:
    """Weighted backward particles per step and the priority callable they induce."""

    def __init__(self, model, positions, log_weights):
        self.model = model
        self.positions = positions
        self.log_weights = log_weights

    def log_beta(self, t, x):
        """``log beta_t`` at scalar positions ``x`` (up to a constant per ``t``)."""
        x = np.asarray(x, dtype=float).reshape(-1)
        if t >= self.model.horizon - 1:
            return np.zeros(x.size)
        nxt = self.positions[t + 1]
        lk = self.model.transition_logpdf(t + 1, x[:, None], nxt[None, :])
        return logsumexp(lk + self.log_weights[t + 1][None, :], axis=1)

    def __call__(self, t, paths):
        return self.log_beta(t, paths[:, t, 0])


def backward_pilot_scores(model, m_star, random_state=None, rho=0.5):
    """Run the backward pilot and return a priority callable for ``smc_run``.

    The callable maps ``(t, paths[:, :t+1])`` to ``log beta_t(x_t)``.  Scores
    are strictly positive; the final step has constant score.
    """
    missing = [h for h in _HOOKS if not hasattr(model, h)]
    if missing or model.memory_depth != 1 or model.state_dim != 1:
        raise UnsupportedModelError(
            "backward pilot needs a scalar Markov model with reverse-time hooks"
        )
    m_star = int(m_star)
    if m_star < 2:
        raise InvalidInputError("m_star must be at least 2")
    rng = check_random_state(random_state)
    T = model.horizon
    positions = [None] * T
    log_w = [None] * T
    x, lw = model.terminal_sample(m_star, rng)
    lw = np.asarray(lw, dtype=float).copy()
    for t in range(T - 1, -1, -1):
        if not np.any(np.isfinite(lw)):
            raise DegenerateEnsembleError(
                f"backward pilot degenerate at t={t}; increase m_star"
            )
        lw = lw - np.max(lw)
        positions[t], log_w[t] = x, np.log(normalize_log_weights(lw))
        if t == 0:
            break
        if ess(lw) < rho * m_star:
            idx = resample_indices(np.exp(log_w[t]), m_star, "systematic", rng)
            x, lw = x[idx], np.zeros(m_star)
        x_prev, incr = model.reverse_sample(t - 1, x, rng)
        x, lw = np.asarray(x_prev, dtype=float), lw + incr
    return BackwardPilot(model, positions, log_w)


__all__ = ["BackwardPilot", "backward_pilot_scores"]
