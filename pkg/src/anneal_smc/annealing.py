"""Annealed SMC: a ladder of tempered targets with ensemble-fitted proposals.

Iteration 0 runs plain SMC on the base model with its native proposal.  Each
later iteration tempers the model, fits per-step conditional proposals to
the previous ensemble, runs SMC (resampling once at the end by default) and
rejuvenates the particles with a target-invariant MCMC move.
"""

import time
from dataclasses import dataclass, field, fields

import numpy as np

from .exceptions import (
    BandwidthError,
    DegenerateEnsembleError,
    InvalidInputError,
    PropagationError,
    SingularFitError,
    UnsupportedModelError,
)
from .model import check_kappa, temper
from .proposals import ensemble_proposal
from .smc import (
    ResamplePolicy,
    WeightedEnsemble,
    check_random_state,
    empirical_map,
    smc_run,
    weighted_mean_path,
)


@dataclass(frozen=True)
class TemperatureSchedule:
    kappas: tuple

    def __post_init__(self):
        kappas = tuple(float(k) for k in self.kappas)
        if not kappas:
            raise InvalidInputError("schedule needs at least one temperature")
        if not all(np.isfinite(k) and k > 0 for k in kappas):
            raise InvalidInputError("inverse temperatures must be positive and finite")
        if any(b <= a for a, b in zip(kappas, kappas[1:])):
            raise InvalidInputError("inverse temperatures must be strictly increasing")
        object.__setattr__(self, "kappas", kappas)

    @property
    def K(self):
        return len(self.kappas) - 1

    def __len__(self):
        return len(self.kappas)

    def __getitem__(self, k):
        return self.kappas[k]

    def __iter__(self):
        return iter(self.kappas)


def geometric_schedule(kappa0, ratio, K):
    """``kappa_k = ratio**k * kappa0`` for ``k = 0..K``."""
    kappa0 = check_kappa(kappa0, "kappa0")
    ratio = float(ratio)
    if not np.isfinite(ratio) or ratio <= 1:
        raise InvalidInputError(f"ratio must exceed 1, got {ratio!r}")
    if int(K) != K or K < 0:
        raise InvalidInputError("K must be a non-negative integer")
    return TemperatureSchedule(tuple(kappa0 * ratio**k for k in range(int(K) + 1)))


@dataclass(frozen=True)
class AnnealRecord:
    iteration: int
    kappa: float
    obj_mean_path: float
    obj_map_path: float
    ess: float
    wall_ms: float

    @property
    def best(self):
        return min(self.obj_mean_path, self.obj_map_path)


TRACE_FIELDS = tuple(f.name for f in fields(AnnealRecord))


class AnnealTrace(list):
    """One :class:`AnnealRecord` per iteration."""

    def __getitem__(self, key):
        out = super().__getitem__(key)
        return AnnealTrace(out) if isinstance(key, slice) else out

    def column(self, name):
        return np.array([getattr(r, name) for r in self])

    def best_so_far(self):
        return np.minimum.accumulate([r.best for r in self]) if self else np.zeros(0)


def _objective_series(trace):
    if isinstance(trace, AnnealTrace):
        return trace.best_so_far()
    if len(trace) and isinstance(trace[0], AnnealRecord):
        return AnnealTrace(trace).best_so_far()
    values = np.asarray(trace, dtype=float)
    return np.minimum.accumulate(values) if values.size else values


def convergence_check(trace, tol=1e-6, patience=2):
    """True once the best objective improved by less than ``tol`` (relative)
    for ``patience`` consecutive iterations.

    ``trace`` is an :class:`AnnealTrace` or a sequence of objective values.
    """
    best = _objective_series(trace)
    if best.size < patience + 1:
        return False
    prev, cur = best[-patience - 1:-1], best[-patience:]
    rel = (prev - cur) / np.maximum(np.abs(prev), np.finfo(float).tiny)
    return bool(np.all(rel < tol))


def convergence_iteration(trace, tol=1e-6, patience=2):
    """First iteration at which :func:`convergence_check` holds, else ``None``."""
    for k in range(len(trace)):
        if convergence_check(trace[: k + 1], tol, patience):
            return k
    return None


# --- post-MCMC moves -------------------------------------------------------

class InverseKappaScale:
    """``tau^2 = c / kappa`` for the site-wise random-walk proposal."""

    def __init__(self, c=1.0):
        self.c = float(c)

    def __call__(self, kappa):
        return self.c / kappa

    def __repr__(self):
        return f"InverseKappaScale(c={self.c:.6g})"


def _tau2(tau_rule, kappa):
    if tau_rule is None:
        return 1.0 / kappa
    if callable(tau_rule):
        return float(tau_rule(kappa))
    return float(tau_rule)


def _mh_sweeps(paths, model, steps, tau2, rng, current=None):
    """Site-wise random-walk MH; returns new paths, log-targets and acceptance rate.

    Models may supply ``site_log_target(paths, t)``, the part of the
    log-target that involves ``x_t``, to avoid re-evaluating whole paths.
    """
    paths = paths.copy()
    m, T, d = paths.shape
    current = model.log_target(paths) if current is None else current.copy()
    accepted = 0
    sd = np.sqrt(tau2)
    local = getattr(model, "site_log_target", None)
    for _ in range(int(steps)):
        for t in range(T):
            prop = paths.copy()
            prop[:, t] += sd * rng.standard_normal((m, d))
            if local is None:
                new = model.log_target(prop)
                ratio = new - current
            else:
                ratio = local(prop, t) - local(paths, t)
                new = current + ratio
            log_u = np.log(rng.random(m))
            take = log_u < ratio
            paths[take, t] = prop[take, t]
            current = np.where(take, new, current)
            accepted += int(take.sum())
    total = int(steps) * T * m
    return paths, current, (accepted / total if total else 0.0)


def _check_mh_model(model):
    if model.singular_transition:
        raise UnsupportedModelError(
            "site-wise MH needs a non-singular model; use blocked Gibbs instead"
        )


def post_mcmc_mh(ensemble, model, steps, tau_rule=None, random_state=None,
                 return_acceptance=False):
    """Apply ``steps`` sweeps of site-wise Gaussian random-walk Metropolis moves.

    Every sweep proposes ``x_t + N(0, tau^2)`` at each ``t`` for each particle
    and accepts with probability ``min(1, pi(x~) / pi(x))`` under the model's
    target.  ``tau_rule`` is ``None`` (``tau^2 = 1/kappa``), a constant
    ``tau^2`` or a callable of ``kappa``.  Weights are left unchanged.
    """
    _check_mh_model(model)
    if steps < 0:
        raise InvalidInputError("steps must be non-negative")
    rng = check_random_state(random_state)
    tau2 = _tau2(tau_rule, model.kappa)
    if steps == 0:
        out = ensemble.copy()
        return (out, 0.0) if return_acceptance else out
    paths, _, rate = _mh_sweeps(ensemble.paths, model, steps, tau2, rng)
    out = WeightedEnsemble(paths, ensemble.log_weights.copy(), ensemble.kappa,
                           ensemble.rng_stamp, list(ensemble.ess_history))
    return (out, rate) if return_acceptance else out


def calibrate_mh_scale(ensemble, model, target=0.4, random_state=None, subsample=200,
                       bounds=(1e-8, 1e4), iters=40):
    """Pick ``c`` in ``tau^2 = c / kappa`` so one sweep accepts about ``target``.

    Bisection on ``log c`` over a subsample, with common random numbers so
    the acceptance curve is deterministic.
    """
    _check_mh_model(model)
    rng = check_random_state(random_state)
    n = min(int(subsample), ensemble.size)
    idx = np.sort(rng.choice(ensemble.size, n, replace=False))
    base = ensemble.paths[idx]
    current = model.log_target(base)
    seed = int(rng.integers(2**63 - 1))

    def rate(c):
        return _mh_sweeps(base, model, 1, c / model.kappa, np.random.default_rng(seed),
                          current)[2]

    lo, hi = np.log(bounds[0]), np.log(bounds[1])
    for _ in range(int(iters)):
        mid = 0.5 * (lo + hi)
        if rate(np.exp(mid)) > target:
            lo = mid
        else:
            hi = mid
    return InverseKappaScale(np.exp(0.5 * (lo + hi)))


def post_mcmc_blocked_gibbs(ensemble, spline_model, random_state=None, block_size=3):
    """One sweep of exact Gaussian block updates on sliding parameter blocks.

    The spline path is linear in ``theta = (a_1, b_1, c_2, ..., c_T)`` and the
    target is ``exp(-kappa (theta' H theta - 2 h' theta))``.  Blocks of
    ``block_size`` consecutive entries of ``theta`` are redrawn in turn from
    their full conditionals; a block covering all of ``theta`` is an exact
    joint draw.
    """
    model = spline_model
    if not hasattr(model, "quadratic_form") or not hasattr(model, "to_theta"):
        raise UnsupportedModelError("blocked Gibbs needs a linear-Gaussian spline model")
    rng = check_random_state(random_state)
    H, h = model.quadratic_form()
    theta = model.to_theta(ensemble.paths)
    dim = theta.shape[1]
    width = min(int(block_size), dim)
    if width < 1:
        raise InvalidInputError("block_size must be positive")
    for start in range(dim - width + 1):
        B = slice(start, start + width)
        H_BB = H[B, B]
        chol = np.linalg.cholesky(2.0 * model.kappa * H_BB)
        # conditional mean solves H_BB mu = h_B - H_{B,rest} theta_rest
        rhs = h[B] - theta @ H[:, B] + theta[:, B] @ H_BB
        mean = np.linalg.solve(H_BB, rhs.T).T
        z = rng.standard_normal((theta.shape[0], width))
        theta[:, B] = mean + np.linalg.solve(chol.T, z.T).T
    paths = model.from_theta(theta)
    return WeightedEnsemble(paths, ensemble.log_weights.copy(), ensemble.kappa,
                            ensemble.rng_stamp, list(ensemble.ess_history))


def parse_post_mcmc(spec):
    """Normalize ``"none"``, ``"gibbs"``, ``"mh"``, ``"mh:N"`` or ``("mh", N)``."""
    if spec is None:
        return ("none", 0)
    if isinstance(spec, tuple):
        kind, steps = spec
    else:
        kind, _, steps = str(spec).partition(":")
        steps = steps or {"mh": 10, "gibbs": 1}.get(kind.strip().lower(), 0)
    kind = kind.strip().lower()
    if kind not in ("none", "gibbs", "mh"):
        raise InvalidInputError(f"unknown post-MCMC kind {kind!r}")
    try:
        steps = int(steps)
    except (TypeError, ValueError):
        raise InvalidInputError(f"post-MCMC steps must be an integer, got {steps!r}") from None
    if steps < 0:
        raise InvalidInputError("post-MCMC steps must be non-negative")
    return (kind, steps)


# --- driver ------------------------------------------------------------------

@dataclass
class AnnealOptions:
    """Knobs of :func:`annealed_smc`; ``"model"`` defers to the problem's default."""

    proposal_family: str = "model"
    proposal_lag: object = "model"
    jitter: float = 1e-9
    initial_policy: ResamplePolicy = field(default_factory=lambda: ResamplePolicy.ess_below(0.3))
    anneal_policy: ResamplePolicy = field(default_factory=ResamplePolicy.at_end_only)
    post_mcmc: object = "model"
    mh_scale: object = None
    mh_target_accept: float = 0.4
    gibbs_block: int = 3
    priority: object = None
    snapshots: tuple = ()
    sink: object = None
    record_wall_time: bool = True
    tol: float = 1e-6
    patience: int = 2


@dataclass
class AnnealResult:
    ensemble: WeightedEnsemble
    trace: AnnealTrace
    best_path: np.ndarray
    best_objective: float
    best_iteration: int
    converged_at: object = None
    snapshots: dict = field(default_factory=dict)
    mh_scale: object = None

    def __iter__(self):
        yield from (self.ensemble, self.trace, self.best_path)


def _with_iteration(exc, k):
    exc.iteration = k
    if exc.args:
        exc.args = (f"iteration {k}: {exc.args[0]}",) + exc.args[1:]
    return exc


def annealed_smc(base_model, schedule, m0, m, options=None, random_state=None):
    """Run annealed SMC over ``schedule`` starting from ``base_model``.

    Returns an :class:`AnnealResult`, which unpacks as
    ``(ensemble, trace, best_path)``.  The best path is the lowest-objective
    path among every iteration's weighted-mean and empirical-MAP paths.
    """
    opts = options or AnnealOptions()
    rng = check_random_state(random_state)
    if not isinstance(schedule, TemperatureSchedule):
        schedule = TemperatureSchedule(tuple(schedule))
    if not np.isclose(base_model.kappa, schedule[0], rtol=1e-12, atol=0):
        raise InvalidInputError("base model kappa must equal the first scheduled kappa")
    if int(m0) < 2 or int(m) < 2:
        raise InvalidInputError("particle counts must be at least 2")
    family = base_model.proposal_family if opts.proposal_family == "model" else opts.proposal_family
    post_kind, post_steps = parse_post_mcmc(
        base_model.default_post_mcmc if opts.post_mcmc == "model" else opts.post_mcmc
    )
    fit_kwargs = {} if family == "nonparametric" else {"jitter": opts.jitter}
    mh_scale = opts.mh_scale
    trace = AnnealTrace()
    snapshots = {}
    best = (np.inf, None, -1)
    converged_at = None
    ensemble = None
    for k, kappa in enumerate(schedule):
        start = time.perf_counter()
        model = base_model if k == 0 else temper(base_model, kappa)
        try:
            if k == 0:
                ensemble = smc_run(model, model.native_proposal(), m0, opts.initial_policy,
                                   rng, priority=opts.priority, rng_stamp=k)
            else:
                proposal = ensemble_proposal(ensemble, model, family, opts.proposal_lag,
                                             **fit_kwargs)
                ensemble = smc_run(model, proposal, m, opts.anneal_policy, rng, rng_stamp=k)
                if post_kind == "gibbs":
                    for _ in range(post_steps):
                        ensemble = post_mcmc_blocked_gibbs(ensemble, model, rng, opts.gibbs_block)
                elif post_kind == "mh" and post_steps:
                    if mh_scale is None:
                        mh_scale = calibrate_mh_scale(ensemble, model, opts.mh_target_accept, rng)
                    ensemble = post_mcmc_mh(ensemble, model, post_steps, mh_scale, rng)
        except (SingularFitError, BandwidthError, PropagationError, DegenerateEnsembleError) as exc:
            raise _with_iteration(exc, k)
        mean_path = weighted_mean_path(ensemble)
        map_path = empirical_map(ensemble, model)
        obj_mean = float(model.objective(mean_path[None])[0])
        obj_map = float(model.objective(map_path[None])[0])
        if not np.isfinite(obj_mean) and not np.isfinite(obj_map):
            raise DegenerateEnsembleError(f"iteration {k}: non-finite objectives")
        for value, path in ((obj_mean, mean_path), (obj_map, map_path)):
            if value < best[0]:
                best = (value, path, k)
        wall = (time.perf_counter() - start) * 1e3 if opts.record_wall_time else 0.0
        record = AnnealRecord(k, float(kappa), obj_mean, obj_map,
                              float(ensemble.ess_history[-1]), wall)
        trace.append(record)
        if opts.sink is not None:
            opts.sink(record)
        if k in opts.snapshots:
            snapshots[k] = ensemble.copy()
        if converged_at is None and convergence_check(trace, opts.tol, opts.patience):
            converged_at = k
    return AnnealResult(ensemble, trace, best[1], best[0], best[2], converged_at,
                        snapshots, mh_scale)


__all__ = [
    "AnnealOptions",
    "AnnealRecord",
    "AnnealResult",
    "AnnealTrace",
    "InverseKappaScale",
    "TRACE_FIELDS",
    "TemperatureSchedule",
    "annealed_smc",
    "calibrate_mh_scale",
    "convergence_check",
    "convergence_iteration",
    "geometric_schedule",
    "parse_post_mcmc",
    "post_mcmc_blocked_gibbs",
    "post_mcmc_mh",
]
