"""Independent reference solvers for validating annealed SMC results."""

import itertools
from dataclasses import dataclass

import numpy as np

from .exceptions import ConvergenceError, InvalidInputError
from .problems.lasso import _check_design
from .problems.spline import R, SQRT3, spline_objective

# --- smoothing spline ----------------------------------------------------

_F = np.array([
    [1.0, 1.0, SQRT3 / 3],
    [0.0, 1.0, SQRT3 - 1],
    [0.0, 0.0, -R],
])
_G = np.array([1.0 / 3, 1.0, 1.0])


def _spline_basis(T):
    """Paths for unit ``theta`` vectors, built by running the recursions directly."""
    out = np.zeros((T + 1, T, 3))
    for j in range(T + 1):
        theta = np.zeros(T + 1)
        theta[j] = 1.0
        x = np.array([theta[0], theta[1], 0.0])
        out[j, 0] = x
        for t in range(1, T):
            c = theta[t + 1]
            x = np.array([x[0] + x[1] + (c + 2 * x[2]) / 3, x[1] + x[2] + c, c])
            out[j, t] = x
    return out


def spline_quadratic_solve(y, lam):
    """Minimize the spline objective over ``theta`` by one dense linear solve."""
    y = np.asarray(y, dtype=float)
    T = y.size
    basis = _spline_basis(T)
    A, C = basis[:, :, 0].T, basis[:, :, 2].T
    idx = np.arange(T - 1)
    # c_t^2 + c_t c_{t+1} + c_{t+1}^2 = 3/4 (c_t + c_{t+1})^2 + 1/4 (c_t - c_{t+1})^2
    S = np.zeros((2 * (T - 1), T))
    S[idx, idx] = S[idx, idx + 1] = np.sqrt(0.75)
    S[T - 1 + idx, idx], S[T - 1 + idx, idx + 1] = 0.5, -0.5
    M = np.vstack([A, np.sqrt(4.0 / 3.0 * lam) * S @ C])
    rhs = np.concatenate([y, np.zeros(2 * (T - 1))])
    theta = np.linalg.lstsq(M, rhs, rcond=None)[0]
    return np.tensordot(theta, basis, axes=1)


def _kalman_fixed_slope(y, lam, kappa, slope):
    """Posterior mean of the spline state space model with ``b_1`` known.

    Forward Kalman filter, then the disturbance-form backward pass
    ``x_t = x_t^- + P_t^- r_{t-1}``, which never inverts ``P_t^-``
    (singular here: the noise enters along one direction only).
    """
    T = y.size
    s2y = 1.0 / (2 * kappa)
    s2b = 3.0 * R / (4.0 * lam * kappa)
    Q = s2b * np.outer(_G, _G)
    x = np.array([y[0], slope, 0.0])
    P = np.diag([s2y, 0.0, 0.0])
    xs, Ps, Ls, obs = [], [], [], []
    for t in range(T):
        if t > 0:
            x = _F @ x
            P = _F @ P @ _F.T + Q
        xs.append(x.copy())
        Ps.append(P.copy())
        if t == 0:
            # y_1 already enters through the prior on a_1
            obs.append(None)
            Ls.append(np.eye(3))
            continue
        S = P[0, 0] + s2y
        K = P[:, 0] / S
        v = y[t] - x[0]
        obs.append((v, S))
        IKH = np.eye(3)
        IKH[:, 0] -= K
        Ls.append(IKH)
        x = x + K * v
        P = IKH @ P
    r = np.zeros(3)
    out = np.zeros((T, 3))
    for t in range(T - 1, -1, -1):
        if t < T - 1:
            r = _F.T @ r
        r_prev = Ls[t].T @ r
        if obs[t] is not None:
            v, S = obs[t]
            r_prev = r_prev + np.array([v / S, 0.0, 0.0])
        out[t] = xs[t] + Ps[t] @ r_prev
        r = r_prev
    return out


def kalman_smoother_mlp(spline_problem, kappa=1.0, method="kalman"):
    """Most likely spline path; ``method`` is ``"kalman"`` or ``"quadratic"``.

    The Kalman route fixes the flat-prior slope ``b_1``, smooths, and then
    profiles ``b_1`` out exactly (the path is affine in it).  The profiled
    criterion includes the transitions' own weight on ``c_T^2``; the minimizer
    is unchanged because the optimum has ``c_T = 0``.
    """
    y = np.asarray(spline_problem.y, dtype=float)
    lam = float(spline_problem.lam)
    if method == "quadratic":
        return spline_quadratic_solve(y, lam)
    if method != "kalman":
        raise InvalidInputError(f"unknown method {method!r}")
    kappa = float(kappa)
    p0 = _kalman_fixed_slope(y, lam, kappa, 0.0)
    p1 = _kalman_fixed_slope(y, lam, kappa, 1.0)
    extra = 2.0 / SQRT3 * lam

    def crit(beta):
        path = p0 + beta * (p1 - p0)
        return spline_objective(y, lam, path) + extra * path[-1, 2] ** 2

    g0, g1, gm = crit(0.0), crit(1.0), crit(-1.0)
    a = 0.5 * (g1 + gm - 2 * g0)
    b = 0.5 * (g1 - gm)
    beta = -b / (2 * a)
    return p0 + beta * (p1 - p0)


# --- linear-Gaussian toy ---------------------------------------------------

def scalar_kalman_smoother(y, phi, q, r, m0, v0):
    """Filtering and RTS-smoothed moments of the scalar AR(1)-plus-noise model."""
    y = np.asarray(y, dtype=float)
    T = y.size
    mf, vf, mp, vp = (np.zeros(T) for _ in range(4))
    m, v = m0, v0
    for t in range(T):
        if t > 0:
            m, v = phi * m, phi**2 * v + q
        mp[t], vp[t] = m, v
        k = v / (v + r)
        m, v = m + k * (y[t] - m), (1 - k) * v
        mf[t], vf[t] = m, v
    ms, vs = mf.copy(), vf.copy()
    for t in range(T - 2, -1, -1):
        g = vf[t] * phi / vp[t + 1]
        ms[t] = mf[t] + g * (ms[t + 1] - mp[t + 1])
        vs[t] = vf[t] + g**2 * (vs[t + 1] - vp[t + 1])
    return ms, vs, mf, vf


# --- LASSO ------------------------------------------------------------------

def lasso_kkt_residual(Y, Z, lam, beta):
    """Largest violation of the optimality conditions of ``||Y - Z b||^2 + lam |b|_1``.

    With ``g = Z'(Y - Z b)``: ``|g_t| <= lam/2`` where ``b_t = 0`` and
    ``g_t = lam/2 sign(b_t)`` elsewhere.
    """
    beta = np.asarray(beta, dtype=float)
    g = Z.T @ (Y - Z @ beta)
    half = lam / 2.0
    zero = beta == 0
    viol = np.where(zero, np.maximum(np.abs(g) - half, 0.0), np.abs(g - half * np.sign(beta)))
    return float(np.max(viol)) if viol.size else 0.0


def lasso_coordinate_descent(Y, Z, lam, tol=1e-12, max_sweeps=100_000):
    """Cyclic coordinate descent with exact soft-threshold updates."""
    Y, Z = _check_design(Y, Z)
    lam = float(lam)
    if lam < 0:
        raise InvalidInputError("lambda must be non-negative")
    n, p = Z.shape
    norms = np.sum(Z**2, axis=0)
    beta = np.zeros(p)
    resid = Y.copy()
    half = lam / 2.0
    for _ in range(int(max_sweeps)):
        delta = 0.0
        for j in range(p):
            rho = Z[:, j] @ resid + norms[j] * beta[j]
            new = np.sign(rho) * max(abs(rho) - half, 0.0) / norms[j]
            change = new - beta[j]
            if change:
                resid -= change * Z[:, j]
                beta[j] = new
                delta = max(delta, abs(change))
        if delta < tol:
            return beta
    raise ConvergenceError(f"coordinate descent did not converge in {max_sweeps} sweeps")


# --- enumeration and local search -------------------------------------------

def _grid_arrays(model, grids):
    values = grids.values if hasattr(grids, "values") else grids
    out = []
    for a in values:
        a = np.asarray(a, dtype=float)
        out.append(a.reshape(-1, model.state_dim) if a.ndim < 2 else a)
    if len(out) != model.horizon:
        raise InvalidInputError("need one grid per time step")
    return out


def brute_force_mlp(model, grids, cap=1_000_000, chunk=20_000):
    """Exhaustive maximizer of the log-target over the product of the grids.

    Enumeration is lexicographic, so ties go to the lowest index in that order.
    """
    arrays = _grid_arrays(model, grids)
    sizes = [a.shape[0] for a in arrays]
    total = int(np.prod(sizes, dtype=float))
    if total > cap:
        raise InvalidInputError(f"search space of {total} paths exceeds the cap {cap}")
    best_val, best_path = -np.inf, None
    combos = itertools.product(*(range(s) for s in sizes))
    while True:
        block = np.array(list(itertools.islice(combos, chunk)), dtype=int)
        if block.size == 0:
            break
        paths = np.stack([arrays[t][block[:, t]] for t in range(len(arrays))], axis=1)
        vals = model.log_target(paths)
        i = int(np.argmax(vals))
        if vals[i] > best_val:
            best_val, best_path = vals[i], paths[i].copy()
    return best_path


@dataclass(frozen=True)
class LocalSearchOptions:
    """``segments=True`` also tries shifting every contiguous run of coordinates.

    Runs matter for objectives with kinks in differences of neighbouring
    coordinates, where single-coordinate moves stall on flat stretches.
    """

    initial_step: float = 1.0
    min_step: float = 1e-7
    shrink: float = 0.5
    max_sweeps: int = 100_000
    segments: bool = True


def _moves(n, segments):
    if not segments:
        return [(i, i + 1) for i in range(n)]
    return [(i, i + length) for length in range(1, n + 1) for i in range(n - length + 1)]


def local_search_baseline(objective, x0, options=None):
    """Derivative-free cyclic search with shrinking steps.

    At each step size every move (a single coordinate, or a contiguous run
    when ``options.segments``) is tried at ``+step`` and ``-step``;
    improvements are kept and sweeps repeat until none helps, then the step
    shrinks.  The result admits no improving single-coordinate move of the
    final step size.  Deterministic given ``x0`` and ``options``.
    """
    opts = options or LocalSearchOptions()
    x = np.array(x0, dtype=float)
    shape = x.shape
    flat = x.reshape(-1)
    moves = _moves(flat.size, opts.segments)

    def f(v):
        return float(np.asarray(objective(v.reshape(shape))).reshape(-1)[0])

    best = f(flat)
    step = float(opts.initial_step)
    sweeps = 0
    while step >= opts.min_step and sweeps < opts.max_sweeps:
        improved = True
        while improved and sweeps < opts.max_sweeps:
            improved = False
            sweeps += 1
            for i, j in moves:
                for sign in (1.0, -1.0):
                    trial = flat.copy()
                    trial[i:j] += sign * step
                    value = f(trial)
                    if value < best:
                        best, improved, flat = value, True, trial
                        break
        step *= opts.shrink
    return flat.reshape(shape)


__all__ = [
    "LocalSearchOptions",
    "brute_force_mlp",
    "kalman_smoother_mlp",
    "lasso_coordinate_descent",
    "lasso_kkt_residual",
    "local_search_baseline",
    "scalar_kalman_smoother",
    "spline_quadratic_solve",
]
