"""Grid Viterbi search over sample points and greedy zero-snapping.

For a Markov model the best path through per-step candidate sets comes out
of the dynamic programme

    l_t(j) = max_k l_{t-1}(k) + log p_t(a_j | a_k) + log g_t(a_j),

at cost quadratic in the grid size.  Second-order models run the same
recursion on pairs ``(x_{t-1}, x_t)`` drawn from the product of adjacent
grids, which is cubic in the grid size.
"""

from dataclasses import dataclass

import numpy as np

from .exceptions import InvalidInputError, UnsupportedModelError


@dataclass(frozen=True)
class GridSet:
    """Candidate states per step: ``values[t]`` has shape ``(n_t, d)``."""

    values: tuple

    def __post_init__(self):
        vals = []
        for t, a in enumerate(self.values):
            a = np.asarray(a, dtype=float)
            if a.ndim == 1:
                a = a[:, None]
            if a.ndim != 2 or a.shape[0] == 0:
                raise InvalidInputError(f"grid at t={t} must be a non-empty (n, d) array")
            if not np.all(np.isfinite(a)):
                raise InvalidInputError(f"grid at t={t} has non-finite values")
            vals.append(np.unique(a, axis=0))
        object.__setattr__(self, "values", tuple(vals))

    def __len__(self):
        return len(self.values)

    def __getitem__(self, t):
        return self.values[t]

    @property
    def sizes(self):
        return [a.shape[0] for a in self.values]


def grids_from_ensemble(ensemble, top_q=None, include=None):
    """Distinct particle values per step, optionally the ``top_q`` heaviest.

    ``include`` adds extra candidate states at every step (for example zero).
    """
    w = ensemble.weights
    grids = []
    for t in range(ensemble.paths.shape[1]):
        vals, inv = np.unique(ensemble.paths[:, t], axis=0, return_inverse=True)
        inv = np.asarray(inv).reshape(-1)
        if top_q is not None and vals.shape[0] > top_q:
            mass = np.bincount(inv, weights=w, minlength=vals.shape[0])
            keep = np.sort(np.argsort(-mass, kind="stable")[: int(top_q)])
            vals = vals[keep]
        if include is not None:
            extra = np.asarray(include, dtype=float).reshape(-1, vals.shape[1])
            vals = np.vstack([vals, extra])
        grids.append(vals)
    return GridSet(tuple(grids))


def _step(model, t, x, history):
    return model.step_logpdf(t, x, history)


def _viterbi_first(model, grids):
    T = model.horizon
    score = _step(model, 0, grids[0], grids[0][:, None, :][:, :0])
    back = []
    for t in range(1, T):
        prev, cur = grids[t - 1], grids[t]
        nk, nj = prev.shape[0], cur.shape[0]
        hist = np.repeat(prev, nj, axis=0)[:, None, :]
        x = np.tile(cur, (nk, 1))
        trans = _step(model, t, x, hist).reshape(nk, nj)
        total = score[:, None] + trans
        arg = np.argmax(total, axis=0)
        back.append(arg)
        score = total[arg, np.arange(nj)]
    j = int(np.argmax(score))
    idx = [j]
    for arg in reversed(back):
        j = int(arg[j])
        idx.append(j)
    idx.reverse()
    return np.stack([grids[t][idx[t]] for t in range(T)])


def _viterbi_second(model, grids):
    """Exact search over ``A_1 x ... x A_T`` for a model of memory two."""
    T = model.horizon
    a0, a1 = grids[0], grids[1]
    n0, n1 = a0.shape[0], a1.shape[0]
    s0 = _step(model, 0, a0, a0[:, None, :][:, :0])
    x1 = np.tile(a1, (n0, 1))
    h1 = np.repeat(a0, n1, axis=0)[:, None, :]
    # score[i, j]: best path ending with (x_{t-1}, x_t) = (A_{t-1}[i], A_t[j])
    score = (s0[:, None] + _step(model, 1, x1, h1).reshape(n0, n1))
    back = []
    for t in range(2, T):
        pa, pb, cur = grids[t - 2], grids[t - 1], grids[t]
        ni, nj, nl = pa.shape[0], pb.shape[0], cur.shape[0]
        hist = np.stack([
            np.repeat(pa, nj * nl, axis=0),
            np.tile(np.repeat(pb, nl, axis=0), (ni, 1)),
        ], axis=1)
        x = np.tile(cur, (ni * nj, 1))
        trans = _step(model, t, x, hist).reshape(ni, nj, nl)
        total = score[:, :, None] + trans
        arg = np.argmax(total, axis=0)  # (nj, nl)
        back.append(arg)
        score = np.take_along_axis(total, arg[None], axis=0)[0]
    flat = int(np.argmax(score))
    j, l = divmod(flat, score.shape[1])
    idx = [l, j]
    for arg in reversed(back):
        i = int(arg[j, l])
        idx.append(i)
        j, l = i, j
    idx.reverse()
    return np.stack([grids[t][idx[t]] for t in range(T)])


def viterbi_mlp(model, grids):
    """Maximizer of the log-target over the Cartesian product of the grids.

    Supports models of memory depth one or two with a non-singular transition.
    """
    if model.singular_transition:
        raise UnsupportedModelError("Viterbi search needs a non-singular state evolution")
    if not isinstance(grids, GridSet):
        grids = GridSet(tuple(grids))
    if len(grids) != model.horizon:
        raise InvalidInputError("need one grid per time step")
    if model.horizon == 1 or model.memory_depth == 1:
        if model.horizon == 1:
            s = _step(model, 0, grids[0], grids[0][:, None, :][:, :0])
            return grids[0][int(np.argmax(s))][None].copy()
        return _viterbi_first(model, grids)
    if model.memory_depth == 2:
        return _viterbi_second(model, grids)
    raise UnsupportedModelError(
        f"Viterbi search needs a Markov model of memory one or two, got {model.memory_depth}"
    )


def zero_snap_refine(path, objective):
    """Greedily set coordinates to zero while that strictly lowers ``objective``.

    Sweeps ``t = 1..T`` repeatedly until a full sweep changes nothing.
    """
    x = np.array(path, dtype=float)
    flat = x.reshape(x.shape[0], -1)

    def f():
        return float(np.asarray(objective(x)).reshape(-1)[0])

    best = f()
    changed = True
    while changed:
        changed = False
        for t in range(flat.shape[0]):
            if not np.any(flat[t]):
                continue
            keep = flat[t].copy()
            flat[t] = 0.0
            value = f()
            if value < best:
                best, changed = value, True
            else:
                flat[t] = keep
    return x


__all__ = ["GridSet", "grids_from_ensemble", "viterbi_mlp", "zero_snap_refine"]
