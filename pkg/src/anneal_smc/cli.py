"""``anneal-smc`` command line: generate or load a dataset, run annealed SMC,
compare with a reference solver and write plot-ready outputs.

Exit codes: 0 on success, 1 when a run fails, 2 for a bad configuration.
"""

import argparse
import csv
import json
import os
import sys
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .annealing import (
    TRACE_FIELDS,
    AnnealOptions,
    annealed_smc,
    geometric_schedule,
    parse_post_mcmc,
)
from .exceptions import AnnealSMCError, InvalidInputError
from .oracles import (
    kalman_smoother_mlp,
    lasso_coordinate_descent,
    local_search_baseline,
    scalar_kalman_smoother,
)
from .problems import (
    TradingProblem,
    backward_pilot_scores,
    build_linear_gaussian_model,
    generate_dataset,
    load_dataset,
    save_dataset,
)
from .problems.datasets import DEFAULTS
from .smc import ResamplePolicy, check_random_state, smc_run, weighted_mean_path
from .viterbi import grids_from_ensemble, viterbi_mlp, zero_snap_refine

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

PROBLEMS = ("spline", "lasso", "trading", "l1trend")
ENV_OUT = "ANNEAL_SMC_OUT"

# run settings used for each benchmark unless overridden
RUN_DEFAULTS = {
    "spline": dict(kappa0=4.0, ratio=1.5, iters=16, particles=1000, particles0=1000,
                   ess_frac=0.3, post_mcmc="gibbs", pilot=0),
    "lasso": dict(kappa0=0.05, ratio=1.5, iters=30, particles=2000, particles0=5000,
                  ess_frac=0.3, post_mcmc="mh:10", pilot=0, zero_snap=True),
    "trading": dict(kappa0=1.0, ratio=2.0, iters=20, particles=1000, particles0=1000,
                    ess_frac=0.3, post_mcmc="none", pilot=300),
    "l1trend": dict(kappa0=10.0, ratio=1.3, iters=40, particles=2000, particles0=5000,
                    ess_frac=0.1, post_mcmc="mh:10", pilot=0),
}

# flag name -> dataset parameter name
DATA_FLAGS = {
    "lam": "lam", "T": "T", "n": "n", "p": "p", "noise_sd": "noise_sd",
    "sigma_x2": "sigma_x2", "sigma_y2": "sigma_y2", "alpha": "alpha",
}


@dataclass
class ExperimentConfig:
    problem: str
    kappa0: float
    ratio: float
    iters: int
    particles: int
    particles0: int
    ess_frac: float
    post_mcmc: str
    pilot: int = 0
    seed: int = 0
    out: str = "."
    threads: object = None
    data: object = None
    data_params: dict = field(default_factory=dict)
    constrained: bool = True
    snapshots: tuple = ()
    viterbi: int = 0
    zero_snap: bool = False
    oracle: bool = True

    def validate(self):
        if self.problem not in PROBLEMS:
            raise InvalidInputError(f"unknown problem {self.problem!r}")
        if not (np.isfinite(self.kappa0) and self.kappa0 > 0):
            raise InvalidInputError("kappa0 must be positive")
        if not (np.isfinite(self.ratio) and self.ratio > 1):
            raise InvalidInputError("ratio must exceed 1")
        for name in ("iters", "particles", "particles0"):
            if int(getattr(self, name)) != getattr(self, name) or getattr(self, name) < 1:
                raise InvalidInputError(f"{name} must be a positive integer")
        if self.particles < 2 or self.particles0 < 2:
            raise InvalidInputError("particle counts must be at least 2")
        if not 0 < self.ess_frac <= 1:
            raise InvalidInputError("ess-frac must lie in (0, 1]")
        if self.pilot < 0 or self.pilot == 1:
            raise InvalidInputError("pilot must be 0 (off) or at least 2")
        if self.threads is not None and self.threads < 1:
            raise InvalidInputError("threads must be positive")
        if self.viterbi < 0:
            raise InvalidInputError("viterbi grid size must be non-negative")
        if any(s < 0 or s > self.iters for s in self.snapshots):
            raise InvalidInputError(f"snapshot iterations must lie in 0..{self.iters}")
        parse_post_mcmc(self.post_mcmc)
        if self.data is not None and not Path(self.data).is_file():
            raise InvalidInputError(f"data file {self.data} not found")
        if self.problem != "trading" and not self.constrained:
            raise InvalidInputError("--unconstrained only applies to trading")

    @property
    def deterministic(self):
        return self.threads == 1


def _add_run_flags(p):
    p.add_argument("--config", help="TOML file with settings (flags take precedence)")
    p.add_argument("--kappa0", type=float)
    p.add_argument("--ratio", type=float)
    p.add_argument("--iters", type=int, help="number of annealing iterations K")
    p.add_argument("--particles", type=int, help="particles m for iterations 1..K")
    p.add_argument("--particles0", type=int, help="particles m0 for iteration 0")
    p.add_argument("--ess-frac", type=float, help="resampling threshold in iteration 0")
    p.add_argument("--post-mcmc", help="none, gibbs, mh or mh:N")
    p.add_argument("--pilot", type=int, help="backward pilot particles (0 disables)")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help=f"output directory (default ${ENV_OUT} or .)")
    p.add_argument("--threads", type=int,
                   help="1 selects deterministic mode (wall_ms written as 0)")
    p.add_argument("--data", help="dataset CSV to load instead of generating one")
    p.add_argument("--snapshots", help="comma separated iterations to save ensembles at")
    p.add_argument("--no-oracle", dest="oracle", action="store_false", default=None,
                   help="skip the reference solver")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="anneal-smc",
        description="Optimization by annealed sequential Monte Carlo on emulated state space models.",
    )
    sub = parser.add_subparsers(dest="command", metavar="{spline,lasso,trading,l1trend,toy-check}")
    sub.required = True

    p = sub.add_parser("spline", help="cubic smoothing spline")
    _add_run_flags(p)
    p.add_argument("--lambda", dest="lam", type=float)
    p.add_argument("--T", dest="T", type=int)
    p.add_argument("--noise-sd", type=float)

    p = sub.add_parser("lasso", help="LASSO regression")
    _add_run_flags(p)
    p.add_argument("--lambda", dest="lam", type=float)
    p.add_argument("--n", type=int)
    p.add_argument("--p", type=int)
    p.add_argument("--noise-sd", type=float)
    p.add_argument("--no-zero-snap", dest="zero_snap", action="store_false", default=None)

    p = sub.add_parser("trading", help="cost-aware trading path")
    _add_run_flags(p)
    p.add_argument("--T", dest="T", type=int)
    p.add_argument("--sigma-x2", type=float)
    p.add_argument("--sigma-y2", type=float)
    p.add_argument("--alpha", type=float)
    p.add_argument("--unconstrained", dest="constrained", action="store_false", default=None)
    p.add_argument("--viterbi", type=int, help="refine by Viterbi over the Q heaviest values")

    p = sub.add_parser("l1trend", help="l1 trend filtering")
    _add_run_flags(p)
    p.add_argument("--lambda", dest="lam", type=float)
    p.add_argument("--T", dest="T", type=int)
    p.add_argument("--noise-sd", type=float)
    p.add_argument("--viterbi", type=int, help="refine by Viterbi over the Q heaviest values")

    p = sub.add_parser("toy-check", help="SMC against the Kalman smoother on a Gaussian toy")
    p.add_argument("--T", dest="T", type=int, default=2)
    p.add_argument("--particles", type=int, default=10_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help=f"output directory (default ${ENV_OUT} or .)")
    return parser


def _read_toml(path):
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except OSError as exc:
        raise InvalidInputError(f"cannot read config {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise InvalidInputError(f"invalid TOML in {path}: {exc}") from exc
    out = {}
    for key, value in raw.items():
        key = key.replace("-", "_")
        out["lam" if key == "lambda" else key] = value
    return out


def config_from_args(args):
    """Merge built-in defaults, the TOML file and explicit flags (in that order)."""
    problem = args.command
    merged = dict(RUN_DEFAULTS[problem])
    if args.config:
        toml = _read_toml(args.config)
        if toml.get("problem", problem) != problem:
            raise InvalidInputError(f"config is for {toml['problem']!r}, not {problem!r}")
        toml.pop("problem", None)
        merged.update(toml)
    merged.update({k: v for k, v in vars(args).items()
                   if v is not None and k not in ("command", "config")})
    data_params = {DATA_FLAGS[k]: merged.pop(k) for k in list(merged) if k in DATA_FLAGS}
    unknown = set(data_params) - set(DEFAULTS[problem])
    if unknown:
        raise InvalidInputError(f"{problem} does not take {sorted(unknown)}")
    snaps = merged.pop("snapshots", ())
    if isinstance(snaps, str):
        try:
            snaps = tuple(int(s) for s in snaps.split(",") if s.strip())
        except ValueError as exc:
            raise InvalidInputError("snapshots must be comma separated integers") from exc
    if merged.get("out") is None:
        merged["out"] = os.environ.get(ENV_OUT, ".")
    names = {f.name for f in fields(ExperimentConfig)}
    extra = set(merged) - names
    if extra:
        raise InvalidInputError(f"unknown settings: {sorted(extra)}")
    try:
        cfg = ExperimentConfig(problem=problem, data_params=data_params,
                               snapshots=tuple(sorted(set(snaps))), **merged)
    except TypeError as exc:
        raise InvalidInputError(str(exc)) from exc
    cfg.validate()
    return cfg


# --- running ------------------------------------------------------------------

def load_problem(cfg):
    if cfg.data is not None:
        problem = load_dataset(cfg.problem, cfg.data, cfg.data_params)
    else:
        problem = generate_dataset(cfg.problem, cfg.data_params, cfg.seed)
    if isinstance(problem, TradingProblem) and not cfg.constrained:
        problem = TradingProblem(problem.y, problem.sigma_x2, problem.sigma_y2,
                                 problem.alpha, constrained=False)
    return problem


def run_oracle(problem_id, problem):
    """Reference solution ``(name, objective, x)`` in the problem's own variables."""
    if problem_id == "spline":
        x = kalman_smoother_mlp(problem)
        return "kalman_smoother", float(problem.objective(x)), x
    if problem_id == "lasso":
        x = lasso_coordinate_descent(problem.Y, problem.Z, problem.lam)
        return "coordinate_descent", float(problem.objective(x)), x
    if problem_id == "trading":
        x0 = problem.y[1:-1] if problem.constrained else problem.y[1:]
        x = local_search_baseline(problem.objective, x0)
        return "local_search", float(problem.objective(x)), x
    x = local_search_baseline(problem.objective, problem.y)
    return "local_search", float(problem.objective(x)), x


def _variables(problem_id, model, path):
    """Map a model path to the problem's decision variables."""
    if problem_id == "spline":
        return path
    if problem_id == "trading":
        return model.full_paths(path[None])[0]
    return path[:, 0]


def run_experiment(cfg, log=print):
    """Run one configured experiment and write its artifacts; returns a summary dict."""
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    started = time.perf_counter()
    problem = load_problem(cfg)
    save_dataset(problem, out / "dataset.csv")
    (out / "config.json").write_text(json.dumps(_config_snapshot(cfg), indent=2, sort_keys=True) + "\n")

    rng = check_random_state(cfg.seed)
    model = problem.build_model(cfg.kappa0)
    priority = backward_pilot_scores(model, cfg.pilot, rng) if cfg.pilot else None
    timings = []
    tick = time.perf_counter()

    def sink(rec):
        nonlocal tick
        now = time.perf_counter()
        timings.append((rec.iteration, (now - tick) * 1e3))
        tick = now
        log(f"iter {rec.iteration:3d}  kappa {rec.kappa:.6g}  mean {rec.obj_mean_path:.8g}  "
            f"map {rec.obj_map_path:.8g}  ess {rec.ess:.1f}")

    options = AnnealOptions(
        initial_policy=ResamplePolicy.ess_below(cfg.ess_frac),
        post_mcmc=cfg.post_mcmc,
        priority=priority,
        snapshots=cfg.snapshots,
        record_wall_time=not cfg.deterministic,
        sink=sink,
    )
    schedule = geometric_schedule(cfg.kappa0, cfg.ratio, cfg.iters)
    result = annealed_smc(model, schedule, cfg.particles0, cfg.particles, options, rng)
    _write_trace(out / "trace.csv", result.trace)
    if cfg.deterministic:
        with (out / "timings.csv").open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["iteration", "wall_ms"])
            writer.writerows((k, f"{ms:.3f}") for k, ms in timings)
    for k, ens in result.snapshots.items():
        _write_ensemble(out / f"ensemble_{k}.csv", ens)

    best_path = result.best_path
    summary = {
        "problem": cfg.problem,
        "objective": float(result.best_objective),
        "best_iteration": int(result.best_iteration),
        "converged_at": result.converged_at,
        "final_mean_objective": float(result.trace[-1].obj_mean_path),
        "final_map_objective": float(result.trace[-1].obj_map_path),
    }
    if cfg.viterbi and cfg.problem in ("trading", "l1trend"):
        grids = grids_from_ensemble(result.ensemble, top_q=cfg.viterbi)
        cand = viterbi_mlp(model, grids)
        value = float(model.objective(cand[None])[0])
        summary["viterbi_objective"] = value
        if value < summary["objective"]:
            best_path, summary["objective"] = cand, value
    x = _variables(cfg.problem, model, best_path)
    if cfg.problem == "lasso" and cfg.zero_snap:
        summary["unrefined_objective"] = summary["objective"]
        # snap both the best path and the final weighted mean; keep the better
        candidates = [zero_snap_refine(x, problem.objective),
                      zero_snap_refine(weighted_mean_path(result.ensemble)[:, 0],
                                       problem.objective)]
        values = [float(problem.objective(c)) for c in candidates]
        summary["final_mean_refined_objective"] = values[1]
        i = int(np.argmin(values))
        x, summary["objective"] = candidates[i], values[i]
    summary["best_path"] = np.asarray(x).tolist()
    if cfg.oracle:
        name, value, _ = run_oracle(cfg.problem, problem)
        summary["oracle"] = {"name": name, "objective": value}
        summary["oracle_gap"] = (summary["objective"] - value) / max(abs(value), 1e-300)
    elapsed = time.perf_counter() - started
    if not cfg.deterministic:
        summary["elapsed_s"] = elapsed
    (out / "final_path.json").write_text(json.dumps(summary, indent=2) + "\n")
    log(f"best objective {summary['objective']:.10g}"
        + (f"  oracle {summary['oracle']['objective']:.10g}" if cfg.oracle else ""))
    return summary


def _config_snapshot(cfg):
    snap = asdict(cfg)
    snap["snapshots"] = list(cfg.snapshots)
    snap["defaults"] = DEFAULTS[cfg.problem]
    return snap


def _write_trace(path, trace):
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(TRACE_FIELDS)
        for rec in trace:
            writer.writerow([repr(getattr(rec, name)) if isinstance(getattr(rec, name), float)
                             else getattr(rec, name) for name in TRACE_FIELDS])


def _write_ensemble(path, ens):
    n, T, d = ens.paths.shape
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["log_weight"] + [f"x{t + 1}_{j + 1}" for t in range(T) for j in range(d)])
        for lw, row in zip(ens.log_weights, ens.paths.reshape(n, -1)):
            writer.writerow([repr(float(lw))] + [repr(float(v)) for v in row])


def toy_check(T=2, particles=10_000, seed=0, out=None, log=print):
    """Compare SMC posterior means with the Kalman smoother on a random-walk toy.

    Passes when every ``|z| = |mean_smc - mean_ks| / se`` is at most 3, with
    ``se = sqrt(var_ks / ess)`` from the final effective sample size.
    """
    if T < 1 or particles < 2:
        raise InvalidInputError("toy-check needs T >= 1 and at least 2 particles")
    rng = check_random_state(seed)
    y = np.cumsum(rng.standard_normal(T))
    model = build_linear_gaussian_model(y, phi=1.0, q=1.0, r=1.0, m0=0.0, v0=1.0)
    ens = smc_run(model, model.native_proposal(), particles, ResamplePolicy.ess_below(0.5), rng)
    ms, vs, _, _ = scalar_kalman_smoother(y, 1.0, 1.0, 1.0, 0.0, 1.0)
    w = ens.weights
    mean = w @ ens.paths[:, :, 0]
    ess_val = 1.0 / np.sum(w**2)
    z = (mean - ms) / np.sqrt(vs / ess_val)
    report = {"T": T, "particles": particles, "seed": seed, "ess": float(ess_val),
              "smc_mean": mean.tolist(), "kalman_mean": ms.tolist(), "z": z.tolist(),
              "passed": bool(np.all(np.abs(z) <= 3))}
    for t in range(T):
        log(f"t={t + 1}  smc {mean[t]:+.5f}  kalman {ms[t]:+.5f}  z {z[t]:+.2f}")
    log("toy-check " + ("PASS" if report["passed"] else "FAIL"))
    if out is not None:
        Path(out).mkdir(parents=True, exist_ok=True)
        (Path(out) / "toy_check.json").write_text(json.dumps(report, indent=2) + "\n")
    return report


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "toy-check":
            out = args.out if args.out is not None else os.environ.get(ENV_OUT)
            cfg = None
        else:
            cfg = config_from_args(args)
    except InvalidInputError as exc:
        parser.error(str(exc))
    try:
        if cfg is None:
            report = toy_check(args.T, args.particles, args.seed, out)
            return 0 if report["passed"] else 1
        run_experiment(cfg)
    except InvalidInputError as exc:
        print(f"anneal-smc: error: {exc}", file=sys.stderr)
        return 2
    except (AnnealSMCError, FloatingPointError) as exc:
        print(f"anneal-smc: run failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
