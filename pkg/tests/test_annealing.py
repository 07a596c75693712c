import numpy as np
import pytest
from scipy import stats
from scipy.integrate import quad

from anneal_smc import (
    AnnealOptions,
    DegenerateEnsembleError,
    InvalidInputError,
    ResamplePolicy,
    SingularFitError,
    UnsupportedModelError,
    WeightedEnsemble,
    annealed_smc,
    convergence_check,
    convergence_iteration,
    geometric_schedule,
    post_mcmc_blocked_gibbs,
    post_mcmc_mh,
    smc_run,
)
from anneal_smc.annealing import (
    TRACE_FIELDS,
    AnnealRecord,
    AnnealTrace,
    InverseKappaScale,
    TemperatureSchedule,
    calibrate_mh_scale,
    parse_post_mcmc,
)
from anneal_smc.oracles import kalman_smoother_mlp, scalar_kalman_smoother
from anneal_smc.problems import SplineProblem, build_linear_gaussian_model, build_spline_model

# --- schedule and convergence ----------------------------------------------------


def test_geometric_schedule_examples():
    assert geometric_schedule(4, 1.5, 2).kappas == pytest.approx((4, 6, 9))
    assert geometric_schedule(1, 2, 3).kappas == pytest.approx((1, 2, 4, 8))
    assert geometric_schedule(10, 1.3, 40)[40] == pytest.approx(10 * 1.3**40)
    assert geometric_schedule(10, 1.3, 40)[40] == pytest.approx(3.6e5, rel=0.01)


@pytest.mark.parametrize("ratio", [1.0, 0.5, np.nan])
def test_geometric_schedule_rejects_ratio(ratio):
    with pytest.raises(InvalidInputError):
        geometric_schedule(1.0, ratio, 3)


def test_schedule_must_increase():
    with pytest.raises(InvalidInputError):
        TemperatureSchedule((1.0, 1.0))
    assert TemperatureSchedule((1.0, 3.0)).K == 1


def test_convergence_check_examples():
    assert not convergence_check([5.0, 4.0, 3.0, 2.0])
    assert convergence_check([1.0, 1.0, 1.0])
    assert not convergence_check([1.0, 1.0])
    trace = [100.0, 90.0, 90.0 + 1e-9, 90.0]
    assert convergence_check(trace, tol=1e-6, patience=2)
    assert convergence_iteration(trace) == 3


def test_convergence_on_records_uses_best_of_mean_and_map():
    recs = AnnealTrace(AnnealRecord(k, 1.0, v, v + 1, 1.0, 0.0) for k, v in enumerate([3, 2, 2, 2]))
    assert convergence_iteration(recs) == 3
    assert isinstance(recs[:2], AnnealTrace)
    np.testing.assert_array_equal(recs.best_so_far(), [3, 2, 2, 2])


def test_trace_fields():
    assert TRACE_FIELDS == ("iteration", "kappa", "obj_mean_path", "obj_map_path", "ess", "wall_ms")


def test_parse_post_mcmc():
    assert parse_post_mcmc("none") == ("none", 0)
    assert parse_post_mcmc("mh") == ("mh", 10)
    assert parse_post_mcmc("mh:3") == ("mh", 3)
    assert parse_post_mcmc("gibbs") == ("gibbs", 1)
    assert parse_post_mcmc(("mh", 2)) == ("mh", 2)
    for bad in ("hmc", "mh:x", "mh:-1"):
        with pytest.raises(InvalidInputError):
            parse_post_mcmc(bad)


# --- MH ----------------------------------------------------------------------------

def _toy(T=3, kappa=1.0, seed=0):
    y = np.random.default_rng(seed).standard_normal(T)
    return build_linear_gaussian_model(y, phi=0.7, q=0.6, r=0.4, m0=0.0, v0=1.0, kappa=kappa)


def _toy_posterior_draws(model, n, rng):
    # exact joint posterior: Gaussian with precision from the quadratic objective
    T = model.horizon
    Hq = np.zeros((T, T))
    Hq[0, 0] += 1 / model.v0
    for t in range(1, T):
        a = np.zeros(T)
        a[t], a[t - 1] = 1.0, -model.phi
        Hq += np.outer(a, a) / model.q
    Hq += np.eye(T) / model.r
    b = model.y / model.r
    b[0] += model.m0 / model.v0
    prec = model.kappa * Hq
    mean = np.linalg.solve(Hq, b)
    L = np.linalg.cholesky(np.linalg.inv(prec))
    return mean + rng.standard_normal((n, T)) @ L.T


def test_mh_zero_steps_is_identity(rng):
    model = _toy()
    ens = WeightedEnsemble(rng.standard_normal((20, 3, 1)), np.zeros(20), 1.0)
    out = post_mcmc_mh(ens, model, 0, random_state=rng)
    np.testing.assert_array_equal(out.paths, ens.paths)


def test_mh_tiny_step_accepts_almost_everything(rng):
    model = _toy()
    ens = WeightedEnsemble(rng.standard_normal((200, 3, 1)), np.zeros(200), 1.0)
    out, rate = post_mcmc_mh(ens, model, 1, 1e-16, rng, return_acceptance=True)
    assert rate > 0.99
    np.testing.assert_allclose(out.paths, ens.paths, atol=1e-6)


def test_mh_acceptance_matches_ratio():
    model = build_linear_gaussian_model([0.3], m0=0.0, v0=1.0, r=1.0)
    x0, tau2 = 1.2, 0.8
    n = 100_000
    ens = WeightedEnsemble(np.full((n, 1, 1), x0), np.zeros(n), 1.0)
    _, rate = post_mcmc_mh(ens, model, 1, tau2, np.random.default_rng(1), return_acceptance=True)

    def integrand(z):
        x = np.array([[[x0]], [[x0 + np.sqrt(tau2) * z]]])
        lt = model.log_target(x)
        return stats.norm.pdf(z) * min(1.0, np.exp(lt[1] - lt[0]))

    expected = quad(integrand, -12, 12, limit=200)[0]
    assert abs(rate - expected) <= 3 * np.sqrt(expected * (1 - expected) / n)


def test_mh_keeps_posterior_invariant():
    rng = np.random.default_rng(5)
    model = _toy(T=4, kappa=2.0)
    draws = _toy_posterior_draws(model, 20_000, rng)
    ens = WeightedEnsemble(draws[:, :, None], np.zeros(len(draws)), model.kappa)
    out = post_mcmc_mh(ens, model, 3, InverseKappaScale(1.0), rng)
    fresh = _toy_posterior_draws(model, 20_000, rng)
    for t in range(model.horizon):
        assert stats.ks_2samp(out.paths[:, t, 0], fresh[:, t]).pvalue > 0.01


def test_mh_weights_unchanged(rng):
    model = _toy()
    lw = rng.standard_normal(30)
    ens = WeightedEnsemble(rng.standard_normal((30, 3, 1)), lw, 1.0)
    np.testing.assert_array_equal(post_mcmc_mh(ens, model, 2, random_state=rng).log_weights, lw)


def test_mh_rejects_singular_model(rng):
    model = build_spline_model(np.arange(5.0), 1.0, 1.0)
    ens = WeightedEnsemble(np.zeros((3, 5, 3)), np.zeros(3), 1.0)
    with pytest.raises(UnsupportedModelError):
        post_mcmc_mh(ens, model, 1, random_state=rng)


def test_site_target_hook_matches_full_evaluation(rng):
    from conftest import random_paths, small_models

    for name in ("lasso", "l1trend"):
        model = small_models()[name]
        p = random_paths(model, 15, rng)
        for t in range(model.horizon):
            q = p.copy()
            q[:, t] += rng.standard_normal((15, 1))
            full = model.log_target(q) - model.log_target(p)
            local = model.site_log_target(q, t) - model.site_log_target(p, t)
            np.testing.assert_allclose(local, full, rtol=1e-9, atol=1e-9)


def test_calibrated_scale_hits_target_acceptance(rng):
    model = _toy(T=5, kappa=3.0)
    draws = _toy_posterior_draws(model, 2000, rng)
    ens = WeightedEnsemble(draws[:, :, None], np.zeros(2000), model.kappa)
    rule = calibrate_mh_scale(ens, model, 0.4, rng)
    _, rate = post_mcmc_mh(ens, model, 1, rule, rng, return_acceptance=True)
    assert rate == pytest.approx(0.4, abs=0.05)


# --- blocked Gibbs -------------------------------------------------------------------

def _spline_exact_draws(model, n, rng):
    H, h = model.quadratic_form()
    mean = np.linalg.solve(H, h)
    L = np.linalg.cholesky(np.linalg.inv(2 * model.kappa * H))
    return model.from_theta(mean + rng.standard_normal((n, mean.size)) @ L.T)


def test_full_width_block_is_exact_posterior_draw():
    rng = np.random.default_rng(2)
    y = np.array([0.2, 0.9, 0.4])
    model = build_spline_model(y, 2.0, 3.0)
    dim = model.horizon + 1
    ens = WeightedEnsemble(np.zeros((10_000, 3, 3)), np.zeros(10_000), model.kappa)
    out = post_mcmc_blocked_gibbs(ens, model, rng, block_size=dim)
    mode = kalman_smoother_mlp(SplineProblem(y, 2.0))
    H, _ = model.quadratic_form()
    theta_cov = np.linalg.inv(2 * model.kappa * H)
    basis = model.from_theta(np.eye(dim))
    for t in range(3):
        sd = np.sqrt(basis[:, t, 0] @ theta_cov @ basis[:, t, 0])
        mean = out.paths[:, t, 0].mean()
        assert abs(mean - mode[t, 0]) <= 3 * sd / np.sqrt(10_000)


def test_block_conditional_variance_ignores_data():
    a = build_spline_model(np.array([0.0, 1.0, 2.0, 0.5]), 3.0, 2.0)
    b = build_spline_model(np.array([5.0, -1.0, 0.0, 9.0]), 3.0, 2.0)
    np.testing.assert_allclose(a.quadratic_form()[0], b.quadratic_form()[0])


def test_gibbs_sweep_preserves_equilibrium():
    rng = np.random.default_rng(9)
    model = build_spline_model(np.sin(np.arange(10) / 2), 5.0, 4.0)
    start = _spline_exact_draws(model, 5000, rng)
    ens = WeightedEnsemble(start, np.zeros(5000), model.kappa)
    out = post_mcmc_blocked_gibbs(ens, model, rng)
    fresh = _spline_exact_draws(model, 5000, rng)
    p = stats.ks_2samp(model.objective(out.paths), model.objective(fresh)).pvalue
    assert p > 0.05


def test_gibbs_rejects_non_spline(rng):
    ens = WeightedEnsemble(np.zeros((3, 3, 1)), np.zeros(3), 1.0)
    with pytest.raises(UnsupportedModelError):
        post_mcmc_blocked_gibbs(ens, _toy(), rng)


# --- driver ----------------------------------------------------------------------------

def test_k_zero_equals_plain_smc():
    model = _toy(T=4)
    res = annealed_smc(model, geometric_schedule(1.0, 2.0, 0), 300, 300, random_state=4)
    ref = smc_run(model, model.native_proposal(), 300, ResamplePolicy.ess_below(0.3), 4,
                  rng_stamp=0)
    np.testing.assert_array_equal(res.ensemble.paths, ref.paths)
    np.testing.assert_array_equal(res.ensemble.log_weights, ref.log_weights)
    assert len(res.trace) == 1


def test_driver_trace_sink_and_snapshots():
    model = _toy(T=4)
    seen = []
    opts = AnnealOptions(sink=seen.append, snapshots=(0, 2), record_wall_time=False)
    res = annealed_smc(model, geometric_schedule(1.0, 2.0, 3), 200, 200, opts, 0)
    assert [r.iteration for r in res.trace] == [0, 1, 2, 3] == [r.iteration for r in seen]
    assert all(r.wall_ms == 0.0 for r in res.trace)
    assert set(res.snapshots) == {0, 2}
    ens, trace, best = res
    assert best.shape == (4, 1)
    assert res.best_objective == pytest.approx(min(min(r.obj_mean_path, r.obj_map_path) for r in trace))


def test_driver_is_seed_deterministic():
    model = _toy(T=5)
    opts = AnnealOptions(record_wall_time=False, post_mcmc="mh:2")
    a = annealed_smc(model, geometric_schedule(1.0, 1.5, 4), 200, 200, opts, 3)
    b = annealed_smc(model, geometric_schedule(1.0, 1.5, 4), 200, 200, opts, 3)
    assert list(a.trace) == list(b.trace)
    np.testing.assert_array_equal(a.ensemble.paths, b.ensemble.paths)


def test_driver_concentrates_on_toy_optimum():
    model = _toy(T=5)
    res = annealed_smc(model, geometric_schedule(1.0, 2.0, 12), 500, 500,
                       AnnealOptions(post_mcmc="none"), 1)
    ms, *_ = scalar_kalman_smoother(model.y, model.phi, model.q, model.r, model.m0, model.v0)
    np.testing.assert_allclose(res.best_path[:, 0], ms, atol=1e-3)


def test_driver_validates_inputs():
    model = _toy()
    with pytest.raises(InvalidInputError):
        annealed_smc(model, geometric_schedule(2.0, 2.0, 2), 10, 10)
    with pytest.raises(InvalidInputError):
        annealed_smc(model, geometric_schedule(1.0, 2.0, 2), 1, 10)


def test_fit_failure_reports_iteration():
    model = _toy(T=3)
    opts = AnnealOptions(jitter=0.0, initial_policy=ResamplePolicy.ess_below(1.0))
    for seed in range(50):
        try:
            annealed_smc(model, geometric_schedule(1.0, 2.0, 2), 2, 2, opts, seed)
        except (SingularFitError, DegenerateEnsembleError) as exc:
            assert exc.iteration >= 1
            assert str(exc).startswith(f"iteration {exc.iteration}")
            return
    pytest.fail("no seed produced a singular fit")
