import numpy as np
import pytest
from scipy.integrate import quad

from anneal_smc import InvalidInputError, ResamplePolicy, UnsupportedModelError, smc_run
from anneal_smc.oracles import scalar_kalman_smoother, spline_quadratic_solve
from anneal_smc.problems import (
    L1TrendProblem,
    LassoProblem,
    SplineProblem,
    TradingProblem,
    backward_pilot_scores,
    build_l1trend_model,
    build_lasso_model,
    build_linear_gaussian_model,
    build_spline_model,
    build_trading_model,
    generate_dataset,
    l1trend_objective,
    load_dataset,
    objective_value,
    piecewise_trend,
    save_dataset,
    trading_ideal_path,
)
from anneal_smc.problems.lasso import lasso_sequential_objective
from anneal_smc.problems.spline import R, paths_from_theta, theta_from_paths

# --- spline ---------------------------------------------------------------------


def test_spline_variances():
    model = build_spline_model(np.zeros(5), 10.0, 4.0)
    assert model.sigma_b2 == pytest.approx(3 * (2 - np.sqrt(3)) / 160)
    assert model.sigma_b2 == pytest.approx(5.024e-3, rel=1e-3)
    assert model.sigma_y2 == pytest.approx(0.125)


def test_spline_transition_is_linear():
    model = build_spline_model(np.zeros(5), 10.0, 4.0)
    x = model.complete_state(1, np.zeros((1, 1)), np.zeros((1, 1, 3)))
    np.testing.assert_array_equal(x, 0.0)


def test_spline_theta_round_trip(rng):
    theta = rng.standard_normal((4, 7))
    np.testing.assert_allclose(theta_from_paths(paths_from_theta(theta)), theta)


def test_spline_innovation_density_centred_on_decay(rng):
    model = build_spline_model(np.zeros(5), 2.0, 1.0)
    hist = rng.standard_normal((3, 1, 3))
    u = -R * hist[:, -1, 2:3]
    lp = model.state_logpdf(1, u, hist)
    assert np.all(lp >= model.state_logpdf(1, u + 0.1, hist))


def test_spline_short_series_rejected():
    with pytest.raises(InvalidInputError):
        build_spline_model([1.0, 2.0], 1.0, 1.0)


def test_spline_native_smc_beats_raw_data(rng):
    problem = generate_dataset("spline", random_state=0)
    model = problem.build_model(4.0)
    ens = smc_run(model, model.native_proposal(), 1000, ResamplePolicy.ess_below(0.3), rng)
    mean = ens.weights @ ens.paths.reshape(1000, -1)
    f_mean = problem.objective(mean.reshape(-1, 3))
    # feasible path through the observations: the nearly unpenalized spline
    raw = spline_quadratic_solve(problem.y, 1e-8)
    np.testing.assert_allclose(raw[:, 0], problem.y, atol=1e-4)
    assert np.isfinite(f_mean) and f_mean < problem.objective(raw)


# --- LASSO ------------------------------------------------------------------------

def test_lasso_sequential_equals_direct(rng):
    prob = generate_dataset("lasso", random_state=rng)
    beta = rng.standard_normal(prob.Z.shape[1])
    assert lasso_sequential_objective(prob.Y, prob.Z, 5.0, beta) == pytest.approx(
        prob.objective(beta), rel=1e-10)


def test_lasso_partial_residual_recursion(rng):
    prob = generate_dataset("lasso", random_state=rng)
    model = prob.build_model(1.0)
    beta = rng.standard_normal((1, prob.Z.shape[1], 1))
    eps = prob.Y.copy()
    for t in range(prob.Z.shape[1]):
        assert model.inner_residual(t, beta[:, :t])[0] == pytest.approx(eps @ prob.Z[:, t], abs=1e-10)
        eps = eps - beta[0, t, 0] * prob.Z[:, t]
    np.testing.assert_allclose(eps, prob.Y - prob.Z @ beta[0, :, 0], atol=1e-10)


def test_lasso_zero_column_named():
    Z = np.ones((4, 3))
    Z[:, 1] = 0
    with pytest.raises(InvalidInputError, match="t=2"):
        LassoProblem(np.ones(4), Z)


def test_lasso_lambda_validation():
    with pytest.raises(InvalidInputError):
        build_lasso_model(np.ones(3), np.eye(3), -1.0, 1.0)


# --- trading ----------------------------------------------------------------------

def test_trading_ideal_path_first_value():
    y = trading_ideal_path(20)
    assert y.size == 21
    assert y[0] == pytest.approx(25 * np.exp(-1 / 8) - 40 * np.exp(-1 / 4))
    assert y[0] == pytest.approx(-9.0896, abs=1e-4)


def test_trading_kernel_zero_trade_exponent():
    model = build_trading_model(trading_ideal_path(), 0.25, 1.0, 0.5, 1.0)
    k = model.kernel
    assert k.logpdf(np.array([0.3]), np.array([0.3]))[0] + k.log_z == pytest.approx(-0.5)


@pytest.mark.parametrize("kappa", [0.5, 1.0, 16.0])
def test_trading_kernel_normalizes(kappa):
    k = build_trading_model(trading_ideal_path(), 0.25, 1.0, 0.5, kappa).kernel
    total = quad(lambda x: np.exp(k.logpdf(np.array([x]), np.array([0.2]))[0]), -np.inf, np.inf,
                 points=None)[0]
    assert total == pytest.approx(1.0, abs=1e-8)


def test_trading_exact_proposal_normalizes_and_samples(rng):
    k = build_trading_model(trading_ideal_path(), 0.25, 1.0, 0.5, 2.0).kernel
    anchor, y = np.array([0.4]), -1.0
    total = quad(lambda x: np.exp(k.product_logpdf(np.array([x]), anchor, y)[0]), -20, 20,
                 points=[0.4], limit=200)[0]
    assert total == pytest.approx(1.0, abs=1e-8)
    draws = k.sample(np.full(100_000, 0.4), y, rng)
    mean = quad(lambda x: x * np.exp(k.product_logpdf(np.array([x]), anchor, y)[0]), -20, 20,
                points=[0.4], limit=200)[0]
    assert draws.mean() == pytest.approx(mean, abs=0.01)


def test_trading_log_mass_matches_quadrature():
    k = build_trading_model(trading_ideal_path(), 0.25, 1.0, 0.5, 1.0).kernel
    anchor, y = np.array([1.0]), -0.5

    def f(x):
        return np.exp(k.logpdf(np.array([x]), anchor)[0]
                      - 0.5 * (y - x) ** 2 / k.v - 0.5 * np.log(2 * np.pi * k.v))

    assert np.log(quad(f, -20, 20, points=[1.0], limit=200)[0]) == pytest.approx(
        k.log_mass(anchor, y)[0], abs=1e-8)


def test_trading_objective_of_tracking_path():
    # x = y inside, pinned ends: only trade costs plus the two boundary gaps
    prob = generate_dataset("trading")
    x = prob.y.copy()
    x[0] = x[-1] = 0.0
    d = np.abs(np.diff(x))
    expected = np.sum((d + 0.5) ** 2) / 0.25
    assert prob.objective(x) == pytest.approx(expected)
    assert prob.objective(x[1:-1]) == pytest.approx(expected)


def test_trading_unconstrained_constant_path():
    y = np.full(21, 2.0)
    prob = TradingProblem(y, constrained=False)
    x = np.full(21, 2.0)
    x[0] = 0.0
    # one trade of size 2, then 19 zero trades at 0.25 / 0.25 = 1 each
    assert prob.objective(x) == pytest.approx((2.5**2 + 19 * 0.25) / 0.25)


def test_trading_problem_dimension_check():
    with pytest.raises(InvalidInputError):
        generate_dataset("trading").objective(np.zeros(7))


# --- l1 trend -------------------------------------------------------------------

def test_l1trend_parameters():
    model = build_l1trend_model(np.zeros(5), 10.0, 10.0)
    assert model.laplace_scale == pytest.approx(0.02)
    assert model.sigma_y2 == pytest.approx(0.1)


def test_l1trend_linear_path_maximizes_state_kernel(rng):
    model = build_l1trend_model(np.zeros(6), 10.0, 1.0)
    hist = np.array([[[1.0], [1.5]]])
    best = model.state_logpdf(2, np.array([[2.0]]), hist)
    for u in (1.9, 2.1, 0.0):
        assert model.state_logpdf(2, np.array([[u]]), hist) < best


def test_l1trend_objective_vanishes_on_exact_line():
    t = np.arange(10.0)
    assert l1trend_objective(0.3 * t + 1, 1e-12, 0.3 * t + 1) == pytest.approx(0.0)


def test_l1trend_short_series_rejected():
    with pytest.raises(InvalidInputError):
        L1TrendProblem([1.0, 2.0])


# --- datasets -------------------------------------------------------------------

def test_spline_generator_zero_noise():
    prob = generate_dataset("spline", {"noise_sd": 0.0})
    assert prob.y[0] == 0.0
    assert prob.y[10] == pytest.approx(np.sin(0.9))


def test_piecewise_trend_values():
    y = piecewise_trend(60)
    assert y[19] == pytest.approx(0.95)
    assert y[0] == 0.0 and y[39] == pytest.approx(0.0) and y[59] == pytest.approx(0.95)


def test_lasso_generator_correlation():
    prob = generate_dataset("lasso", {"n": 100_000, "p": 3}, 0)
    corr = np.corrcoef(prob.Z.T)
    assert np.all(np.abs(corr[np.triu_indices(3, 1)] - 0.4) < 0.01)


def test_generator_is_seeded():
    a = generate_dataset("l1trend", random_state=4)
    b = generate_dataset("l1trend", random_state=4)
    np.testing.assert_array_equal(a.y, b.y)


def test_unknown_problem_and_parameter():
    with pytest.raises(InvalidInputError):
        generate_dataset("knapsack")
    with pytest.raises(InvalidInputError):
        generate_dataset("spline", {"p": 3})


@pytest.mark.parametrize("pid", ["spline", "lasso", "trading", "l1trend"])
def test_dataset_round_trip(pid, tmp_path):
    prob = generate_dataset(pid, random_state=3)
    path = save_dataset(prob, tmp_path / "d.csv")
    back = load_dataset(pid, path)
    if pid == "lasso":
        np.testing.assert_array_equal(back.Y, prob.Y)
        np.testing.assert_array_equal(back.Z, prob.Z)
    else:
        np.testing.assert_array_equal(back.y, prob.y)


def test_objective_value_examples():
    sp = generate_dataset("spline", random_state=0)
    zero_pen = np.column_stack([sp.y, np.zeros((sp.y.size, 2))])
    assert objective_value(sp, zero_pen) == 0.0
    la = generate_dataset("lasso", random_state=0)
    assert objective_value(la, np.zeros(20)) == pytest.approx(la.Y @ la.Y)
    with pytest.raises(InvalidInputError):
        objective_value(la, np.zeros(3))
    with pytest.raises(InvalidInputError):
        objective_value(sp, np.zeros((3, 3)))


def test_trading_tracking_objective_constant_ideal():
    # x = y with a flat ideal path: every transition costs alpha^2 / sigma_x2 = 1
    y = np.full(21, 0.0)
    assert objective_value(TradingProblem(y), np.zeros(21)) == pytest.approx(20 * 0.25 / 0.25)


def test_spline_problem_objective_matches_model(rng):
    prob = SplineProblem(rng.standard_normal(6), 3.0)
    p = paths_from_theta(rng.standard_normal((2, 7)))
    np.testing.assert_allclose(prob.objective(p), prob.build_model(1.0).objective(p))


# --- backward pilot -----------------------------------------------------------------

def test_pilot_terminal_score_constant(rng):
    model = build_trading_model(trading_ideal_path(8), 0.25, 1.0, 0.5, 1.0)
    pilot = backward_pilot_scores(model, 200, rng)
    np.testing.assert_array_equal(pilot.log_beta(model.horizon - 1, np.linspace(-3, 3, 5)), 0.0)


def test_pilot_matches_gaussian_predictive():
    # T=2 toy: beta_1(x) is the N(phi x, q + r) density of y_2
    y = np.array([0.3, 1.2])
    phi, q, r = 0.8, 0.5, 0.4
    model = build_linear_gaussian_model(y, phi, q, r)
    pilot = backward_pilot_scores(model, 5000, np.random.default_rng(0))
    ms, vs, mf, vf = scalar_kalman_smoother(y, phi, q, r, 0.0, 1.0)
    xs = mf[0] + np.sqrt(vf[0]) * np.linspace(-1.28, 1.28, 25)
    est = pilot.log_beta(0, xs)
    exact = -0.5 * (y[1] - phi * xs) ** 2 / (q + r)
    ratio = np.exp((est - est.mean()) - (exact - exact.mean()))
    assert np.max(np.abs(ratio - 1)) <= 0.1


def test_pilot_scores_scale_invariant(rng):
    model = build_trading_model(trading_ideal_path(6), 0.25, 1.0, 0.5, 1.0)
    pilot = backward_pilot_scores(model, 100, rng)
    xs = np.linspace(-2, 2, 7)
    base = pilot.log_beta(1, xs)
    pilot.log_weights = [lw + 3.0 for lw in pilot.log_weights]
    shifted = pilot.log_beta(1, xs)
    np.testing.assert_allclose(shifted - base, 3.0)


def test_pilot_rejects_unsupported_models(rng):
    with pytest.raises(UnsupportedModelError):
        backward_pilot_scores(build_spline_model(np.arange(5.0), 1.0, 1.0), 10, rng)
    with pytest.raises(InvalidInputError):
        backward_pilot_scores(build_linear_gaussian_model([0.0, 1.0]), 1, rng)
