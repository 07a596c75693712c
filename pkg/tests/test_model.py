import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from anneal_smc import EmulatedModel, InvalidInputError, log_target_density, temper
from anneal_smc.oracles import brute_force_mlp, kalman_smoother_mlp
from anneal_smc.problems import build_l1trend_model, build_trading_model, generate_dataset, trading_ideal_path

from conftest import random_paths, small_models

MODELS = small_models()


@pytest.mark.parametrize("name", sorted(MODELS))
@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**31 - 1))
def test_boltzmann_identity(name, seed):
    model = MODELS[name]
    rng = np.random.default_rng(seed)
    p = random_paths(model, 2, rng)
    lhs = np.diff(model.log_target(p))[0]
    rhs = -model.boltzmann_scale * model.kappa * np.diff(model.objective(p))[0]
    assert lhs == pytest.approx(rhs, rel=1e-8, abs=1e-8 * max(1.0, abs(rhs)))


@pytest.mark.parametrize("name", ["lasso", "trading", "trading_free", "l1trend"])
def test_closed_form_log_target_matches_step_sum(name, rng):
    model = MODELS[name]
    p = random_paths(model, 20, rng)
    np.testing.assert_allclose(model.log_target(p), EmulatedModel.log_target(model, p),
                               rtol=1e-10, atol=1e-9)


@pytest.mark.parametrize("name", sorted(MODELS))
def test_memory_depth_is_respected(name, rng):
    model = MODELS[name]
    d = model.memory_depth
    T = model.horizon
    if d >= T - 1:
        pytest.skip("full-history model")
    p = random_paths(model, 10, rng)
    t = T - 1
    history = p[:, :t].copy()
    base = model.state_logpdf(t, model.free_coords(t, p[:, t]), history)
    history[:, : t - d] += rng.standard_normal(history[:, : t - d].shape)
    moved = model.state_logpdf(t, model.free_coords(t, p[:, t]), history)
    np.testing.assert_allclose(base, moved)


def test_trading_constant_path_example():
    # x = y with no trades: each transition contributes -(0 + 0.5)^2 / (2 * 0.25)
    y = trading_ideal_path(20)
    model = build_trading_model(y, 0.25, 1.0, 0.5, 1.0, constrained=False)
    c = 1.7
    path = np.full((1, model.horizon, 1), c)
    steps = [model.kernel.logpdf(np.array([c]), np.array([c]))[0] + model.kernel.log_z
             for _ in range(model.horizon - 1)]
    np.testing.assert_allclose(steps, -0.5)
    assert np.isfinite(model.log_target(path)).all()


def test_spline_kalman_vs_flat_difference():
    problem = generate_dataset("spline", random_state=1)
    model = problem.build_model(4.0)
    ks = kalman_smoother_mlp(problem)
    flat = np.zeros_like(ks)
    diff = log_target_density(model, ks) - log_target_density(model, flat)
    expected = -4.0 * (problem.objective(ks) - problem.objective(flat))
    assert diff == pytest.approx(expected, rel=1e-10)


def test_log_target_density_rejects_bad_paths():
    model = MODELS["toy"]
    with pytest.raises(InvalidInputError):
        log_target_density(model, np.full(model.horizon, np.nan))
    with pytest.raises(InvalidInputError):
        log_target_density(model, np.zeros(model.horizon + 1))


def test_temper_gaussian_variance_halves():
    toy = MODELS["toy"]
    hot = temper(toy, 2 * toy.kappa0)
    assert hot._prior_var(1) == pytest.approx(toy._prior_var(1) / 2)
    assert hot.kappa0 == toy.kappa0


def test_temper_l1_laplace_scale():
    model = build_l1trend_model(np.zeros(5), 10.0, 10.0)
    assert model.laplace_scale == pytest.approx(2 / 100)
    assert temper(model, 13.0).laplace_scale == pytest.approx(2 / 130)


@pytest.mark.parametrize("bad", [0.0, -1.0, np.inf])
def test_temper_rejects_bad_kappa(bad):
    with pytest.raises(InvalidInputError):
        temper(MODELS["toy"], bad)


@pytest.mark.parametrize("name", ["toy", "trading", "l1trend", "lasso"])
def test_tempering_preserves_argmax_on_grid(name, rng):
    model = MODELS[name]
    grids = [np.sort(rng.normal(0, 1.5, 3)) for _ in range(model.horizon)]
    a = brute_force_mlp(model, grids)
    b = brute_force_mlp(temper(model, 5 * model.kappa), grids)
    np.testing.assert_array_equal(a, b)


def test_objective_is_temperature_free(rng):
    for model in MODELS.values():
        p = random_paths(model, 4, rng)
        np.testing.assert_allclose(temper(model, 3 * model.kappa).objective(p), model.objective(p))
