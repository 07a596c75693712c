import numpy as np
import pytest

from anneal_smc.problems import (
    build_l1trend_model,
    build_lasso_model,
    build_linear_gaussian_model,
    build_spline_model,
    build_trading_model,
    generate_dataset,
    trading_ideal_path,
)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def small_models(seed=0):
    """One small instance of every problem, keyed by name."""
    r = np.random.default_rng(seed)
    lasso = generate_dataset("lasso", {"n": 12, "p": 5}, r)
    return {
        "spline": build_spline_model(np.sin(np.arange(8) / 3) + 0.1 * r.standard_normal(8), 10.0, 4.0),
        "lasso": build_lasso_model(lasso.Y, lasso.Z, 2.0, 0.7),
        "trading": build_trading_model(trading_ideal_path(6), 0.25, 1.0, 0.5, 1.3),
        "trading_free": build_trading_model(trading_ideal_path(6), 0.25, 1.0, 0.5, 1.3,
                                            constrained=False),
        "l1trend": build_l1trend_model(r.standard_normal(7), 10.0, 2.0),
        "toy": build_linear_gaussian_model(r.standard_normal(5), 0.8, 0.5, 0.3, 0.0, 2.0, 1.7),
    }


def random_paths(model, n, rng, scale=1.0):
    """Paths that respect any singular dynamics of ``model``."""
    T = model.horizon
    paths = np.zeros((n, T, model.state_dim))
    for t in range(T):
        u = scale * rng.standard_normal((n, model.free_dim(t)))
        paths[:, t] = model.complete_state(t, u, paths[:, :t])
    return paths
