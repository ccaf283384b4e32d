"""Time grids, counter-based draws, and path simulation."""
import numpy as np
import pytest

from chaospricer import (
    SIM_BLOCK,
    BlackScholesParams,
    HestonParams,
    TimeGrid,
    draw_increment,
    simulate,
    simulate_black_scholes,
    simulate_heston,
    standard_normal_increments,
)

from oracles import black_scholes_put, heston_put_cf


def test_grid_regular_layout():
    grid = TimeGrid.regular(2.0, 4)
    np.testing.assert_allclose(grid.times, [0, 0.5, 1.0, 1.5, 2.0])
    np.testing.assert_array_equal(grid.exercise_map, [0, 1, 2, 3, 4])
    assert grid.steps == 4 and grid.exercise_count == 4
    assert grid.horizon == 2.0
    sub = TimeGrid.regular(1.0, 2, steps=6)
    np.testing.assert_array_equal(sub.exercise_map, [0, 3, 6])
    np.testing.assert_allclose(sub.exercise_times, [0.0, 0.5, 1.0])


def test_grid_validation():
    with pytest.raises(ValueError):
        TimeGrid.regular(0.0, 4)
    with pytest.raises(ValueError):
        TimeGrid.regular(1.0, 4, steps=6)  # not a multiple
    with pytest.raises(ValueError):
        TimeGrid(times=np.array([0.0, 0.5, 0.5, 1.0]),
                 exercise_map=np.array([0, 3]))
    with pytest.raises(ValueError):
        TimeGrid(times=np.array([0.0, 1.0]), exercise_map=np.array([0, 2]))


def test_params_validation():
    with pytest.raises(ValueError):
        BlackScholesParams(spot=np.array([100.0, -1.0]), rate=0.0,
                           vol=np.array([0.2, 0.2]))
    with pytest.raises(ValueError):
        # equicorrelation must stay positive definite: lower bound -1/(d-1)
        BlackScholesParams(spot=np.full(3, 100.0), rate=0.0,
                           vol=np.full(3, 0.2), correlation=-0.6)
    with pytest.raises(ValueError):
        HestonParams(spot=100.0, rate=0.1, v0=-0.01, kappa=2.0, theta=0.01,
                     xi=0.2, rho=-0.3)
    with pytest.raises(ValueError):
        HestonParams(spot=100.0, rate=0.1, v0=0.01, kappa=2.0, theta=0.01,
                     xi=0.2, rho=-1.5)
    p = BlackScholesParams(spot=np.full(5, 100.0), rate=0.05,
                           vol=np.full(5, 0.2), correlation=0.2)
    gamma = p.correlation_root @ p.correlation_root.T
    expected = np.full((5, 5), 0.2)
    np.fill_diagonal(expected, 1.0)
    np.testing.assert_allclose(gamma, expected, atol=1e-12)


def test_increments_counter_contract():
    # the draw at (path, step, dim) is a pure function of the key and
    # coordinates: prefixes, extensions, and pointwise draws all agree
    a = standard_normal_increments(42, 3, 1000, 4, 2)
    b = standard_normal_increments(42, 3, 1000, 4, 2)
    np.testing.assert_array_equal(a, b)
    longer = standard_normal_increments(42, 3, 5000, 4, 2)
    np.testing.assert_array_equal(longer[:1000], a)
    # crossing a block boundary changes nothing for earlier paths
    big = standard_normal_increments(42, 3, SIM_BLOCK + 17, 4, 2)
    np.testing.assert_array_equal(big[:1000], a)
    for path, step, dim in ((0, 0, 0), (999, 3, 1), (SIM_BLOCK + 5, 2, 0)):
        val = draw_increment(42, 3, path, step, dim, 4, 2)
        assert val == big[path, step, dim] if path < big.shape[0] else True
    assert standard_normal_increments(42, 4, 1000, 4, 2)[0, 0, 0] != a[0, 0, 0]
    assert standard_normal_increments(43, 3, 1000, 4, 2)[0, 0, 0] != a[0, 0, 0]


def test_increment_moments():
    g = standard_normal_increments(7, 0, 200_000, 2, 1).reshape(-1)
    assert abs(g.mean()) < 4.0 / np.sqrt(g.size)
    assert abs(g.var() - 1.0) < 4.0 * np.sqrt(2.0 / g.size)


def test_black_scholes_martingale_and_terminal_law():
    params = BlackScholesParams(spot=np.array([100.0, 80.0]), rate=0.03,
                                vol=np.array([0.2, 0.4]), correlation=0.5)
    grid = TimeGrid.regular(1.0, 5)
    out = simulate_black_scholes(params, grid, 200_000, 11, 0)
    s = out.asset_paths
    # discounted spots are martingales: E[e^{-rt} S_t] = S_0
    for k in (1, 3, 5):
        disc = np.exp(-params.rate * grid.times[k])
        for j in (0, 1):
            mean = disc * s[:, k, j].mean()
            se = disc * s[:, k, j].std() / np.sqrt(s.shape[0])
            assert abs(mean - params.spot[j]) < 4 * se
    # terminal log-spot variance and correlation match the inputs
    logs = np.log(s[:, -1, :])
    assert np.allclose(logs.var(axis=0), params.vol ** 2, rtol=0.02)
    corr = np.corrcoef(logs.T)[0, 1]
    assert abs(corr - 0.5) < 0.01


def test_black_scholes_zero_vol_deterministic():
    params = BlackScholesParams(spot=np.array([50.0]), rate=0.07,
                                vol=np.array([0.0]))
    grid = TimeGrid.regular(2.0, 4)
    out = simulate_black_scholes(params, grid, 16, 0, 0)
    expected = 50.0 * np.exp(0.07 * grid.times)
    np.testing.assert_allclose(out.asset_paths[:, :, 0],
                               np.broadcast_to(expected, (16, 5)), rtol=1e-12)


def test_european_put_prices_against_closed_form():
    # price only the terminal payoff: simulation-level check, no policy
    params = BlackScholesParams(spot=np.array([100.0]), rate=0.05,
                                vol=np.array([0.3]), correlation=0.0)
    grid = TimeGrid.regular(1.0, 4)
    out = simulate_black_scholes(params, grid, 400_000, 5, 0)
    payoff = np.maximum(100.0 - out.asset_paths[:, -1, 0], 0.0) \
        * out.discount_factors[-1]
    ref = black_scholes_put(100.0, 100.0, 0.05, 0.3, 1.0)
    se = payoff.std() / np.sqrt(payoff.size)
    assert abs(payoff.mean() - ref) < 4 * se


def test_heston_full_truncation_properties():
    params = HestonParams(spot=100.0, rate=0.1, v0=0.01, kappa=2.0,
                          theta=0.01, xi=0.2, rho=-0.3)
    grid = TimeGrid.regular(1.0, 20)
    out = simulate_heston(params, grid, 50_000, 1, 0)
    assert out.variance_paths is not None
    # full truncation floors the variance used in the dynamics but the
    # stored variance state itself may go negative only between clippings
    assert out.asset_paths.min() > 0.0
    assert out.increments.shape == (50_000, 20, 2)
    # increments are raw standard normals (pre-correlation)
    flat = out.increments.reshape(-1, 2)
    assert abs(flat[:, 0].mean()) < 0.005
    assert abs(flat[:, 0] @ flat[:, 1] / flat.shape[0]) < 0.005
    assert abs(flat.var(axis=0) - 1.0).max() < 0.01


def test_heston_european_put_vs_characteristic_function():
    # Euler discretization at n = 20 carries a small bias, so the band is
    # 4 standard errors plus a discretization allowance
    params = HestonParams(spot=100.0, rate=0.1, v0=0.01, kappa=2.0,
                          theta=0.01, xi=0.2, rho=-0.3)
    grid = TimeGrid.regular(1.0, 20)
    out = simulate_heston(params, grid, 400_000, 2, 0)
    payoff = np.maximum(100.0 - out.asset_paths[:, -1, 0], 0.0) \
        * out.discount_factors[-1]
    ref = heston_put_cf(100.0, 100.0, 1.0, 0.1, 0.01, 2.0, 0.01, 0.2, -0.3)
    se = payoff.std() / np.sqrt(payoff.size)
    assert abs(payoff.mean() - ref) < 4 * se + 0.02


def test_heston_xi_zero_reduces_to_deterministic_variance():
    # with xi = 0 the variance follows the deterministic mean reversion
    # v' = kappa (theta - v); v0 = theta keeps it flat at theta
    params = HestonParams(spot=100.0, rate=0.05, v0=0.04, kappa=1.5,
                          theta=0.04, xi=0.0, rho=0.0)
    grid = TimeGrid.regular(1.0, 10)
    out = simulate_heston(params, grid, 1000, 3, 0)
    np.testing.assert_allclose(out.variance_paths, 0.04, rtol=1e-12)


def test_simulate_dispatch():
    grid = TimeGrid.regular(1.0, 2)
    bs = BlackScholesParams(spot=np.array([1.0]), rate=0.0,
                            vol=np.array([0.1]))
    hs = HestonParams(spot=1.0, rate=0.0, v0=0.01, kappa=1.0, theta=0.01,
                      xi=0.1, rho=0.0)
    assert simulate(bs, grid, 8, 0, 0).variance_paths is None
    assert simulate(hs, grid, 8, 0, 0).variance_paths is not None
    with pytest.raises(TypeError):
        simulate(object(), grid, 8, 0, 0)


def test_simulation_reproducibility_and_runs():
    params = BlackScholesParams(spot=np.array([100.0]), rate=0.05,
                                vol=np.array([0.2]))
    grid = TimeGrid.regular(1.0, 3)
    a = simulate_black_scholes(params, grid, 1000, 9, 0)
    b = simulate_black_scholes(params, grid, 1000, 9, 0)
    c = simulate_black_scholes(params, grid, 1000, 9, 1)
    np.testing.assert_array_equal(a.asset_paths, b.asset_paths)
    assert not np.array_equal(a.asset_paths, c.asset_paths)
