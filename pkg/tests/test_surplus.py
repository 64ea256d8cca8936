import numpy as np
import pytest

from conftest import case1_model, default_delay
from surplusgame.chain import ChainModel, simulate_chain
from surplusgame.errors import GridAlignmentError
from surplusgame.market import JumpSizeLaw, RegimeModel, simulate_market
from surplusgame.surplus import (
    DelayParams,
    admissibility_report,
    capital_flow,
    noisy_memory_path,
    noisy_memory_quadrature,
    simulate_surplus,
    step_noisy_memory,
)


def plain_model(r=0.0, alpha=0.0, beta=1e-12, claim_intensity=0.0, premium=1.0):
    return RegimeModel(
        chain=ChainModel(1, np.array([[0.0]]), np.array([1.0])),
        r=np.array([r]),
        alpha=np.array([alpha]),
        beta=beta,
        asset_intensity=np.array([0.0]),
        asset_law=[JumpSizeLaw.point_mass(1.0)],
        claim_intensity=np.array([claim_intensity]),
        claim_law=[JumpSizeLaw.point_mass(1.0)],
        premium=premium,
    )


def test_capital_flow_values():
    p = default_delay(theta_flow=0.1, xi=0.2)
    assert capital_flow(0.0, 5.0, 3.0, 4.0, default_delay(theta_flow=0.0, xi=0.0)) == 0.0
    assert capital_flow(0.0, 7.0, 7.0, 7.0, p) == pytest.approx(0.0)  # perfect tracking
    assert capital_flow(1.0, 10.0, 8.0, 9.0, p) == pytest.approx(0.4)


def test_zero_window_kills_memory():
    p = default_delay(rho=0.0)
    dt, n = 0.01, 100
    rng = np.random.default_rng(1)
    x = 1.0 + rng.normal(0, 0.1, size=n + 1).cumsum()
    dw1 = rng.normal(0, np.sqrt(dt), size=n)
    assert np.allclose(noisy_memory_path(x, dw1, p, dt), 0.0)


def test_constant_surplus_zero_zeta_telescopes_exactly():
    # Y(T) = x0 (W1(T) - W1(T - rho)) pathwise when zeta = 0 and X frozen
    p = default_delay(rho=0.25, zeta=0.0)
    dt, n, x0 = 0.005, 200, 2.5
    rng = np.random.default_rng(7)
    dw1 = rng.normal(0, np.sqrt(dt), size=n)
    y = noisy_memory_path(np.full(n + 1, x0), dw1, p, dt)
    m = round(p.rho / dt)
    w1 = np.concatenate(([0.0], np.cumsum(dw1)))
    expected = x0 * (w1[-1] - w1[-1 - m])
    assert y[-1] == pytest.approx(expected, abs=1e-12)


def test_window_variance_matches_ito_isometry():
    # Var Y(T) = rho for zeta = 0 and X = 1
    p = default_delay(rho=0.25, zeta=0.0)
    dt, n, paths = 0.005, 200, 10_000
    rng = np.random.default_rng(11)
    dw1 = rng.normal(0, np.sqrt(dt), size=(paths, n))
    y_t = noisy_memory_path(np.ones((paths, n + 1)), dw1, p, dt)[:, -1]
    var = y_t.var(ddof=1)
    se = p.rho * np.sqrt(2.0 / (paths - 1))  # sd of a variance estimate, Gaussian samples
    assert abs(var - p.rho) <= 3 * se


def test_recursion_vs_quadrature_regression_bound():
    # frozen bound: measured gap/dt ran near 2.3 on this configuration
    p = default_delay(rho=0.25, zeta=1.0)
    dt, n, paths = 0.005, 200, 200
    rng = np.random.default_rng(3)
    bm = np.concatenate(
        [np.zeros((paths, 1)), np.cumsum(rng.normal(0, np.sqrt(dt), (paths, n)), axis=1)], axis=1
    )
    x = 1.0 + 0.3 * bm
    dw1 = rng.normal(0, np.sqrt(dt), size=(paths, n))
    gap = np.abs(noisy_memory_path(x, dw1, p, dt) - noisy_memory_quadrature(x, dw1, p, dt)).max()
    assert gap <= 8.0 * dt


def test_step_noisy_memory_single_step():
    p = default_delay(rho=0.2, zeta=0.5)
    y1 = step_noisy_memory(1.0, 2.0, 0.1, 1.5, 0.05, p, 0.01)
    expected = 1.0 - 0.5 * 1.0 * 0.01 + 2.0 * 0.1 - np.exp(-0.1) * 1.5 * 0.05
    assert y1 == pytest.approx(expected)


def test_surplus_matches_linear_ode():
    # pi = 0, no jumps, no delay flow: dX = (p + r X) dt
    model = plain_model(r=0.045, premium=1.0)
    delay = default_delay(theta_flow=0.0, xi=0.0, rho=0.2)
    horizon, dt = 1.0, 1e-4
    chain = simulate_chain(model.chain, horizon, dt, seed=0)
    market = simulate_market(model, chain, dt, seed=0)
    path = simulate_surplus(model, delay, market, chain, strategy=0.0, x0=2.0, seed=0)
    r, p = 0.045, 1.0
    exact = 2.0 * np.exp(r * horizon) + p * (np.exp(r * horizon) - 1.0) / r
    assert path.x[-1] == pytest.approx(exact, rel=1e-4)


def test_surplus_compound_poisson_mean():
    model = plain_model(claim_intensity=0.5, premium=1e-12)
    delay = default_delay(theta_flow=0.0, xi=0.0, rho=0.2)
    horizon, dt, paths = 1.0, 0.01, 10_000
    x0 = 5.0
    x_t = np.empty(paths)
    for i in range(paths):
        chain = simulate_chain(model.chain, horizon, dt, seed=i)
        market = simulate_market(model, chain, dt, seed=i)
        x_t[i] = simulate_surplus(model, delay, market, chain, 0.0, x0, seed=i).x[-1]
    se = x_t.std(ddof=1) / np.sqrt(paths)
    assert abs(x_t.mean() - (x0 - 0.5 * horizon)) <= 3 * se


def test_all_zero_coefficients_freeze_surplus():
    model = plain_model(premium=1e-300)
    delay = default_delay(theta_flow=0.0, xi=0.0, rho=0.0, zeta=0.0, kappa=0.0)
    chain = simulate_chain(model.chain, 1.0, 0.01, seed=4)
    market = simulate_market(model, chain, 0.01, seed=4)
    path = simulate_surplus(model, delay, market, chain, 0.0, x0=3.0, seed=4)
    assert np.allclose(path.x, 3.0)
    assert np.allclose(path.y, 0.0)


def test_delay_identity_with_plateau():
    model = plain_model(r=0.02, premium=1.0)
    delay = default_delay(rho=0.3)
    dt = 0.01
    chain = simulate_chain(model.chain, 1.0, dt, seed=5)
    market = simulate_market(model, chain, dt, seed=5)
    path = simulate_surplus(model, delay, market, chain, 0.0, x0=1.0, seed=5)
    m = round(delay.rho / dt)
    for k in range(path.grid.n_steps + 1):
        expected = path.x[k - m] if k - m >= 0 else 1.0
        assert path.u[k] == expected


def test_rho_not_grid_multiple_rejected():
    model = plain_model()
    delay = default_delay(rho=0.35)
    chain = simulate_chain(model.chain, 1.0, 0.1, seed=0)
    market = simulate_market(model, chain, 0.1, seed=0)
    with pytest.raises(GridAlignmentError):
        simulate_surplus(model, delay, market, chain, 0.0, 1.0, seed=0)


def test_no_delay_matches_direct_integrator():
    model = case1_model()
    delay = DelayParams(rho=0.0, zeta=0.0, kappa=0.0, theta_flow=0.0, xi=0.0)
    horizon, dt = 1.0, 0.01
    chain = simulate_chain(model.chain, horizon, dt, seed=8)
    market = simulate_market(model, chain, dt, seed=8)
    pi = 0.4
    path = simulate_surplus(model, delay, market, chain, pi, x0=1.0, seed=8)

    # independent no-delay Euler loop
    x = 1.0
    asset = market.asset_marks.sums_per_step(market.grid.n_steps)
    claims = market.claim_marks.sums_per_step(market.grid.n_steps)
    r, a, p, beta = model.r[0], model.alpha[0], model.premium, model.beta
    for k in range(market.grid.n_steps):
        x = x + (p + r * x + pi * (a - r)) * dt + pi * beta * market.dw[k] + pi * asset[k] - claims[k]
    assert abs(path.x[-1] - x) <= 1e-12


def test_w1_independent_of_market_brownian():
    model = plain_model(beta=0.3)
    dt, n_paths = 0.02, 2000
    dws, dw1s = [], []
    for i in range(n_paths):
        chain = simulate_chain(model.chain, 1.0, dt, seed=i)
        market = simulate_market(model, chain, dt, seed=i)
        path = simulate_surplus(model, default_delay(), market, chain, 0.0, 1.0, seed=i)
        dws.append(market.dw)
        dw1s.append(path.dw1)
    a = np.concatenate(dws)
    b = np.concatenate(dw1s)
    corr = np.corrcoef(a, b)[0, 1]
    assert abs(corr) <= 3.0 / np.sqrt(a.size)


def test_literal_xi_sign_flips_drift_term():
    model = plain_model(r=0.0, premium=1.0)
    base = dict(rho=0.1, zeta=0.0, kappa=0.0, theta_flow=0.0, xi=0.5)
    chain = simulate_chain(model.chain, 0.5, 0.05, seed=2)
    market = simulate_market(model, chain, 0.05, seed=2)
    plus = simulate_surplus(model, DelayParams(**base), market, chain, 0.0, 1.0, seed=2)
    minus = simulate_surplus(
        model, DelayParams(**base, literal_xi_sign=True), market, chain, 0.0, 1.0, seed=2
    )
    assert plus.x[-1] > minus.x[-1]  # +xi U grows, -xi U shrinks


def test_admissibility_report_contains_pi_square_integral():
    model = plain_model(r=0.01, premium=1.0)
    delay = default_delay(theta_flow=0.0, xi=0.0, rho=0.2)
    dt = 0.001
    chain = simulate_chain(model.chain, 1.0, dt, seed=1)
    market = simulate_market(model, chain, dt, seed=1)
    path = simulate_surplus(model, delay, market, chain, 5.0, 1.0, seed=1)
    report = admissibility_report(path, model)
    assert report.pi_sq_integral == pytest.approx(25.0, abs=1e-10)
    assert report.all_finite


def test_admissibility_zero_strategy_reduces_to_claim_terms():
    model = plain_model(claim_intensity=0.4, premium=1.0)
    delay = default_delay(theta_flow=0.0, xi=0.0, rho=0.2)
    chain = simulate_chain(model.chain, 1.0, 0.01, seed=9)
    market = simulate_market(model, chain, 0.01, seed=9)
    path = simulate_surplus(model, delay, market, chain, 0.0, 1.0, seed=9)
    report = admissibility_report(path, model)
    assert report.variance_integral == 0.0
    assert report.jump_integral == pytest.approx(model.claim_m2_rate.sum() * 1.0)
