import numpy as np
import pytest
from scipy.optimize import minimize_scalar

from conftest import case1_model, case2_model, default_delay
from surplusgame.errors import SingularDenominatorError, ValidationError
from surplusgame.filtering import FilteredCoefficients, filtered_coefficients
from surplusgame.game import (
    ControlBounds,
    QuadraticPenalty,
    closed_form_controls,
    hamiltonian,
    hamiltonian_gradient_fd,
    make_game_state,
    optimal_pi,
    optimal_thetas,
    two_state_example_pi,
    value_at_zero,
    verify_saddle,
)

PEN = QuadraticPenalty(delta=0.5)


def case1_state(x=1.0, g=1.0, t=0.0):
    model = case1_model()
    return make_game_state(
        model, default_delay(), t=t, x=x, y=0.2, u=0.9, lambda_hat=np.array([1.0]),
        g=g, horizon=1.0,
    )


def case2_state(x=1.0, g=1.0, t=0.0, weights=(0.7, 0.3)):
    model = case2_model()
    return make_game_state(
        model, default_delay(), t=t, x=x, y=0.1, u=0.8, lambda_hat=np.array(weights),
        g=g, horizon=1.0,
    )


def test_penalty_requires_delta_below_one():
    with pytest.raises(ValidationError):
        QuadraticPenalty(delta=1.0)
    assert QuadraticPenalty(delta=-2.0).one_minus_delta == 3.0


def test_hamiltonian_vanishes_in_fully_degenerate_state():
    from surplusgame.chain import ChainModel
    from surplusgame.market import JumpSizeLaw, RegimeModel
    from surplusgame.surplus import DelayParams

    model = RegimeModel(
        chain=ChainModel(1, np.array([[0.0]]), np.array([1.0])),
        r=np.array([0.0]),
        alpha=np.array([0.0]),
        beta=0.2,
        asset_intensity=np.array([0.0]),
        asset_law=[JumpSizeLaw.point_mass(1.0)],
        claim_intensity=np.array([0.0]),
        claim_law=[JumpSizeLaw.point_mass(1.0)],
        premium=1e-300,
    )
    delay = DelayParams(rho=0.0, zeta=0.0, kappa=0.0, theta_flow=0.0, xi=0.0)
    state = make_game_state(model, delay, 0.0, 0.0, 0.0, 0.0, np.array([1.0]), 1.0, 1.0)
    assert hamiltonian(state, 0.0, (0.0, 0.0, 0.0), PEN) == pytest.approx(0.0, abs=1e-290)


def test_hamiltonian_quadratic_in_theta1():
    state = case1_state()
    g, w = state.g, state.theta1_weight
    for t1 in (-0.7, 0.3, 1.1):
        diff = hamiltonian(state, 0.1, (0.0, t1, 0.0), PEN) - hamiltonian(
            state, 0.1, (0.0, 0.0, 0.0), PEN
        )
        expected = -g * t1 * w - g * t1 * t1 / (2.0 * PEN.one_minus_delta)
        assert diff == pytest.approx(expected, rel=1e-12)


def test_finite_difference_gradient_matches_analytic():
    state = case2_state(x=1.3, g=1.7)
    c = state.coeffs
    g, beta = state.g, c.beta
    m2, c1 = float(c.asset_m2), float(c.claim_m1)
    a = float(c.alpha_hat) - float(c.r_hat)
    w = state.theta1_weight
    omd = PEN.one_minus_delta
    pi, t0, t1, s = 0.37, -0.21, 0.44, -0.13

    analytic = np.array(
        [
            -g * (a + beta * t0 + s * m2),
            -g * (pi * beta - c1) - g * t0 / omd,
            -g * w - g * t1 / omd,
            -g * pi * m2 - g * s * m2 / omd,
        ]
    )
    fd = hamiltonian_gradient_fd(state, pi, (t0, t1, s), PEN)
    assert np.abs(fd - analytic).max() <= 1e-6 * max(1.0, np.abs(analytic).max())


def test_optimal_pi_case1_value():
    coeffs = filtered_coefficients(case1_model(), np.array([1.0]))
    assert optimal_pi(coeffs, PEN) == pytest.approx(0.24074, abs=1e-5)
    assert optimal_pi(coeffs, PEN) == pytest.approx(0.065 / 0.27, rel=1e-14)


def test_optimal_pi_vanishes_without_excess_return():
    coeffs = FilteredCoefficients(
        alpha_hat=0.05, r_hat=0.05, beta=0.2, claim_intensity=0.0, claim_m1=0.0,
        claim_m2=0.0, asset_intensity=0.5, asset_m1=0.5, asset_m2=0.5,
    )
    assert optimal_pi(coeffs, PEN) == 0.0


def test_optimal_pi_singular_denominator():
    coeffs = FilteredCoefficients(
        alpha_hat=0.1, r_hat=0.0, beta=1e-200, claim_intensity=0.0, claim_m1=0.0,
        claim_m2=0.0, asset_intensity=0.0, asset_m1=0.0, asset_m2=0.0,
    )
    with pytest.raises(SingularDenominatorError):
        optimal_pi(coeffs, PEN)


def test_optimal_pi_case2_matches_two_state_formula():
    coeffs = filtered_coefficients(case2_model(), np.array([0.7, 0.3]))
    general = optimal_pi(coeffs, PEN)
    printed = two_state_example_pi(
        alpha1=0.13, alpha2=0.09, r1=0.045, r2=0.09, beta=0.2,
        asset_lam1=0.5, asset_lam2=0.7, claim_lam1=0.5, claim_lam2=0.7,
        delta=0.5, p1=0.7,
    )
    assert general == pytest.approx(printed, rel=1e-12)
    assert general == pytest.approx(0.385, rel=1e-12)


def test_two_state_identity_on_random_draws():
    from surplusgame.chain import ChainModel
    from surplusgame.market import JumpSizeLaw, RegimeModel

    rng = np.random.default_rng(42)
    worst = 0.0
    for _ in range(1000):
        a1, a2 = rng.uniform(0.0, 0.2, 2)
        r1, r2 = rng.uniform(0.0, 0.1, 2)
        beta = rng.uniform(0.05, 0.5)
        al1, al2, cl1, cl2 = rng.uniform(0.05, 2.0, 4)
        delta = rng.uniform(-1.0, 0.9)
        p1 = rng.uniform(0.0, 1.0)
        model = RegimeModel(
            chain=ChainModel(2, np.array([[-0.5, 0.5], [0.5, -0.5]]), np.array([0.5, 0.5])),
            r=np.array([r1, r2]),
            alpha=np.array([a1, a2]),
            beta=beta,
            asset_intensity=np.array([al1, al2]),
            asset_law=[JumpSizeLaw.point_mass(1.0)] * 2,
            claim_intensity=np.array([cl1, cl2]),
            claim_law=[JumpSizeLaw.point_mass(1.0)] * 2,
            premium=1.0,
        )
        coeffs = filtered_coefficients(model, np.array([p1, 1.0 - p1]))
        general = optimal_pi(coeffs, QuadraticPenalty(delta))
        printed = two_state_example_pi(a1, a2, r1, r2, beta, al1, al2, cl1, cl2, delta, p1)
        worst = max(worst, abs(general - printed) / max(1.0, abs(printed)))
    assert worst <= 1e-12


def test_optimal_thetas_against_numeric_maximization():
    state = case1_state()
    pi = optimal_pi(state.coeffs, PEN)
    t0, t1, s = optimal_thetas(state, pi, PEN)
    assert t0 == pytest.approx(-0.5 * pi * 0.2, rel=1e-12)  # claim_m1 = 0 here
    assert s == pytest.approx(-0.5 * pi, rel=1e-12)

    num_t0 = minimize_scalar(
        lambda v: -hamiltonian(state, pi, (v, t1, s), PEN), bounds=(-2, 2), method="bounded"
    ).x
    num_s = minimize_scalar(
        lambda v: -hamiltonian(state, pi, (t0, t1, v), PEN), bounds=(-2, 2), method="bounded"
    ).x
    num_t1 = minimize_scalar(
        lambda v: -hamiltonian(state, pi, (t0, v, s), PEN), bounds=(-2, 2), method="bounded"
    ).x
    assert num_t0 == pytest.approx(t0, abs=1e-6)
    assert num_s == pytest.approx(s, abs=1e-6)
    assert num_t1 == pytest.approx(t1, abs=1e-6)


def test_theta1_zero_without_terminal_memory_weight():
    state = make_game_state(
        case1_model(), default_delay(kappa=0.0), 0.0, 1.0, 0.1, 0.9, np.array([1.0]), 1.0, 1.0
    )
    _, t1, _ = optimal_thetas(state, 0.3, PEN)
    assert t1 == 0.0


def test_controls_invariant_to_density_level():
    # G factors out of every first-order condition
    profiles = [closed_form_controls(case2_state(g=g), PEN) for g in (0.5, 1.0, 2.0)]
    for p in profiles[1:]:
        assert p.pi_star == profiles[0].pi_star
        assert p.theta0_star == profiles[0].theta0_star
        assert p.theta1_star == profiles[0].theta1_star
        assert p.theta2_slope == profiles[0].theta2_slope


def test_tabulated_theta2_matches_linear_family():
    state = case2_state()
    model = case2_model()
    s = -0.15
    h_lin = hamiltonian(state, 0.3, (0.1, -0.2, s), PEN)
    h_tab = hamiltonian(state, 0.3, (0.1, -0.2, lambda z: s * z), PEN, model=model)
    assert h_tab == pytest.approx(h_lin, rel=1e-9)


def test_saddle_case1_argmin_near_closed_form():
    report = verify_saddle(case1_state(), ControlBounds(), PEN, grid_n=201)
    assert report.closed_form_interior
    assert abs(report.arg_inf_sup["pi"] - 0.24074) <= 0.02
    assert report.gap <= report.resolution_bound
    assert report.within_one_cell


def test_saddle_degenerate_state_at_origin():
    from surplusgame.chain import ChainModel
    from surplusgame.market import JumpSizeLaw, RegimeModel
    from surplusgame.surplus import DelayParams

    model = RegimeModel(
        chain=ChainModel(1, np.array([[0.0]]), np.array([1.0])),
        r=np.array([0.03]),
        alpha=np.array([0.03]),
        beta=0.2,
        asset_intensity=np.array([0.4]),
        asset_law=[JumpSizeLaw.point_mass(1.0)],
        claim_intensity=np.array([0.0]),
        claim_law=[JumpSizeLaw.point_mass(1.0)],
        premium=1e-300,
    )
    delay = DelayParams(rho=0.0, zeta=0.0, kappa=0.0, theta_flow=0.0, xi=0.0)
    state = make_game_state(model, delay, 0.0, 0.0, 0.0, 0.0, np.array([1.0]), 1.0, 1.0)
    report = verify_saddle(state, ControlBounds(), PEN, grid_n=201)
    for v in report.arg_inf_sup.values():
        assert abs(v) <= 1e-12
    assert report.gap <= report.resolution_bound


def test_first_order_residuals_at_closed_form():
    for state in (case1_state(), case2_state(x=1.4, g=1.3, t=0.5)):
        cf = closed_form_controls(state, PEN)
        grad = hamiltonian_gradient_fd(
            state, cf.pi_star, (cf.theta0_star, cf.theta1_star, cf.theta2_slope), PEN
        )
        assert np.abs(grad).max() <= 1e-6


def test_value_at_zero_degenerate_market():
    from surplusgame.chain import ChainModel
    from surplusgame.market import JumpSizeLaw, RegimeModel
    from surplusgame.surplus import DelayParams

    model = RegimeModel(
        chain=ChainModel(1, np.array([[0.0]]), np.array([1.0])),
        r=np.array([0.0]),
        alpha=np.array([0.0]),
        beta=0.2,
        asset_intensity=np.array([0.0]),
        asset_law=[JumpSizeLaw.point_mass(1.0)],
        claim_intensity=np.array([0.0]),
        claim_law=[JumpSizeLaw.point_mass(1.0)],
        premium=1e-300,
    )
    delay = DelayParams(rho=0.0, zeta=0.0, kappa=0.0, theta_flow=0.0, xi=0.0)
    j, se = value_at_zero(model, delay, PEN, x0=2.0, horizon=1.0, dt=0.02, paths=200, seed=0)
    assert j == pytest.approx(-2.0, abs=1e-12)
    assert se == pytest.approx(0.0, abs=1e-12)


def test_value_at_zero_stderr_scaling_and_seed_stability():
    model = case2_model()
    delay = default_delay()
    kwargs = dict(x0=1.0, horizon=1.0, dt=0.02)
    j1, se1 = value_at_zero(model, delay, PEN, paths=1000, seed=1, **kwargs)
    j2, se2 = value_at_zero(model, delay, PEN, paths=2000, seed=1, **kwargs)
    assert 1.3 <= se1 / se2 <= 1.6
    j3, se3 = value_at_zero(model, delay, PEN, paths=1000, seed=77, **kwargs)
    assert abs(j1 - j3) <= 3 * np.hypot(se1, se3)
