"""Zero-sum game between the insurer and the market.

The insurer picks the invested amount pi, the market answers with a
scenario distortion theta = (theta0, theta1, theta2).  Under the quadratic
penalty the saddle point has closed forms; this module evaluates the
Hamiltonian, the closed forms, and checks optimality by brute-force grid
search over both orderings of inf and sup.

theta2 is restricted to the linear family theta2(t, z) = slope * z, the
exact shape of the closed form; a tabulated theta2 can still be fed to the
Hamiltonian for testing, via quadrature against the filtered jump law.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad

from .errors import SingularDenominatorError, ValidationError
from .filtering import FilteredCoefficients, filtered_coefficients
from .market import EXPONENTIAL, LOGNORMAL, POINT_MASS, RegimeModel
from .surplus import DelayParams


@dataclass(frozen=True)
class QuadraticPenalty:
    """Quadratic scenario penalty with relative risk aversion 1 - delta."""

    delta: float

    def __post_init__(self):
        if not self.delta < 1.0:
            raise ValidationError(f"delta must be strictly below 1, got {self.delta}")

    @property
    def one_minus_delta(self) -> float:
        return 1.0 - self.delta


@dataclass(frozen=True)
class ControlBounds:
    """Compact boxes for the investment and the three scenario coordinates."""

    pi: tuple[float, float] = (-2.0, 2.0)
    theta0: tuple[float, float] = (-2.0, 2.0)
    theta1: tuple[float, float] = (-2.0, 2.0)
    theta2_slope: tuple[float, float] = (-2.0, 2.0)

    def __post_init__(self):
        for name in ("pi", "theta0", "theta1", "theta2_slope"):
            lo, hi = getattr(self, name)
            if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi):
                raise ValidationError(f"bounds for {name} must be a finite nonempty box")


@dataclass(frozen=True)
class GameState:
    """Everything the Hamiltonian needs at one instant.

    ``k1``, ``k2``, ``upsilon1``, ``upsilon2`` ride along as inert formal
    arguments: the game driver never reads them, they only keep the state
    signature aligned with the martingale-representation unknowns.
    """

    t: float
    x: float
    y: float
    u: float
    lambda_hat: np.ndarray
    g: float
    coeffs: FilteredCoefficients
    delay: DelayParams
    premium: float
    horizon: float
    k1: float = 0.0
    k2: float = 0.0
    upsilon1: object = None
    upsilon2: object = None

    def __post_init__(self):
        if self.g <= 0.0:
            raise ValidationError(f"scenario density level must be positive, got {self.g}")
        lam = np.asarray(self.lambda_hat, dtype=float)
        if np.any(lam < -1e-12) or abs(lam.sum() - 1.0) > 1e-9:
            raise ValidationError("lambda_hat must lie on the probability simplex")

    @property
    def theta1_weight(self) -> float:
        """kappa * X * (1 - exp(-zeta rho) chi_{[0, T - rho]}(t)), precomputed."""
        return self.delay.kappa * self.x * self.delay.memory_weight(self.t, self.horizon)

    @property
    def drift_core(self) -> float:
        """Control-free drift part: p + (r_hat - theta - xi) X + (theta_bar - kappa zeta) Y + xi U."""
        d = self.delay
        return (
            self.premium
            + (float(self.coeffs.r_hat) - d.theta_flow - d.xi) * self.x
            + (d.theta_bar - d.kappa * d.zeta) * self.y
            + d.xi_drift_sign * d.xi * self.u
        )


def make_game_state(
    model: RegimeModel,
    delay: DelayParams,
    t: float,
    x: float,
    y: float,
    u: float,
    lambda_hat: np.ndarray,
    g: float,
    horizon: float,
) -> GameState:
    """Bundle filtered coefficients and delay data into a game state."""
    return GameState(
        t=t,
        x=x,
        y=y,
        u=u,
        lambda_hat=np.asarray(lambda_hat, dtype=float),
        g=g,
        coeffs=filtered_coefficients(model, lambda_hat),
        delay=delay,
        premium=model.premium,
        horizon=horizon,
    )


@dataclass(frozen=True)
class ClosedFormControls:
    """Saddle-point controls; theta2 is the slope of theta2(t, z) = slope * z.

    ``scenario_admissible`` records whether slope * z stays above -1 over
    the filtered jump law's support bound; a violation is reported here,
    never clipped.
    """

    pi_star: float
    theta0_star: float
    theta1_star: float
    theta2_slope: float
    scenario_admissible: bool = True


def hamiltonian_kernel(
    drift_core,
    alpha_minus_r,
    beta,
    claim_m1,
    asset_m2,
    theta1_weight,
    g,
    pi,
    theta0,
    theta1,
    slope,
    one_minus_delta,
    theta2_quad=None,
    theta2_lin=None,
):
    """Hamiltonian value; broadcasts over array arguments.

    ``theta2_lin``/``theta2_quad`` override the linear-family moments
    integral z theta2 nu_hat and integral theta2^2 nu_hat (defaults are
    slope * asset_m2 and slope^2 * asset_m2).
    """
    lin = slope * asset_m2 if theta2_lin is None else theta2_lin
    quadr = slope * slope * asset_m2 if theta2_quad is None else theta2_quad
    bracket = (
        drift_core
        + pi * alpha_minus_r
        + pi * beta * theta0
        + theta1 * theta1_weight
        + pi * lin
        - claim_m1 * (1.0 + theta0)
    )
    penalty = (theta0 * theta0 + theta1 * theta1 + quadr) / (2.0 * one_minus_delta)
    return -g * bracket - g * penalty


def _tabulated_theta2_moments(
    model: RegimeModel, lambda_hat: np.ndarray, theta2
) -> tuple[float, float]:
    """integral z theta2(z) nu_hat(dz) and integral theta2(z)^2 nu_hat(dz) by quadrature."""
    w = np.asarray(lambda_hat, dtype=float)
    lin = 0.0
    quadr = 0.0
    for j, law in enumerate(model.asset_law):
        rate = w[j] * model.asset_intensity[j]
        if rate == 0.0:
            continue
        if law.kind == POINT_MASS:
            a = law.atom
            lin += rate * a * theta2(a)
            quadr += rate * theta2(a) ** 2
            continue
        if law.kind == EXPONENTIAL:
            mean = law.params[0]
            pdf = lambda z: math.exp(-z / mean) / mean
        elif law.kind == LOGNORMAL:
            mu, sigma = law.params
            pdf = lambda z: math.exp(-0.5 * ((math.log(z) - mu) / sigma) ** 2) / (
                z * sigma * math.sqrt(2.0 * math.pi)
            )
        lin += rate * quad(lambda z: z * theta2(z) * pdf(z), 0.0, np.inf)[0]
        quadr += rate * quad(lambda z: theta2(z) ** 2 * pdf(z), 0.0, np.inf)[0]
    return lin, quadr


def hamiltonian(
    state: GameState,
    pi: float,
    theta: tuple,
    pen: QuadraticPenalty,
    model: RegimeModel | None = None,
) -> float:
    """Hamiltonian of the game at one state and one control pair.

    ``theta`` is (theta0, theta1, slope) with a float slope for the linear
    family, or (theta0, theta1, callable) for a tabulated theta2 (testing
    only; requires ``model`` for quadrature against the jump laws).
    """
    theta0, theta1, slope = theta
    theta2_lin = theta2_quad = None
    if callable(slope):
        if model is None:
            raise ValidationError("tabulated theta2 needs the regime model for quadrature")
        theta2_lin, theta2_quad = _tabulated_theta2_moments(model, state.lambda_hat, slope)
        slope = 0.0
    c = state.coeffs
    return float(
        hamiltonian_kernel(
            state.drift_core,
            float(c.alpha_hat) - float(c.r_hat),
            c.beta,
            float(c.claim_m1),
            float(c.asset_m2),
            state.theta1_weight,
            state.g,
            pi,
            theta0,
            theta1,
            slope,
            pen.one_minus_delta,
            theta2_quad=theta2_quad,
            theta2_lin=theta2_lin,
        )
    )


def optimal_pi_arrays(alpha_hat, r_hat, claim_m1, asset_m2, beta, one_minus_delta):
    """Closed-form investment, vectorized over filtered-coefficient arrays."""
    den = one_minus_delta * (beta * beta + asset_m2)
    return (alpha_hat - r_hat + one_minus_delta * beta * claim_m1) / den


def optimal_pi(coeffs: FilteredCoefficients, pen: QuadraticPenalty) -> float:
    """First-order-condition investment from filtered coefficients.

    Raises :class:`SingularDenominatorError` when beta^2 plus the filtered
    asset second moment vanishes (no volatility and no asset jumps).
    """
    den = pen.one_minus_delta * (coeffs.beta**2 + float(coeffs.asset_m2))
    if den <= 0.0 or not math.isfinite(den):
        raise SingularDenominatorError(
            "optimal investment undefined: (1 - delta)(beta^2 + asset second moment) vanished"
        )
    return float(
        optimal_pi_arrays(
            float(coeffs.alpha_hat),
            float(coeffs.r_hat),
            float(coeffs.claim_m1),
            float(coeffs.asset_m2),
            coeffs.beta,
            pen.one_minus_delta,
        )
    )


def optimal_thetas(
    state: GameState, pi: float, pen: QuadraticPenalty
) -> tuple[float, float, float]:
    """Worst-case scenario response to an investment level.

    theta0 = (1 - delta)(claim first moment - pi beta),
    theta1 = (delta - 1) kappa X (1 - exp(-zeta rho) chi),
    theta2 slope = (delta - 1) pi.
    """
    omd = pen.one_minus_delta
    c = state.coeffs
    theta0 = omd * (float(c.claim_m1) - pi * c.beta)
    theta1 = -omd * state.theta1_weight
    slope = -omd * pi
    return theta0, theta1, slope


def closed_form_controls(
    state: GameState, pen: QuadraticPenalty, model: RegimeModel | None = None
) -> ClosedFormControls:
    """Saddle-point controls at one state, with a scenario-admissibility flag.

    The flag checks slope * z > -1 on the support bound of every asset law
    with positive filtered weight; unbounded laws fail for any negative
    slope and the violation is reported rather than clipped.
    """
    pi = optimal_pi(state.coeffs, pen)
    theta0, theta1, slope = optimal_thetas(state, pi, pen)
    admissible = theta0 > -1.0
    if model is not None and slope < 0.0:
        w = np.asarray(state.lambda_hat, dtype=float)
        for j, law in enumerate(model.asset_law):
            if w[j] * model.asset_intensity[j] <= 0.0:
                continue
            bound = law.support_max
            if not math.isfinite(bound) or slope * bound <= -1.0:
                admissible = False
    return ClosedFormControls(
        pi_star=pi,
        theta0_star=theta0,
        theta1_star=theta1,
        theta2_slope=slope,
        scenario_admissible=admissible,
    )


def two_state_example_pi(
    alpha1: float,
    alpha2: float,
    r1: float,
    r2: float,
    beta: float,
    asset_lam1: float,
    asset_lam2: float,
    claim_lam1: float,
    claim_lam2: float,
    delta: float,
    p1: float,
) -> float:
    """Two-state unit-jump investment formula, written exactly as printed.

    Independent oracle for the general closed form when both driving
    measures are unit-jump Poisson: p1 is the filtered probability of
    state 1 and the lambdas are the asset / claim intensities per state.
    """
    den = (1.0 - delta) * (beta * beta + asset_lam2 + (asset_lam1 - asset_lam2) * p1)
    first = (
        (alpha1 - r1 - (alpha2 - r2) + (1.0 - delta) * beta * (claim_lam1 - claim_lam2)) * p1
    ) / den
    second = (alpha2 - r2 + (1.0 - delta) * beta * claim_lam2) / den
    return first + second


@dataclass(frozen=True)
class SaddleReport:
    """Grid-search audit of the saddle point at one state.

    ``within_one_cell`` covers every inf-sup coordinate and the sup-inf
    scenario coordinates.  The sup-inf investment argmin is reported but
    not localized: H is affine in the investment, so once the grid snaps
    the scenario off its exact response the inner argmin runs to a box
    edge while the value stays within resolution.
    """

    inf_sup: float
    sup_inf: float
    gap: float
    resolution_bound: float
    arg_inf_sup: dict
    arg_sup_inf: dict
    closed_form: ClosedFormControls
    within_one_cell: bool
    closed_form_interior: bool
    grid_n: int


def _axis(bounds: tuple[float, float], n: int) -> np.ndarray:
    return np.linspace(bounds[0], bounds[1], n)


def verify_saddle(
    state: GameState, bounds: ControlBounds, pen: QuadraticPenalty, grid_n: int = 201
) -> SaddleReport:
    """Dense grid search of inf_pi sup_theta and sup_theta inf_pi.

    theta1 enters the Hamiltonian without any pi coupling, so it is reduced
    separately; (pi, theta0, slope) are swept as a full tensor.  The report
    carries both orderings, their gap, a curvature-based resolution bound,
    and whether the grid argmin/argmax land within one cell of the closed
    forms.
    """
    c = state.coeffs
    g = state.g
    omd = pen.one_minus_delta
    beta = c.beta
    m2 = float(c.asset_m2)
    a_excess = float(c.alpha_hat) - float(c.r_hat)
    w1 = state.theta1_weight
    base = -g * (state.drift_core - float(c.claim_m1))

    pi_g = _axis(bounds.pi, grid_n)
    t0_g = _axis(bounds.theta0, grid_n)
    t1_g = _axis(bounds.theta1, grid_n)
    s_g = _axis(bounds.theta2_slope, grid_n)

    # H = base + f_pi(pi) + f0(theta0) + f1(theta1) + fs(s) + cross terms
    f_pi = -g * a_excess * pi_g
    f0 = g * float(c.claim_m1) * t0_g - g * t0_g * t0_g / (2.0 * omd)
    f1 = -g * w1 * t1_g - g * t1_g * t1_g / (2.0 * omd)
    fs = -g * m2 * s_g * s_g / (2.0 * omd)

    h = np.empty((grid_n, grid_n, grid_n))
    h[:] = base + f0[None, :, None] + fs[None, None, :]
    h += f_pi[:, None, None]
    h += (-g * beta) * np.multiply.outer(pi_g, t0_g)[:, :, None]
    h += (-g * m2) * np.multiply.outer(pi_g, s_g)[:, None, :]

    t1_best = int(np.argmax(f1))

    sup_theta = h.max(axis=(1, 2)) + f1[t1_best]
    i_pi = int(np.argmin(sup_theta))
    inf_sup = float(sup_theta[i_pi])
    flat = h[i_pi].argmax()
    i_t0_is, i_s_is = np.unravel_index(flat, (grid_n, grid_n))

    inf_pi = h.min(axis=0)
    flat = inf_pi.argmax()
    i_t0_si, i_s_si = np.unravel_index(flat, (grid_n, grid_n))
    sup_inf = float(inf_pi[i_t0_si, i_s_si] + f1[t1_best])
    i_pi_si = int(np.argmin(h[:, i_t0_si, i_s_si]))

    cf = closed_form_controls(state, pen)
    cells = {
        "pi": pi_g[1] - pi_g[0],
        "theta0": t0_g[1] - t0_g[0],
        "theta1": t1_g[1] - t1_g[0],
        "theta2_slope": s_g[1] - s_g[0],
    }
    # curvature of each coordinate problem bounds the grid snapping error
    curv = {
        "pi": g * omd * (beta * beta + m2),
        "theta0": g / omd,
        "theta1": g / omd,
        "theta2_slope": g * m2 / omd,
    }
    resolution_bound = sum(curv[k] * cells[k] ** 2 for k in curv) + 1e-12

    arg_is = {
        "pi": float(pi_g[i_pi]),
        "theta0": float(t0_g[i_t0_is]),
        "theta1": float(t1_g[t1_best]),
        "theta2_slope": float(s_g[i_s_is]),
    }
    arg_si = {
        "pi": float(pi_g[i_pi_si]),
        "theta0": float(t0_g[i_t0_si]),
        "theta1": float(t1_g[t1_best]),
        "theta2_slope": float(s_g[i_s_si]),
    }
    closed = {
        "pi": cf.pi_star,
        "theta0": cf.theta0_star,
        "theta1": cf.theta1_star,
        "theta2_slope": cf.theta2_slope,
    }
    interior = all(
        getattr(bounds, k)[0] < closed[k] < getattr(bounds, k)[1] for k in closed
    )
    within = all(abs(arg_is[k] - closed[k]) <= cells[k] * (1.0 + 1e-9) for k in closed) and all(
        abs(arg_si[k] - closed[k]) <= cells[k] * (1.0 + 1e-9)
        for k in ("theta0", "theta1", "theta2_slope")
    )
    return SaddleReport(
        inf_sup=inf_sup,
        sup_inf=sup_inf,
        gap=abs(inf_sup - sup_inf),
        resolution_bound=resolution_bound,
        arg_inf_sup=arg_is,
        arg_sup_inf=arg_si,
        closed_form=cf,
        within_one_cell=within,
        closed_form_interior=interior,
        grid_n=grid_n,
    )


def hamiltonian_gradient_fd(
    state: GameState,
    pi: float,
    theta: tuple[float, float, float],
    pen: QuadraticPenalty,
    h: float = 1e-5,
) -> np.ndarray:
    """Central finite-difference gradient of H in (pi, theta0, theta1, slope)."""
    point = np.array([pi, *theta], dtype=float)

    def at(v):
        return hamiltonian(state, v[0], (v[1], v[2], v[3]), pen)

    grad = np.empty(4)
    for i in range(4):
        up, dn = point.copy(), point.copy()
        up[i] += h
        dn[i] -= h
        grad[i] = (at(up) - at(dn)) / (2.0 * h)
    return grad


def value_at_zero(
    model: RegimeModel,
    delay: DelayParams,
    pen: QuadraticPenalty,
    x0: float,
    horizon: float,
    dt: float,
    paths: int,
    seed: int,
) -> tuple[float, float]:
    """Monte Carlo value of the game under the closed-form saddle controls.

    Forward-simulates the filtered system, applies the closed-form controls
    pathwise, integrates the exact drift bracket of the distorted wealth
    (X + kappa Y) G, and returns (-x0 - mean integral, standard error).
    The terminal penalty is zero under the quadratic specification.

    The integrated bracket carries the full asset-jump coupling
    pi * integral z (1 + theta2(z)) and the current-surplus delay-noise
    coupling kappa theta1 X, so this estimator agrees with the direct
    estimator mean[-(X_T + kappa Y_T) G_T] - penalty on every
    configuration, not only jump-free ones.
    """
    from .engine import MonteCarloSpec, run_monte_carlo
    from .risk import ClosedFormScenario

    spec = MonteCarloSpec(horizon=horizon, dt=dt, n_paths=paths, seed=seed, x0=x0)
    res = run_monte_carlo(
        model,
        delay,
        pen,
        spec,
        pi_rules=[ClosedFormInvestment(pen)],
        scenarios=[ClosedFormScenario(pen)],
        collect_running_cost=True,
    )
    samples = -res.running_cost[0, 0]
    j = -x0 + float(samples.mean())
    stderr = float(samples.std(ddof=1) / math.sqrt(paths))
    return j, stderr


class ConstantInvestment:
    """Invest a fixed amount at every instant."""

    def __init__(self, value: float):
        self.value = float(value)

    def pi_step(self, ctx) -> np.ndarray:
        return np.full(ctx.n_paths, self.value)

    def __repr__(self):
        return f"ConstantInvestment({self.value})"


class ClosedFormInvestment:
    """First-order-condition investment evaluated from the filtered state."""

    def __init__(self, pen: QuadraticPenalty):
        self.pen = pen

    def pi_step(self, ctx) -> np.ndarray:
        return optimal_pi_arrays(
            ctx.alpha_hat, ctx.r_hat, ctx.claim_m1, ctx.asset_m2, ctx.beta, self.pen.one_minus_delta
        )

    def __repr__(self):
        return f"ClosedFormInvestment(delta={self.pen.delta})"
