"""Scenario measures and the convex risk measure, by Monte Carlo.

A scenario theta = (theta0, theta1, theta2) distorts the filtered world
through the exponential density G: theta0 drives both the innovations
Brownian motion and the claim jumps (exactly as specified; an optional
``theta0_claim`` decouples them for sensitivity runs), theta1 drives the
delay-noise Brownian motion, and theta2(z) = slope * z tilts the asset
jumps.  The risk measure is the sup over a finite scenario family of the
expected distorted loss minus the quadratic penalty, all on common random
numbers so family comparisons are exact.
"""

import math
from dataclasses import dataclass

import numpy as np

from .engine import MonteCarloResult, MonteCarloSpec, run_monte_carlo
from .errors import ScenarioConstraintError, ValidationError
from .filtering import FilterPath, Observations, innovations_increments
from .game import QuadraticPenalty, optimal_pi_arrays
from .grid import Grid
from .market import RegimeModel
from .surplus import DelayParams


@dataclass(frozen=True)
class ScenarioControl:
    """Constant scenario triple; ``theta0_claim`` optionally splits the
    claim-jump coefficient off the Brownian one (default: shared)."""

    theta0: float
    theta1: float
    theta2_slope: float
    theta0_claim: float | None = None

    def __post_init__(self):
        if self.theta0 <= -1.0 or (self.theta0_claim is not None and self.theta0_claim <= -1.0):
            raise ScenarioConstraintError("theta0 must exceed -1 so claim factors stay positive")

    def theta_step(self, ctx, pi, x):
        t0c = self.theta0 if self.theta0_claim is None else self.theta0_claim
        return self.theta0, self.theta1, self.theta2_slope, t0c

    def __repr__(self):
        return f"ScenarioControl({self.theta0}, {self.theta1}, {self.theta2_slope})"


@dataclass(frozen=True)
class LinearFeedbackScenario:
    """theta1 proportional to current surplus times the memory weight.

    theta1(t) = theta1_coeff * X(t) * (1 - exp(-zeta rho) chi_{[0, T-rho]}(t));
    the closed-form worst case is of this shape with coefficient
    (delta - 1) * kappa.
    """

    theta0: float
    theta1_coeff: float
    theta2_slope: float

    def __post_init__(self):
        if self.theta0 <= -1.0:
            raise ScenarioConstraintError("theta0 must exceed -1")

    def theta_step(self, ctx, pi, x):
        w = ctx.delay.memory_weight(ctx.t, ctx.horizon)
        return self.theta0, self.theta1_coeff * x * w, self.theta2_slope

    def __repr__(self):
        return f"LinearFeedbackScenario({self.theta0}, {self.theta1_coeff}, {self.theta2_slope})"


class ClosedFormScenario:
    """Worst-case response evaluated pathwise from the filtered state."""

    def __init__(self, pen: QuadraticPenalty):
        self.pen = pen

    def theta_step(self, ctx, pi, x):
        omd = self.pen.one_minus_delta
        theta0 = omd * (ctx.claim_m1 - pi * ctx.beta)
        w = ctx.delay.memory_weight(ctx.t, ctx.horizon)
        theta1 = -omd * ctx.delay.kappa * x * w
        slope = -omd * pi
        return theta0, theta1, slope

    def __repr__(self):
        return f"ClosedFormScenario(delta={self.pen.delta})"


@dataclass(frozen=True)
class DensityPath:
    """Scenario density along one path; positive everywhere, G(0) = 1."""

    grid: Grid
    g: np.ndarray


def _theta_step_arrays(theta, grid, fp, x, delay, horizon, model):
    """Resolve a scenario object to per-step (theta0, theta1, slope, theta0_claim)."""
    n = grid.n_steps
    if isinstance(theta, tuple) and len(theta) in (3, 4):
        arrs = [np.broadcast_to(np.asarray(v, dtype=float), (n,)).copy() for v in theta]
        if len(arrs) == 3:
            arrs.append(arrs[0])
        return arrs
    from .filtering import filtered_coefficients

    coeffs = filtered_coefficients(model, fp.lambda_hat[:-1])
    t_nodes = grid.times[:-1]
    w = np.array([delay.memory_weight(t, horizon) for t in t_nodes])
    if isinstance(theta, ScenarioControl):
        t0 = np.full(n, theta.theta0)
        t0c = np.full(n, theta.theta0 if theta.theta0_claim is None else theta.theta0_claim)
        return [t0, np.full(n, theta.theta1), np.full(n, theta.theta2_slope), t0c]
    if isinstance(theta, LinearFeedbackScenario):
        if x is None:
            raise ValidationError("feedback scenario needs the surplus path")
        t0 = np.full(n, theta.theta0)
        return [t0, theta.theta1_coeff * x[:-1] * w, np.full(n, theta.theta2_slope), t0]
    if isinstance(theta, ClosedFormScenario):
        if x is None:
            raise ValidationError("closed-form scenario needs the surplus path")
        omd = theta.pen.one_minus_delta
        pi = optimal_pi_arrays(
            coeffs.alpha_hat, coeffs.r_hat, coeffs.claim_m1, coeffs.asset_m2, coeffs.beta, omd
        )
        t0 = omd * (coeffs.claim_m1 - pi * coeffs.beta)
        return [t0, -omd * delay.kappa * x[:-1] * w, -omd * pi, t0]
    raise ValidationError(f"unsupported scenario specification {theta!r}")


def simulate_density(
    theta,
    model: RegimeModel,
    obs: Observations,
    fp: FilterPath,
    dw1: np.ndarray,
    x: np.ndarray | None = None,
    delay: DelayParams | None = None,
    horizon: float | None = None,
) -> DensityPath:
    """Exponential scenario density along one observed path.

    Log-Euler between marks with the innovations increments reconstructed
    from the filter, multiplicative factors (1 + theta0) at claim marks and
    (1 + slope z) at asset marks, and the filtered compensator drift
    -(theta0 lambda_hat + slope asset_m1_hat) dt.  The density is a pure
    functional of the observed drivers, so no fresh randomness is drawn.

    ``theta`` may be a scenario object or a tuple of per-step arrays
    (theta0, theta1, slope[, theta0_claim]).  Feedback scenarios need the
    surplus path ``x``; ``delay``/``horizon`` default to a zero-delay
    reading when omitted.
    """
    grid = obs.grid
    n = grid.n_steps
    dt = grid.dt
    if dw1.shape != (n,):
        raise ValidationError("dw1 must hold one increment per grid step")
    if delay is None:
        delay = DelayParams(rho=0.0, zeta=0.0, kappa=0.0, theta_flow=0.0, xi=0.0)
    if horizon is None:
        horizon = grid.horizon
    t0, t1, sl, t0c = _theta_step_arrays(theta, grid, fp, x, delay, horizon, model)

    lam = fp.lambda_hat[:-1]
    claim_int_hat = lam @ model.claim_intensity
    asset_m1_hat = lam @ model.asset_m1_rate
    dwhat = innovations_increments(model, obs, fp)

    dlog = (
        t0 * dwhat
        + t1 * dw1
        - 0.5 * (t0 * t0 + t1 * t1) * dt
        - (t0c * claim_int_hat + sl * asset_m1_hat) * dt
    )
    for i in range(obs.claim_marks.count):
        k = int(obs.claim_marks.steps[i])
        factor = 1.0 + t0c[k]
        if factor <= 0.0:
            raise ScenarioConstraintError("claim-jump density factor fell to or below zero")
        dlog[k] += math.log(factor)
    for i in range(obs.asset_marks.count):
        k = int(obs.asset_marks.steps[i])
        factor = 1.0 + sl[k] * float(obs.asset_marks.sizes[i])
        if factor <= 0.0:
            raise ScenarioConstraintError("asset-jump density factor fell to or below zero")
        dlog[k] += math.log(factor)

    g = np.concatenate(([1.0], np.exp(np.cumsum(dlog))))
    return DensityPath(grid=grid, g=g)


@dataclass(frozen=True)
class ScenarioRow:
    """One scenario's contribution to the risk estimate."""

    scenario: object
    rho_hat: float
    stderr: float
    mean_g_terminal: float
    penalty_hat: float


@dataclass(frozen=True)
class RiskReport:
    rho_hat: float
    stderr: float
    argmax_scenario: object
    rows: list


def scenario_values(
    result: MonteCarloResult,
    kappa: float,
    rule_index: int = 0,
    terminal_bonus: float = 0.0,
) -> np.ndarray:
    """(S, n) per-path estimator samples -(X_T + kappa Y_T + bonus) G_T - penalty integral."""
    chi = result.x_terminal[rule_index] + kappa * result.y_terminal[rule_index] + terminal_bonus
    return -chi[None, :] * result.g_terminal[rule_index] - result.penalty_integral[rule_index]


def evaluate_risk_measure(
    chi: np.ndarray, g_terminal: np.ndarray, penalty_integral: np.ndarray
) -> tuple[float, int, np.ndarray]:
    """Finite-family sup of mean(-chi G) - penalty for a given terminal wealth.

    ``chi`` is (n,), the other two (S, n).  Returns (rho, argmax index,
    per-scenario means); convex and monotone in chi by construction.
    """
    vals = (-chi[None, :] * g_terminal - penalty_integral).mean(axis=1)
    idx = int(np.argmax(vals))
    return float(vals[idx]), idx, vals


def penalty(
    theta,
    pi_rule,
    model: RegimeModel,
    delay: DelayParams,
    pen: QuadraticPenalty,
    horizon: float,
    dt: float,
    paths: int,
    seed: int,
    x0: float = 1.0,
) -> tuple[float, float]:
    """Monte Carlo of the quadratic scenario penalty
    E[ integral (theta0^2 + theta1^2 + slope^2 m2_hat) / (2 (1 - delta)) G dt ]."""
    spec = MonteCarloSpec(horizon=horizon, dt=dt, n_paths=paths, seed=seed, x0=x0)
    res = run_monte_carlo(model, delay, pen, spec, pi_rules=[pi_rule], scenarios=[theta])
    samples = res.penalty_integral[0, 0]
    return float(samples.mean()), float(samples.std(ddof=1) / math.sqrt(paths))


def risk_measure(
    pi_rule,
    scenario_family,
    model: RegimeModel,
    delay: DelayParams,
    pen: QuadraticPenalty,
    horizon: float,
    dt: float,
    paths: int,
    seed: int,
    x0: float = 1.0,
    terminal_bonus: float = 0.0,
) -> RiskReport:
    """Risk of the terminal surplus plus weighted noisy memory under one rule.

    The sup over scenarios runs on common random numbers: per-path seeds
    depend only on (seed, path index), never on the scenario, so enlarging
    the family can only raise the estimate.
    """
    if not scenario_family:
        raise ValidationError("scenario family must not be empty")
    spec = MonteCarloSpec(horizon=horizon, dt=dt, n_paths=paths, seed=seed, x0=x0)
    res = run_monte_carlo(
        model, delay, pen, spec, pi_rules=[pi_rule], scenarios=list(scenario_family)
    )
    vals = scenario_values(res, delay.kappa, 0, terminal_bonus)
    rows = []
    for si, scen in enumerate(scenario_family):
        rows.append(
            ScenarioRow(
                scenario=scen,
                rho_hat=float(vals[si].mean()),
                stderr=float(vals[si].std(ddof=1) / math.sqrt(paths)),
                mean_g_terminal=float(res.g_terminal[0, si].mean()),
                penalty_hat=float(res.penalty_integral[0, si].mean()),
            )
        )
    best = max(range(len(rows)), key=lambda i: rows[i].rho_hat)
    return RiskReport(
        rho_hat=rows[best].rho_hat,
        stderr=rows[best].stderr,
        argmax_scenario=scenario_family[best],
        rows=rows,
    )


@dataclass(frozen=True)
class ObjectiveReport:
    j_hat: float
    stderr: float
    argmin_rule: object
    argmax_scenario: object
    rho_matrix: np.ndarray  # (R, S) per-pair estimates


def objective_game(
    pi_family,
    scenario_family,
    model: RegimeModel,
    delay: DelayParams,
    pen: QuadraticPenalty,
    horizon: float,
    dt: float,
    paths: int,
    seed: int,
    x0: float = 1.0,
) -> ObjectiveReport:
    """min over investment rules of the max over scenarios, common randomness."""
    if not pi_family or not scenario_family:
        raise ValidationError("need nonempty rule and scenario families")
    spec = MonteCarloSpec(horizon=horizon, dt=dt, n_paths=paths, seed=seed, x0=x0)
    res = run_monte_carlo(
        model, delay, pen, spec, pi_rules=list(pi_family), scenarios=list(scenario_family)
    )
    n_rules, n_scen = len(pi_family), len(scenario_family)
    rho = np.empty((n_rules, n_scen))
    se = np.empty((n_rules, n_scen))
    for ri in range(n_rules):
        vals = scenario_values(res, delay.kappa, ri)
        rho[ri] = vals.mean(axis=1)
        se[ri] = vals.std(axis=1, ddof=1) / math.sqrt(paths)
    best_s = rho.argmax(axis=1)
    per_rule = rho[np.arange(n_rules), best_s]
    ri = int(np.argmin(per_rule))
    si = int(best_s[ri])
    return ObjectiveReport(
        j_hat=float(per_rule[ri]),
        stderr=float(se[ri, si]),
        argmin_rule=pi_family[ri],
        argmax_scenario=scenario_family[si],
        rho_matrix=rho,
    )
