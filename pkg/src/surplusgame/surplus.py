"""Insurer surplus with noisy memory: a stochastic delay equation.

The surplus X feeds a sliding-window stochastic integral Y (noisy memory),
its window average Ybar, and the pointwise lag U = X(t - rho).  A capital
inflow/outflow proportional to past performance couples them back into the
X drift.
"""

import math
from dataclasses import dataclass

import numpy as np

from .chain import ChainPath
from .errors import GridAlignmentError, MissingHistoryError, ValidationError
from .grid import Grid
from .market import MarketPath, RegimeModel
from .rng import W1, stream_rng


@dataclass(frozen=True)
class DelayParams:
    """Delay and capital-flow parameters.

    rho is the window length (must be a grid multiple at run time), zeta
    the window averaging rate, kappa the terminal weight on the noisy
    memory, theta_flow and xi the capital-flow weights on X - Ybar and
    X - U.  ``literal_xi_sign`` flips the xi U drift term to the printed
    minus-sign variant for comparison runs; the default follows the
    capital-flow algebra.
    """

    rho: float
    zeta: float
    kappa: float
    theta_flow: float
    xi: float
    literal_xi_sign: bool = False

    def __post_init__(self):
        for name in ("rho", "zeta", "kappa", "theta_flow", "xi"):
            if getattr(self, name) < 0.0:
                raise ValidationError(f"{name} must be nonnegative")

    @property
    def window_normalizer(self) -> float:
        """n(zeta, rho) = integral of exp(zeta s) over [-rho, 0]."""
        if self.zeta > 0.0:
            return (1.0 - math.exp(-self.zeta * self.rho)) / self.zeta
        return self.rho

    @property
    def theta_bar(self) -> float:
        """theta_flow / n(zeta, rho); zero for an empty window."""
        n = self.window_normalizer
        return self.theta_flow / n if n > 0.0 else 0.0

    @property
    def lag_decay(self) -> float:
        return math.exp(-self.zeta * self.rho)

    def memory_weight(self, t: float, horizon: float) -> float:
        """1 - exp(-zeta rho) * chi_{[0, horizon - rho]}(t)."""
        return 1.0 - self.lag_decay * (1.0 if t <= horizon - self.rho else 0.0)

    @property
    def xi_drift_sign(self) -> float:
        return -1.0 if self.literal_xi_sign else 1.0


@dataclass(frozen=True)
class SurplusPath:
    """Grid-aligned surplus trajectory with its delay functionals."""

    grid: Grid
    x: np.ndarray
    y: np.ndarray
    ybar: np.ndarray
    u: np.ndarray
    dw1: np.ndarray
    flow: np.ndarray
    pi: np.ndarray


def capital_flow(t: float, x: float, ybar: float, u: float, p: DelayParams) -> float:
    """Capital inflow/outflow rate (theta + xi) X - theta Ybar - xi U."""
    return (p.theta_flow + p.xi) * x - p.theta_flow * ybar - p.xi * u


def step_noisy_memory(
    y: float,
    x_now: float,
    dw1_now: float,
    x_lag: float,
    dw1_lag: float,
    p: DelayParams,
    dt: float,
) -> float:
    """One Euler step of the noisy memory using the exact lagged increment.

    Y_{k+1} = Y_k - zeta Y_k dt + X_k dW1_k - exp(-zeta rho) X_{k-m} dW1_{k-m},
    where lagged values before time zero are zero.  Callers own the history
    bookkeeping: pass x_lag = dw1_lag = 0 for steps with no history yet.
    """
    for v, name in ((x_lag, "x_lag"), (dw1_lag, "dw1_lag")):
        if v is None:
            raise MissingHistoryError(f"{name} is required (use 0 before time zero)")
    return y - p.zeta * y * dt + x_now * dw1_now - p.lag_decay * x_lag * dw1_lag


def noisy_memory_path(
    x: np.ndarray, dw1: np.ndarray, p: DelayParams, dt: float
) -> np.ndarray:
    """Run the noisy-memory recursion along full paths.

    ``x`` has one more node than ``dw1`` along the last axis; both may
    carry leading path axes.  Returns Y at every node, Y(0) = 0.
    """
    x = np.asarray(x, dtype=float)
    dw1 = np.asarray(dw1, dtype=float)
    n = dw1.shape[-1]
    if x.shape[-1] != n + 1:
        raise GridAlignmentError("x must have one more node than dw1 has steps")
    m = Grid(dt, n).steps_of(p.rho, "rho")
    decay = p.lag_decay
    u = x[..., :-1] * dw1
    y = np.zeros(x.shape)
    for k in range(n):
        # m == 0 lags by zero steps, so the increment cancels exactly and Y stays 0
        lagged = u[..., k - m] if k - m >= 0 else 0.0
        y[..., k + 1] = y[..., k] - p.zeta * y[..., k] * dt + u[..., k] - decay * lagged
    return y


def noisy_memory_quadrature(
    x: np.ndarray, dw1: np.ndarray, p: DelayParams, dt: float
) -> np.ndarray:
    """Direct window quadrature Y_k = sum_{j=k-m}^{k-1} exp(zeta (t_j - t_k)) X_j dW1_j.

    Independent of the recursion; used to cross-check it.
    """
    x = np.asarray(x, dtype=float)
    dw1 = np.asarray(dw1, dtype=float)
    n = dw1.shape[-1]
    m = Grid(dt, n).steps_of(p.rho, "rho")
    u = x[..., :-1] * dw1
    y = np.zeros(x.shape)
    for k in range(1, n + 1):
        lo = max(0, k - m)
        if lo >= k:
            continue
        j = np.arange(lo, k)
        weights = np.exp(p.zeta * (j - k) * dt)
        y[..., k] = np.sum(u[..., lo:k] * weights, axis=-1)
    return y


def _pi_per_step(strategy, grid: Grid, x0: float) -> np.ndarray | None:
    """Resolve a strategy given as scalar or per-step array; None if callable."""
    if np.isscalar(strategy):
        return np.full(grid.n_steps, float(strategy))
    if isinstance(strategy, np.ndarray):
        if strategy.shape != (grid.n_steps,):
            raise GridAlignmentError(
                f"strategy array must have one value per step, got {strategy.shape}"
            )
        return strategy.astype(float)
    if callable(strategy):
        return None
    raise ValidationError("strategy must be a scalar, a per-step array, or callable(t, x)")


def simulate_surplus(
    model: RegimeModel,
    delay: DelayParams,
    market: MarketPath,
    chain: ChainPath,
    strategy,
    x0: float,
    seed: int,
    path: int = 0,
) -> SurplusPath:
    """Euler integration of the delayed surplus along one market path.

    The drift is premium + (r - theta - xi) X + pi (alpha - r) + theta Ybar
    + xi U (sign of the xi U term per ``DelayParams.literal_xi_sign``),
    with the regime frozen at each step's left endpoint; the noise is
    pi beta dW plus pi times asset jumps minus claim jumps, and the noisy
    memory runs on an independent Brownian stream drawn from ``seed``.
    X is held at x0 on [-rho, 0] and pre-time-zero W1 increments are zero,
    so Y(0) = 0.

    ``strategy`` is the invested amount: a constant, a per-step array
    (e.g. evaluated from a filtered state), or a callable (t, x) -> pi.
    """
    grid = market.grid
    grid.require_matches(chain.grid, "market vs chain grid")
    n = grid.n_steps
    dt = grid.dt
    m = grid.steps_of(delay.rho, "rho")

    rng = stream_rng(seed, path, W1)
    dw1 = rng.normal(0.0, math.sqrt(dt), size=n)

    regimes = chain.states[:-1]
    asset_sums = market.asset_marks.sums_per_step(n)
    claim_sums = market.claim_marks.sums_per_step(n)

    pi_arr = _pi_per_step(strategy, grid, x0)
    norm = delay.window_normalizer
    theta, xi = delay.theta_flow, delay.xi
    xi_sign = delay.xi_drift_sign
    decay = delay.lag_decay
    p = model.premium
    beta = model.beta

    x = np.empty(n + 1)
    y = np.zeros(n + 1)
    ybar = np.zeros(n + 1)
    u = np.empty(n + 1)
    flow = np.empty(n + 1)
    pi_used = np.empty(n)
    x[0] = x0
    u[0] = x0

    for k in range(n):
        j = regimes[k]
        xk, yk = x[k], y[k]
        ybark = yk / norm if (m > 0 and norm > 0.0) else 0.0
        uk = x[k - m] if k - m >= 0 else x0
        ybar[k] = ybark
        u[k] = uk
        flow[k] = capital_flow(k * dt, xk, ybark, uk, delay)
        pi_k = pi_arr[k] if pi_arr is not None else float(strategy(k * dt, xk))
        pi_used[k] = pi_k

        drift = (
            p
            + (model.r[j] - theta - xi) * xk
            + pi_k * (model.alpha[j] - model.r[j])
            + theta * ybark
            + xi_sign * xi * uk
        )
        x[k + 1] = (
            xk + drift * dt + pi_k * beta * market.dw[k] + pi_k * asset_sums[k] - claim_sums[k]
        )

        x_lag = x[k - m] if k - m >= 0 else x0
        dw1_lag = dw1[k - m] if k - m >= 0 else 0.0
        y[k + 1] = step_noisy_memory(yk, xk, dw1[k], x_lag, dw1_lag, delay, dt)

    ybar[n] = y[n] / norm if (m > 0 and norm > 0.0) else 0.0
    u[n] = x[n - m] if n - m >= 0 else x0
    flow[n] = capital_flow(n * dt, x[n], ybar[n], u[n], delay)

    return SurplusPath(grid=grid, x=x, y=y, ybar=ybar, u=u, dw1=dw1, flow=flow, pi=pi_used)


@dataclass(frozen=True)
class AdmissibilityReport:
    """Magnitudes of the admissibility integrals along one path (not a gate)."""

    pi_sq_integral: float
    drift_abs_integral: float
    variance_integral: float
    jump_integral: float
    all_finite: bool


def admissibility_report(path: SurplusPath, model: RegimeModel) -> AdmissibilityReport:
    """Evaluate the drift / variance / jump admissibility integrals numerically.

    Left-endpoint quadrature along the realized path of, summed over states,
    int |premium + r_j X + pi (alpha_j - r_j) - flow| dt,
    int pi^2 beta^2 dt, and int [pi^2 eps_j E z^2 + lambda_j E z^2] dt.
    A report only, never a gate.
    """
    dt = path.grid.dt
    pi = path.pi
    x, flow = path.x[:-1], path.flow[:-1]
    d = model.num_states

    drift_abs = 0.0
    for j in range(d):
        drift_j = model.premium + model.r[j] * x + pi * (model.alpha[j] - model.r[j]) - flow
        drift_abs += float(np.sum(np.abs(drift_j)) * dt)

    pi_sq = float(np.sum(pi * pi) * dt)
    variance = d * pi_sq * model.beta * model.beta
    jump = float(pi_sq * model.asset_m2_rate.sum() + path.grid.horizon * model.claim_m2_rate.sum())
    finite = all(map(math.isfinite, (pi_sq, drift_abs, variance, jump)))
    return AdmissibilityReport(
        pi_sq_integral=pi_sq,
        drift_abs_integral=drift_abs,
        variance_integral=variance,
        jump_integral=jump,
        all_finite=finite,
    )
