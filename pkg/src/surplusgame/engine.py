"""Vectorized Monte Carlo over many paths at once.

One fused time loop advances, for a whole chunk of paths, the hidden chain
drivers, the filter, the surplus under each investment rule, and the
scenario densities under each scenario.  Runtime state per step is a set
of (n_paths,) arrays, so path count scales without per-path Python loops.

Every path draws all of its randomness from counter-based streams keyed by
(seed, path index, stream tag); results are therefore independent of chunk
size and of any parallel scheduling a caller might add.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .chain import _simulate_chain_with_rng
from .errors import FilterUnderflowError, ScenarioConstraintError, ValidationError
from .filtering import _mark_log_ratios, _reference_weights
from .game import hamiltonian_kernel
from .grid import Grid
from .market import _draw_marks, RegimeModel
from .rng import CHAIN, MARKET, W1, stream_rng
from .surplus import DelayParams


@dataclass(frozen=True)
class MonteCarloSpec:
    """Run geometry: horizon, step, path count, master seed, initial surplus."""

    horizon: float
    dt: float
    n_paths: int
    seed: int
    x0: float
    chunk_size: int = 16384


@dataclass
class StepContext:
    """Filtered per-path quantities handed to rules and scenarios each step."""

    t: float
    n_paths: int
    beta: float
    alpha_hat: np.ndarray
    r_hat: np.ndarray
    claim_m1: np.ndarray
    claim_intensity: np.ndarray
    asset_m1: np.ndarray
    asset_m2: np.ndarray
    delay: DelayParams
    horizon: float


@dataclass
class MonteCarloResult:
    """Per-path terminal quantities, stacked over rules (R) and scenarios (S)."""

    x_terminal: np.ndarray  # (R, n)
    y_terminal: np.ndarray  # (R, n)
    g_terminal: np.ndarray  # (R, S, n)
    penalty_integral: np.ndarray  # (R, S, n)
    running_cost: np.ndarray | None  # (R, S, n) integral of the running game cost
    innovations_terminal: np.ndarray  # (n,)


@dataclass
class _SparseMarks:
    """Chunk-wide marks sorted by step, with per-step slice pointers."""

    paths: np.ndarray
    steps: np.ndarray
    sizes: np.ndarray
    ptr: np.ndarray

    @classmethod
    def build(cls, paths, steps, sizes, n_steps):
        paths = np.concatenate(paths) if paths else np.zeros(0, dtype=int)
        steps = np.concatenate(steps) if steps else np.zeros(0, dtype=int)
        sizes = np.concatenate(sizes) if sizes else np.zeros(0)
        order = np.argsort(steps, kind="stable")
        paths, steps, sizes = paths[order], steps[order], sizes[order]
        ptr = np.searchsorted(steps, np.arange(n_steps + 1))
        return cls(paths=paths, steps=steps, sizes=sizes, ptr=ptr)

    def at(self, k):
        lo, hi = self.ptr[k], self.ptr[k + 1]
        return self.paths[lo:hi], self.sizes[lo:hi]


def _chunk_drivers(model, grid, seed, i0, i1):
    """Draw chain, market, and delay-noise randomness for paths [i0, i1)."""
    n = i1 - i0
    k = grid.n_steps
    dt = grid.dt
    regimes = np.empty((n, k), dtype=np.int8)
    dw = np.empty((n, k))
    dw1 = np.empty((n, k))
    cp, cs, cz = [], [], []
    ap, asn, az = [], [], []
    for i in range(n):
        path = i0 + i
        cpath = _simulate_chain_with_rng(model.chain, grid, stream_rng(seed, path, CHAIN))
        reg = cpath.states[:-1]
        regimes[i] = reg
        rng_m = stream_rng(seed, path, MARKET)
        dw[i] = rng_m.normal(0.0, math.sqrt(dt), size=k)
        claims = _draw_marks(rng_m, model.claim_intensity, model.claim_law, reg, dt)
        assets = _draw_marks(rng_m, model.asset_intensity, model.asset_law, reg, dt)
        if claims.count:
            cp.append(np.full(claims.count, i))
            cs.append(claims.steps)
            cz.append(claims.sizes)
        if assets.count:
            ap.append(np.full(assets.count, i))
            asn.append(assets.steps)
            az.append(assets.sizes)
        dw1[i] = stream_rng(seed, path, W1).normal(0.0, math.sqrt(dt), size=k)
    claims = _SparseMarks.build(cp, cs, cz, k)
    assets = _SparseMarks.build(ap, asn, az, k)
    return regimes, dw, dw1, claims, assets


def _per_step_dense(sparse: _SparseMarks, n, k, counts_dtype=np.int32):
    counts = np.zeros((n, k), dtype=counts_dtype)
    sums = np.zeros((n, k))
    np.add.at(counts, (sparse.paths, sparse.steps), 1)
    np.add.at(sums, (sparse.paths, sparse.steps), sparse.sizes)
    return counts, sums


def _theta_tuple(theta):
    """Normalize a scenario step output to (theta0, theta1, slope, theta0_claim)."""
    if len(theta) == 3:
        t0, t1, s = theta
        return t0, t1, s, t0
    return theta


def run_monte_carlo(
    model: RegimeModel,
    delay: DelayParams,
    pen,
    spec: MonteCarloSpec,
    pi_rules,
    scenarios,
    collect_running_cost: bool = False,
) -> MonteCarloResult:
    """Fused simulation of rules x scenarios on common random numbers.

    ``pi_rules`` objects expose ``pi_step(ctx) -> (n,) array``; ``scenarios``
    expose ``theta_step(ctx, pi, x)`` returning (theta0, theta1, slope[,
    theta0_claim]), scalars or per-path arrays.  Per-path seeds depend only
    on (spec.seed, path index), never on the rule or scenario, so the
    finite-family sup and inf are taken on common randomness.
    """
    if not pi_rules or not scenarios:
        raise ValidationError("need at least one investment rule and one scenario")
    grid = Grid.from_horizon(spec.horizon, spec.dt)
    n_steps, dt = grid.n_steps, grid.dt
    m_lag = grid.steps_of(delay.rho, "rho")
    n_rules, n_scen = len(pi_rules), len(scenarios)
    omd = pen.one_minus_delta

    d = model.num_states
    gen = model.chain.generator
    q0 = model.chain.initial_distribution
    phi = model.phi
    beta = model.beta
    beta2 = beta * beta
    ref_w = _reference_weights(model, None)
    comp_const = (
        float(ref_w @ model.asset_intensity)
        - model.asset_intensity
        + float(ref_w @ model.claim_intensity)
        - model.claim_intensity
    )
    norm = delay.window_normalizer
    theta_flow, xi, zeta, kappa = delay.theta_flow, delay.xi, delay.zeta, delay.kappa
    theta_bar = delay.theta_bar
    xi_sign = delay.xi_drift_sign
    decay = delay.lag_decay
    premium = model.premium

    total = spec.n_paths
    x_t = np.empty((n_rules, total))
    y_t = np.empty((n_rules, total))
    g_t = np.empty((n_rules, n_scen, total))
    pen_acc_all = np.empty((n_rules, n_scen, total))
    run_acc_all = np.empty((n_rules, n_scen, total)) if collect_running_cost else None
    what_t = np.empty(total)

    # ratio vectors of atomic mark sizes recur constantly; cache those only
    atoms = {
        0: {law.atom for law in model.asset_law if law.is_atomic},
        1: {law.atom for law in model.claim_law if law.is_atomic},
    }
    ratio_cache: dict[tuple[int, float], np.ndarray] = {}

    def mark_ratios(measure_id, z, intensities, laws):
        if z not in atoms[measure_id]:
            return _mark_log_ratios(z, intensities, laws, ref_w)
        key = (measure_id, z)
        got = ratio_cache.get(key)
        if got is None:
            got = _mark_log_ratios(z, intensities, laws, ref_w)
            ratio_cache[key] = got
        return got

    for i0 in range(0, total, spec.chunk_size):
        i1 = min(total, i0 + spec.chunk_size)
        n = i1 - i0
        regimes, dw, dw1, claims, assets = _chunk_drivers(model, grid, spec.seed, i0, i1)
        claim_counts, claim_sums = _per_step_dense(claims, n, n_steps)
        _, asset_sums = _per_step_dense(assets, n, n_steps)

        lg = np.zeros((n, d))
        qb = np.tile(q0, (n, 1))
        x = np.full((n_rules, n), spec.x0)
        y = np.zeros((n_rules, n))
        log_g = np.zeros((n_rules, n_scen, n))
        pen_acc = np.zeros((n_rules, n_scen, n))
        run_acc = np.zeros((n_rules, n_scen, n)) if collect_running_cost else None
        what = np.zeros(n)
        # ring buffers of lagged surplus and noisy-memory increments
        x_hist = np.full((max(m_lag, 1), n_rules, n), spec.x0)
        u_hist = np.zeros((max(m_lag, 1), n_rules, n))

        for k in range(n_steps):
            t = k * dt
            reg = regimes[:, k]
            dpsi1 = phi[reg] * dt + beta * dw[:, k]

            q = np.exp(lg) * qb
            tot_q = q.sum(axis=1)
            if np.any(tot_q <= 0.0) or not np.all(np.isfinite(tot_q)):
                raise FilterUnderflowError("batch filter normalizer collapsed")
            lam = q / tot_q[:, None]

            ctx = StepContext(
                t=t,
                n_paths=n,
                beta=beta,
                alpha_hat=lam @ model.alpha,
                r_hat=lam @ model.r,
                claim_m1=lam @ model.claim_m1_rate,
                claim_intensity=lam @ model.claim_intensity,
                asset_m1=lam @ model.asset_m1_rate,
                asset_m2=lam @ model.asset_m2_rate,
                delay=delay,
                horizon=spec.horizon,
            )
            dwhat = (dpsi1 - (lam @ phi) * dt) / beta
            what += dwhat

            r_true = model.r[reg]
            alpha_true = model.alpha[reg]
            mem_w = delay.memory_weight(t, spec.horizon)
            a_paths, a_sizes = assets.at(k)

            for ri, rule in enumerate(pi_rules):
                pi = np.asarray(rule.pi_step(ctx), dtype=float)
                xr, yr = x[ri], y[ri]
                ybar = yr / norm if (m_lag > 0 and norm > 0.0) else np.zeros(n)
                ur = x_hist[k % m_lag, ri].copy() if m_lag > 0 else xr

                for si, scen in enumerate(scenarios):
                    t0, t1, sl, t0c = _theta_tuple(scen.theta_step(ctx, pi, xr))
                    gk = np.exp(log_g[ri, si])
                    pen_acc[ri, si] += (
                        gk
                        * (t0 * t0 + t1 * t1 + sl * sl * ctx.asset_m2)
                        / (2.0 * omd)
                        * dt
                    )
                    if collect_running_cost:
                        # exact expected-drift bracket of the distorted wealth
                        # (X + kappa Y) G for the simulated dynamics: the asset-jump
                        # coupling carries its first moment,
                        # pi * integral z (1 + theta2) nu_hat; the indicator-weighted
                        # delay-noise coupling is exact in expectation because the
                        # lagged kill one window ahead relays through the martingale
                        # property of G
                        drift_core = (
                            premium
                            + (ctx.r_hat - theta_flow - xi) * xr
                            + (theta_bar - kappa * zeta) * yr
                            + xi_sign * xi * ur
                        )
                        ltilde = -hamiltonian_kernel(
                            drift_core,
                            ctx.alpha_hat - ctx.r_hat,
                            beta,
                            ctx.claim_m1,
                            ctx.asset_m2,
                            kappa * xr * mem_w,
                            gk,
                            pi,
                            t0,
                            t1,
                            sl,
                            omd,
                            theta2_lin=ctx.asset_m1 + sl * ctx.asset_m2,
                        )
                        run_acc[ri, si] += ltilde * dt

                    dlg_g = (
                        t0 * dwhat
                        + t1 * dw1[:, k]
                        - 0.5 * (t0 * t0 + t1 * t1) * dt
                        - (t0c * ctx.claim_intensity + sl * ctx.asset_m1) * dt
                    )
                    cc = claim_counts[:, k]
                    if cc.any():
                        factor = 1.0 + t0c
                        if np.any(np.where(cc > 0, factor, 1.0) <= 0.0):
                            raise ScenarioConstraintError(
                                "claim-jump density factor 1 + theta0 fell to or below zero"
                            )
                        dlg_g = dlg_g + cc * np.log1p(np.broadcast_to(t0c, (n,)))
                    log_g[ri, si] += dlg_g
                    if a_paths.size:
                        sl_arr = np.broadcast_to(sl, (n,))
                        factors = 1.0 + sl_arr[a_paths] * a_sizes
                        if np.any(factors <= 0.0):
                            raise ScenarioConstraintError(
                                "asset-jump density factor 1 + theta2(z) fell to or below zero"
                            )
                        np.add.at(log_g[ri, si], a_paths, np.log(factors))

                drift = (
                    premium
                    + (r_true - theta_flow - xi) * xr
                    + pi * (alpha_true - r_true)
                    + theta_flow * ybar
                    + xi_sign * xi * ur
                )
                x_next = (
                    xr
                    + drift * dt
                    + pi * beta * dw[:, k]
                    + pi * asset_sums[:, k]
                    - claim_sums[:, k]
                )
                u_now = xr * dw1[:, k]
                if m_lag == 0:
                    u_lag = u_now  # zero-length window: increments cancel exactly
                elif k >= m_lag:
                    u_lag = u_hist[k % m_lag, ri]
                else:
                    u_lag = np.zeros(n)
                y[ri] = yr - zeta * yr * dt + u_now - decay * u_lag
                if m_lag > 0:
                    u_hist[k % m_lag, ri] = u_now
                    x_hist[k % m_lag, ri] = xr
                x[ri] = x_next

            # advance the filter with step-k data (marks booked at step end)
            dlg = np.outer(dpsi1, phi / beta2)
            dlg -= 0.5 * (phi * phi / beta2) * dt
            dlg += comp_const * dt
            c_paths, c_sizes = claims.at(k)
            for p_idx, z in zip(c_paths, c_sizes):
                dlg[p_idx] += mark_ratios(1, float(z), model.claim_intensity, model.claim_law)
            for p_idx, z in zip(a_paths, a_sizes):
                dlg[p_idx] += mark_ratios(0, float(z), model.asset_intensity, model.asset_law)

            lg_mid = lg + 0.5 * dlg
            m_op = gen[None, :, :] * np.exp(lg_mid[:, None, :] - lg_mid[:, :, None])
            qb_mid = qb + 0.5 * dt * np.einsum("nij,nj->ni", m_op, qb)
            qb = qb + dt * np.einsum("nij,nj->ni", m_op, qb_mid)
            lg = lg + dlg
            lg -= lg.max(axis=1, keepdims=True)
            qb_tot = qb.sum(axis=1)
            if np.any(qb_tot <= 0.0) or not np.all(np.isfinite(qb_tot)):
                raise FilterUnderflowError("batch transformed filter lost positivity")
            qb /= qb_tot[:, None]

        x_t[:, i0:i1] = x
        y_t[:, i0:i1] = y
        g_t[:, :, i0:i1] = np.exp(log_g)
        pen_acc_all[:, :, i0:i1] = pen_acc
        if collect_running_cost:
            run_acc_all[:, :, i0:i1] = run_acc
        what_t[i0:i1] = what

    return MonteCarloResult(
        x_terminal=x_t,
        y_terminal=y_t,
        g_terminal=g_t,
        penalty_integral=pen_acc_all,
        running_cost=run_acc_all,
        innovations_terminal=what_t,
    )
