"""Hidden-chain filtering from price and claim observations.

Two routes to the filtered state:

* :func:`run_filter` integrates per-state log likelihood processes and the
  transformed unnormalized filter ODE dqbar/dt = L^-1 A L qbar, then
  normalizes by a Bayes-rule quotient.
* :func:`exact_discrete_filter` is an independent discrete-time Bayes
  oracle on the same grid (predict with exp(A dt), correct with the exact
  per-step observation likelihood).

Both see the same data: the continuous log-price increments and the exact
jump/claim marks.  Likelihoods of marks are taken against a common
dominating measure, counting measure on the atoms plus Lebesgue elsewhere,
so point-mass and continuous size laws can coexist across states.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm

from .errors import FilterUnderflowError, GridAlignmentError, ValidationError
from .grid import Grid
from .market import JumpSizeLaw, MarkList, MarketPath, RegimeModel

# Mark log-likelihood ratios are floored here: a state this unlikely is
# numerically dead, and the floor keeps the transformed generator finite.
_LOG_RATIO_FLOOR = -60.0


@dataclass(frozen=True)
class Observations:
    """What the insurer actually sees, on one grid.

    ``dpsi1`` is the per-step increment of the continuous log-price part
    (drift (alpha_j - beta^2/2) dt plus beta dW realized); the mark lists
    carry the exact asset-jump and claim events.
    """

    grid: Grid
    dpsi1: np.ndarray
    asset_marks: MarkList
    claim_marks: MarkList

    def __post_init__(self):
        if self.dpsi1.shape != (self.grid.n_steps,):
            raise GridAlignmentError("dpsi1 must hold one increment per grid step")
        horizon = self.grid.horizon * (1.0 + 1e-12)
        for marks, name in ((self.asset_marks, "asset"), (self.claim_marks, "claim")):
            if marks.count and (marks.times.min() < 0.0 or marks.times.max() > horizon):
                raise ValidationError(f"{name} mark times leave the grid horizon")

    @classmethod
    def from_market(cls, market: MarketPath) -> "Observations":
        return cls(
            grid=market.grid,
            dpsi1=market.dlog_s_cont,
            asset_marks=market.asset_marks,
            claim_marks=market.claim_marks,
        )


@dataclass(frozen=True)
class FilterPath:
    """Filter output per grid node.

    ``log_gamma`` holds the per-state log likelihood processes, ``qbar``
    the transformed unnormalized filter, ``q = diag(gamma) qbar`` the
    unnormalized filter, and ``lambda_hat = q / <q, 1>`` the filtered
    state.  When underflow protection kicked in, the stored gamma and qbar
    are rescaled per node and the shifts are recorded: literal values are
    ``exp(log_gamma + gamma_shift)`` and ``qbar * exp(qbar_shift)``.
    """

    grid: Grid
    log_gamma: np.ndarray
    qbar: np.ndarray
    q: np.ndarray
    lambda_hat: np.ndarray
    gamma_shift: np.ndarray
    qbar_shift: np.ndarray
    rescaled: bool


@dataclass(frozen=True)
class FilteredCoefficients:
    """Convex combinations of per-state quantities under filter weights.

    Moment fields are intensity-weighted: ``claim_m1`` is
    sum_j w_j lambda_j E[z], ``asset_m2`` is sum_j w_j eps_j E[z^2], etc.
    Fields are scalars for a single weight vector and arrays when the
    weights carry leading axes.
    """

    alpha_hat: np.ndarray
    r_hat: np.ndarray
    beta: float
    claim_intensity: np.ndarray
    claim_m1: np.ndarray
    claim_m2: np.ndarray
    asset_intensity: np.ndarray
    asset_m1: np.ndarray
    asset_m2: np.ndarray


def filtered_coefficients(model: RegimeModel, lambda_hat: np.ndarray) -> FilteredCoefficients:
    """Weight per-state rates and moment rates by the filtered distribution.

    ``lambda_hat`` may be a (D,) vector or any (..., D) stack.
    """
    w = np.asarray(lambda_hat, dtype=float)
    return FilteredCoefficients(
        alpha_hat=w @ model.alpha,
        r_hat=w @ model.r,
        beta=model.beta,
        claim_intensity=w @ model.claim_intensity,
        claim_m1=w @ model.claim_m1_rate,
        claim_m2=w @ model.claim_m2_rate,
        asset_intensity=w @ model.asset_intensity,
        asset_m1=w @ model.asset_m1_rate,
        asset_m2=w @ model.asset_m2_rate,
    )


def _mark_state_log_rates(
    z: float, intensities: np.ndarray, laws: list[JumpSizeLaw]
) -> np.ndarray:
    """Per-state log(intensity * density) of one mark, dominating-measure aware.

    If any state places an atom exactly at z the mark counts as atomic and
    continuous laws get -inf there; otherwise the continuous densities
    apply and atomic laws get -inf.
    """
    atomic = any(law.is_atomic and law.atom == z for law in laws)
    out = np.full(len(laws), -math.inf)
    for j, law in enumerate(laws):
        if intensities[j] <= 0.0:
            continue
        if law.is_atomic != atomic:
            continue
        ld = law.log_density(z)
        if ld > -math.inf:
            out[j] = math.log(intensities[j]) + ld
    return out


def _mark_log_ratios(
    z: float,
    intensities: np.ndarray,
    laws: list[JumpSizeLaw],
    ref_weights: np.ndarray,
) -> np.ndarray:
    """log of (state rate density / reference mixture rate density) at z."""
    state_rates = _mark_state_log_rates(z, intensities, laws)
    finite = np.isfinite(state_rates) & (ref_weights > 0.0)
    if not finite.any():
        raise FilterUnderflowError(f"mark of size {z} is impossible under the reference law")
    m = state_rates[finite].max()
    ref = m + math.log(np.sum(ref_weights[finite] * np.exp(state_rates[finite] - m)))
    return np.maximum(state_rates - ref, _LOG_RATIO_FLOOR)


def _reference_weights(model: RegimeModel, weights: np.ndarray | None) -> np.ndarray:
    """State-averaging weights for the reference laws.

    Defaults to the initial distribution; falls back to uniform when some
    state has zero prior mass (its law must still dominate possible marks).
    The choice only shifts every gamma_j by a common factor, which cancels
    in the normalized estimate.
    """
    if weights is not None:
        w = np.asarray(weights, dtype=float)
        if w.shape != (model.num_states,) or np.any(w < 0) or w.sum() <= 0:
            raise ValidationError("reference weights must be a nonnegative vector")
        return w / w.sum()
    q0 = model.chain.initial_distribution
    if np.all(q0 > 0.0):
        return q0
    return np.full(model.num_states, 1.0 / model.num_states)


def _per_step_log_gamma_increments(
    model: RegimeModel, obs: Observations, ref_weights: np.ndarray
) -> np.ndarray:
    """(n_steps, D) array of log gamma increments, marks booked at step end."""
    grid = obs.grid
    dt = grid.dt
    phi = model.phi
    beta2 = model.beta * model.beta

    # continuous part: phi_j / beta^2 dPsi1 - 1/2 phi_j^2 / beta^2 dt
    dlg = np.outer(obs.dpsi1, phi / beta2) - 0.5 * (phi * phi / beta2) * dt

    # mark compensators: + (reference mass - state intensity) dt per measure
    ref_asset_mass = float(ref_weights @ model.asset_intensity)
    ref_claim_mass = float(ref_weights @ model.claim_intensity)
    dlg += ((ref_asset_mass - model.asset_intensity) + (ref_claim_mass - model.claim_intensity)) * dt

    for marks, intensities, laws in (
        (obs.asset_marks, model.asset_intensity, model.asset_law),
        (obs.claim_marks, model.claim_intensity, model.claim_law),
    ):
        for i in range(marks.count):
            k = int(marks.steps[i])
            dlg[k] += _mark_log_ratios(float(marks.sizes[i]), intensities, laws, ref_weights)
    return dlg


def run_filter(
    model: RegimeModel,
    obs: Observations,
    reference_weights: np.ndarray | None = None,
    rescale: bool | str = "auto",
) -> FilterPath:
    """Filtered chain estimate via the transformed unnormalized filter.

    Per step the log likelihood processes advance by the continuous part,
    the mark compensators, and the mark likelihood ratios against the
    state-averaged reference laws; qbar advances one explicit-midpoint step
    of the linear ODE with the transformation frozen at the step midpoint.
    The filtered state is q / <q, 1> with q = diag(gamma) qbar.

    With ``rescale="auto"`` a literal (unscaled) pass is tried first and
    repeated once in log-rescaled coordinates if the normalizer collapses;
    a second collapse raises :class:`FilterUnderflowError`.
    """
    if model.beta <= 0.0:
        raise ValidationError("filtering requires beta > 0")
    ref_w = _reference_weights(model, reference_weights)
    dlg_steps = _per_step_log_gamma_increments(model, obs, ref_w)
    if rescale == "auto":
        try:
            return _integrate_filter(model, obs, dlg_steps, rescale=False)
        except FilterUnderflowError:
            return _integrate_filter(model, obs, dlg_steps, rescale=True)
    return _integrate_filter(model, obs, dlg_steps, rescale=bool(rescale))


def _integrate_filter(
    model: RegimeModel, obs: Observations, dlg_steps: np.ndarray, rescale: bool
) -> FilterPath:
    grid = obs.grid
    n, d = grid.n_steps, model.num_states
    dt = grid.dt
    a = model.chain.generator

    log_gamma = np.zeros((n + 1, d))
    qbar = np.zeros((n + 1, d))
    q = np.zeros((n + 1, d))
    gamma_shift = np.zeros(n + 1)
    qbar_shift = np.zeros(n + 1)

    qbar[0] = model.chain.initial_distribution
    q[0] = qbar[0]

    lg = np.zeros(d)
    qb = qbar[0].copy()
    g_shift = 0.0
    qb_shift = 0.0
    for k in range(n):
        dlg = dlg_steps[k]
        lg_mid = lg + 0.5 * dlg
        # transformed generator M_ij = A_ij gamma_j / gamma_i, frozen per step
        m = a * np.exp(lg_mid[None, :] - lg_mid[:, None])
        qb_mid = qb + 0.5 * dt * (m @ qb)
        qb = qb + dt * (m @ qb_mid)
        lg = lg + dlg
        if rescale:
            shift = lg.max()
            lg = lg - shift
            g_shift += shift
            total = qb.sum()
            if not np.isfinite(total) or total <= 0.0:
                raise FilterUnderflowError("transformed filter collapsed despite rescaling")
            qb = qb / total
            qb_shift += math.log(total)
        log_gamma[k + 1] = lg
        qbar[k + 1] = qb
        gamma_shift[k + 1] = g_shift
        qbar_shift[k + 1] = qb_shift
        q[k + 1] = np.exp(lg) * qb

    norms = q.sum(axis=1)
    if not np.all(np.isfinite(norms)) or np.any(norms <= 0.0):
        raise FilterUnderflowError("filter normalizer is non-positive or non-finite")
    if np.any(q <= 0.0):
        raise FilterUnderflowError("unnormalized filter lost positivity")
    lam = q / norms[:, None]
    return FilterPath(
        grid=grid,
        log_gamma=log_gamma,
        qbar=qbar,
        q=q,
        lambda_hat=lam,
        gamma_shift=gamma_shift,
        qbar_shift=qbar_shift,
        rescaled=rescale,
    )


def exact_discrete_filter(model: RegimeModel, obs: Observations) -> FilterPath:
    """Brute-force Bayes filter on the grid, the validation oracle.

    Predicts with the scaling-and-squaring matrix exponential of A dt and
    corrects with the exact likelihood of each step's data given the state:
    a Gaussian factor for the continuous increment and Poisson-count times
    size-density factors for the marks.  Renormalizes every step.
    """
    if model.beta <= 0.0:
        raise ValidationError("filtering requires beta > 0")
    grid = obs.grid
    n, d = grid.n_steps, model.num_states
    dt = grid.dt
    trans = expm(model.chain.generator * dt)

    phi_dt = model.phi * dt
    var = model.beta * model.beta * dt

    # per-step mark log likelihoods: count part and size-density part
    mark_ll = np.zeros((n, d))
    mark_ll -= (model.asset_intensity + model.claim_intensity) * dt
    with np.errstate(divide="ignore"):
        log_asset_int = np.log(model.asset_intensity)
        log_claim_int = np.log(model.claim_intensity)
    for counts, log_int in (
        (obs.asset_marks.counts_per_step(n), log_asset_int),
        (obs.claim_marks.counts_per_step(n), log_claim_int),
    ):
        nz = counts > 0
        if nz.any():
            mark_ll[nz] += counts[nz, None] * log_int[None, :]
    for marks, laws in ((obs.asset_marks, model.asset_law), (obs.claim_marks, model.claim_law)):
        for i in range(marks.count):
            k = int(marks.steps[i])
            z = float(marks.sizes[i])
            dens = np.array([law.log_density(z) for law in laws])
            atomic = any(law.is_atomic and law.atom == z for law in laws)
            dens[np.array([law.is_atomic != atomic for law in laws])] = -math.inf
            mark_ll[k] += dens
    mark_ll = np.nan_to_num(mark_ll, nan=-math.inf, posinf=-math.inf)

    lam = np.zeros((n + 1, d))
    lam[0] = model.chain.initial_distribution
    p = lam[0].copy()
    for k in range(n):
        pred = trans @ p
        ll = mark_ll[k] - 0.5 * (obs.dpsi1[k] - phi_dt) ** 2 / var
        ll_max = ll.max()
        if not np.isfinite(ll_max):
            raise FilterUnderflowError("observation impossible under every state")
        w = pred * np.exp(ll - ll_max)
        total = w.sum()
        if total <= 0.0 or not np.isfinite(total):
            raise FilterUnderflowError("discrete Bayes correction annihilated all states")
        p = w / total
        lam[k + 1] = p

    zeros = np.zeros((n + 1, d))
    return FilterPath(
        grid=grid,
        log_gamma=zeros,
        qbar=lam,
        q=lam,
        lambda_hat=lam,
        gamma_shift=np.zeros(n + 1),
        qbar_shift=np.zeros(n + 1),
        rescaled=False,
    )


def innovations_increments(
    model: RegimeModel, obs: Observations, fp: FilterPath
) -> np.ndarray:
    """Brownian increments seen by the observer: (dPsi1 - <phi, lambda_hat> dt) / beta."""
    drift = fp.lambda_hat[:-1] @ model.phi
    return (obs.dpsi1 - drift * obs.grid.dt) / model.beta


def filter_gap(a: FilterPath, b: FilterPath) -> float:
    """Sup-norm distance between two filtered-state trajectories."""
    a.grid.require_matches(b.grid, "filter grids")
    return float(np.abs(a.lambda_hat - b.lambda_hat).max())


def coarsen_observations(obs: Observations, factor: int) -> Observations:
    """Aggregate observations onto a grid coarser by an integer factor.

    Continuous increments are summed over blocks; marks keep their exact
    times and are re-binned.  The underlying data refine consistently, so
    filters at successive resolutions see the same path.
    """
    if factor < 1 or obs.grid.n_steps % factor != 0:
        raise GridAlignmentError(f"factor {factor} must divide n_steps {obs.grid.n_steps}")
    coarse = Grid(dt=obs.grid.dt * factor, n_steps=obs.grid.n_steps // factor)
    dpsi1 = obs.dpsi1.reshape(coarse.n_steps, factor).sum(axis=1)

    def rebin(marks: MarkList) -> MarkList:
        return MarkList(times=marks.times, sizes=marks.sizes, steps=marks.steps // factor)

    return Observations(
        grid=coarse,
        dpsi1=dpsi1,
        asset_marks=rebin(obs.asset_marks),
        claim_marks=rebin(obs.claim_marks),
    )
