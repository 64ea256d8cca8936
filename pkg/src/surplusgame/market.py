"""Regime-switching market and insurance claims.

One risk-free asset, one risky asset with multiplicative jumps, and a
Markov-modulated compound-Poisson claim stream.  Within each Euler step the
regime is frozen at its value at the step's left endpoint, which is exact
conditional on the chain except across switch-straddling steps.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .chain import ChainModel, ChainPath, validate_chain_model
from .errors import GridAlignmentError, JumpSupportError, ValidationError
from .grid import Grid
from .rng import MARKET, stream_rng

POINT_MASS = "point_mass"
EXPONENTIAL = "exponential"
LOGNORMAL = "lognormal"


@dataclass(frozen=True)
class JumpSizeLaw:
    """Jump-size distribution with analytically cached first two moments.

    Supported kinds: a point mass at ``atom``; an exponential with given
    mean; a lognormal parametrized by the (mu, sigma) of the log.  Moments
    are closed-form, never quadrature.
    """

    kind: str
    params: tuple[float, ...]
    m1: float = field(init=False)
    m2: float = field(init=False)

    def __post_init__(self):
        if self.kind == POINT_MASS:
            (a,) = self.params
            m1, m2 = a, a * a
        elif self.kind == EXPONENTIAL:
            (mean,) = self.params
            if mean <= 0.0:
                raise JumpSupportError(f"exponential mean must be positive, got {mean}")
            m1, m2 = mean, 2.0 * mean * mean
        elif self.kind == LOGNORMAL:
            mu, sigma = self.params
            if sigma <= 0.0:
                raise JumpSupportError(f"lognormal sigma must be positive, got {sigma}")
            m1 = math.exp(mu + 0.5 * sigma * sigma)
            m2 = math.exp(2.0 * mu + 2.0 * sigma * sigma)
        else:
            raise ValidationError(f"unknown jump-size law kind {self.kind!r}")
        object.__setattr__(self, "m1", m1)
        object.__setattr__(self, "m2", m2)

    @classmethod
    def point_mass(cls, atom: float) -> "JumpSizeLaw":
        return cls(POINT_MASS, (float(atom),))

    @classmethod
    def exponential(cls, mean: float) -> "JumpSizeLaw":
        return cls(EXPONENTIAL, (float(mean),))

    @classmethod
    def lognormal(cls, mu: float, sigma: float) -> "JumpSizeLaw":
        return cls(LOGNORMAL, (float(mu), float(sigma)))

    @property
    def is_atomic(self) -> bool:
        return self.kind == POINT_MASS

    @property
    def atom(self) -> float:
        if not self.is_atomic:
            raise ValidationError("law has no atom")
        return self.params[0]

    @property
    def support_min(self) -> float:
        return self.params[0] if self.is_atomic else 0.0

    @property
    def support_max(self) -> float:
        """Upper bound of the support; inf for the unbounded laws."""
        return self.params[0] if self.is_atomic else math.inf

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        if self.kind == POINT_MASS:
            return np.full(n, self.params[0])
        if self.kind == EXPONENTIAL:
            return rng.exponential(self.params[0], size=n)
        mu, sigma = self.params
        return rng.lognormal(mu, sigma, size=n)

    def log_density(self, z: float) -> float:
        """Log density at z against the dominating measure.

        Atoms carry counting measure (log of the point mass, i.e. 0 at the
        atom); continuous laws carry Lebesgue density.  Returns -inf off
        support or at a point of the wrong type.
        """
        if self.kind == POINT_MASS:
            return 0.0 if z == self.params[0] else -math.inf
        if z <= 0.0:
            return -math.inf
        if self.kind == EXPONENTIAL:
            mean = self.params[0]
            return -math.log(mean) - z / mean
        mu, sigma = self.params
        u = (math.log(z) - mu) / sigma
        return -math.log(z * sigma * math.sqrt(2.0 * math.pi)) - 0.5 * u * u


@dataclass
class RegimeModel:
    """Per-state market and claim parameters on top of a :class:`ChainModel`.

    Parameters
    ----------
    chain : ChainModel
    r, alpha : (D,) arrays
        Per-state interest and appreciation rates.
    beta : float
        Volatility, regime-independent and positive (the volatility is
        observable from the price path, so hiding it would break the
        filtering reduction).
    asset_intensity, asset_law : per-state jump intensity and size law of
        the risky asset; sizes must stay above -1 so the price stays positive.
    claim_intensity, claim_law : per-state claim arrival intensity and
        claim-size law, supported on (0, inf).
    premium : float
        Constant premium rate, positive.
    """

    chain: ChainModel
    r: np.ndarray
    alpha: np.ndarray
    beta: float
    asset_intensity: np.ndarray
    asset_law: list[JumpSizeLaw]
    claim_intensity: np.ndarray
    claim_law: list[JumpSizeLaw]
    premium: float

    def __post_init__(self):
        validate_chain_model(self.chain)
        d = self.chain.num_states
        self.r = np.asarray(self.r, dtype=float)
        self.alpha = np.asarray(self.alpha, dtype=float)
        self.asset_intensity = np.asarray(self.asset_intensity, dtype=float)
        self.claim_intensity = np.asarray(self.claim_intensity, dtype=float)
        for name, vec in (
            ("r", self.r),
            ("alpha", self.alpha),
            ("asset_intensity", self.asset_intensity),
            ("claim_intensity", self.claim_intensity),
        ):
            if vec.shape != (d,):
                raise ValidationError(f"{name} must have shape ({d},), got {vec.shape}")
        if self.beta <= 0.0:
            raise ValidationError(f"beta must be positive, got {self.beta}")
        if np.any(self.asset_intensity < 0.0) or np.any(self.claim_intensity < 0.0):
            raise ValidationError("jump intensities must be nonnegative")
        if self.premium <= 0.0:
            raise ValidationError(f"premium must be positive, got {self.premium}")
        if len(self.asset_law) != d or len(self.claim_law) != d:
            raise ValidationError("need one jump-size law per state for assets and claims")
        for law in self.asset_law:
            if law.support_min <= -1.0:
                raise JumpSupportError("asset jump sizes must stay above -1")
        for law in self.claim_law:
            if law.support_min < 0.0 or (law.is_atomic and law.atom <= 0.0):
                raise JumpSupportError("claim sizes must be positive")
        # cached per-state moment rates: intensity * E[z], intensity * E[z^2]
        self.asset_m1_rate = self.asset_intensity * np.array([l.m1 for l in self.asset_law])
        self.asset_m2_rate = self.asset_intensity * np.array([l.m2 for l in self.asset_law])
        self.claim_m1_rate = self.claim_intensity * np.array([l.m1 for l in self.claim_law])
        self.claim_m2_rate = self.claim_intensity * np.array([l.m2 for l in self.claim_law])

    @property
    def num_states(self) -> int:
        return self.chain.num_states

    @property
    def phi(self) -> np.ndarray:
        """Per-state drift of the log-price continuous part, alpha_j - beta^2 / 2."""
        return self.alpha - 0.5 * self.beta * self.beta


@dataclass(frozen=True)
class MarkList:
    """Jumps of one random measure: exact times, sizes, owning grid step."""

    times: np.ndarray
    sizes: np.ndarray
    steps: np.ndarray

    @classmethod
    def empty(cls) -> "MarkList":
        return cls(np.zeros(0), np.zeros(0), np.zeros(0, dtype=int))

    @property
    def count(self) -> int:
        return self.times.size

    def sums_per_step(self, n_steps: int) -> np.ndarray:
        out = np.zeros(n_steps)
        np.add.at(out, self.steps, self.sizes)
        return out

    def counts_per_step(self, n_steps: int) -> np.ndarray:
        out = np.zeros(n_steps, dtype=int)
        np.add.at(out, self.steps, 1)
        return out


@dataclass(frozen=True)
class MarketPath:
    """Simulated market trajectory aligned with a chain path.

    ``dlog_s_cont`` is the observable log-price increment net of jumps; it
    doubles as the continuous observation stream for the filter.
    """

    grid: Grid
    bond: np.ndarray
    stock: np.ndarray
    dw: np.ndarray
    dlog_s_cont: np.ndarray
    asset_marks: MarkList
    claim_marks: MarkList
    claim_count: np.ndarray
    aggregate_claims: np.ndarray


def _draw_marks(
    rng: np.random.Generator,
    intensity: np.ndarray,
    laws: list[JumpSizeLaw],
    regimes: np.ndarray,
    dt: float,
) -> MarkList:
    """Poisson counts per step at the frozen-regime intensity, i.i.d. sizes."""
    lam = intensity[regimes] * dt
    counts = rng.poisson(lam)
    total = int(counts.sum())
    if total == 0:
        return MarkList.empty()
    steps = np.repeat(np.arange(regimes.size), counts)
    mark_regimes = regimes[steps]
    sizes = np.empty(total)
    for j in np.unique(mark_regimes):
        sel = mark_regimes == j
        sizes[sel] = laws[j].sample(rng, int(sel.sum()))
    times = (steps + rng.random(total)) * dt
    order = np.argsort(times, kind="stable")
    return MarkList(times=times[order], sizes=sizes[order], steps=steps[order])


def simulate_market(
    model: RegimeModel,
    chain_path: ChainPath,
    dt: float,
    seed: int,
    s0: float = 1.0,
    path: int = 0,
) -> MarketPath:
    """Simulate bond, stock, and claims along a given chain path.

    The stock diffusion runs in log space (Euler on the log is exact per
    step for frozen coefficients) and jumps apply multiplicatively as
    S <- S (1 + z), so the price cannot change sign at coarse steps.
    Deterministic for a fixed (seed, path) pair.
    """
    grid = chain_path.grid
    if abs(grid.dt - dt) > 1e-9 * dt:
        raise GridAlignmentError(f"chain grid dt {grid.dt} does not match requested dt {dt}")
    rng = stream_rng(seed, path, MARKET)
    return _simulate_market_with_rng(model, chain_path, rng, s0)


def _simulate_market_with_rng(
    model: RegimeModel,
    chain_path: ChainPath,
    rng: np.random.Generator,
    s0: float = 1.0,
) -> MarketPath:
    grid = chain_path.grid
    k = grid.n_steps
    regimes = chain_path.states[:-1]  # left endpoints
    dt = grid.dt

    dw = rng.normal(0.0, math.sqrt(dt), size=k)
    claim_marks = _draw_marks(rng, model.claim_intensity, model.claim_law, regimes, dt)
    asset_marks = _draw_marks(rng, model.asset_intensity, model.asset_law, regimes, dt)
    if np.any(asset_marks.sizes <= -1.0):
        raise JumpSupportError("sampled asset jump size <= -1 violates the law support")

    dlog_cont = model.phi[regimes] * dt + model.beta * dw
    jump_log = np.zeros(k)
    np.add.at(jump_log, asset_marks.steps, np.log1p(asset_marks.sizes))
    log_s = np.concatenate(([math.log(s0)], math.log(s0) + np.cumsum(dlog_cont + jump_log)))

    bond = np.concatenate(([1.0], np.exp(np.cumsum(model.r[regimes] * dt))))

    claim_count = np.concatenate(([0], np.cumsum(claim_marks.counts_per_step(k))))
    aggregate = np.concatenate(([0.0], np.cumsum(claim_marks.sums_per_step(k))))

    return MarketPath(
        grid=grid,
        bond=bond,
        stock=np.exp(log_s),
        dw=dw,
        dlog_s_cont=dlog_cont,
        asset_marks=asset_marks,
        claim_marks=claim_marks,
        claim_count=claim_count.astype(int),
        aggregate_claims=aggregate,
    )


@dataclass(frozen=True)
class CompensatorMoments:
    """(intensity, intensity * E[z], intensity * E[z^2]) for one measure."""

    intensity: float
    m1_rate: float
    m2_rate: float

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.intensity, self.m1_rate, self.m2_rate)


def regime_compensators(
    model: RegimeModel, state: int
) -> tuple[CompensatorMoments, CompensatorMoments]:
    """Exact compensator moments of the asset and claim measures in one state."""
    if state < 0 or state >= model.num_states:
        raise ValidationError(f"state index {state} out of range")
    asset = CompensatorMoments(
        intensity=float(model.asset_intensity[state]),
        m1_rate=float(model.asset_m1_rate[state]),
        m2_rate=float(model.asset_m2_rate[state]),
    )
    claim = CompensatorMoments(
        intensity=float(model.claim_intensity[state]),
        m1_rate=float(model.claim_m1_rate[state]),
        m2_rate=float(model.claim_m2_rate[state]),
    )
    return asset, claim


def reserve_path(model: RegimeModel, market: MarketPath, r0: float) -> np.ndarray:
    """Insurance risk process without investment: r0 + premium * t - claims."""
    return r0 + model.premium * market.grid.times - market.aggregate_claims
