"""Hidden continuous-time Markov chain with canonical unit-vector states.

The chain lives on {e_1, ..., e_D} and is driven by a constant generator A
with the convention a_ji = intensity of jumping from e_i to e_j, so columns
sum to zero and a distribution vector evolves as dq/dt = A q.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    GeneratorColumnSumError,
    GeneratorSignError,
    GridAlignmentError,
    InitialDistributionError,
    ValidationError,
)
from .grid import Grid
from .rng import CHAIN, stream_rng

_COLSUM_TOL = 1e-10
_Q0_TOL = 1e-12


@dataclass(frozen=True)
class ChainModel:
    """Finite-state chain: state count, generator, initial distribution.

    Parameters
    ----------
    num_states : int
        Number of states D.
    generator : (D, D) array
        Transition intensities, a_ji = rate from e_i to e_j.  Columns sum
        to zero, off-diagonals are nonnegative.  Constant in time; use
        :meth:`generator_at` so a time-dependent extension keeps the call
        sites unchanged.
    initial_distribution : (D,) array
        Distribution of the state at time zero.
    """

    num_states: int
    generator: np.ndarray
    initial_distribution: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "generator", np.asarray(self.generator, dtype=float))
        object.__setattr__(
            self, "initial_distribution", np.asarray(self.initial_distribution, dtype=float)
        )

    def generator_at(self, t: float) -> np.ndarray:
        """Generator evaluated at time t (constant in this version)."""
        return self.generator


@dataclass(frozen=True)
class ChainPath:
    """One simulated trajectory, sampled right-continuously onto a grid.

    ``jump_times``/``jump_states`` hold the exact switch epochs inside the
    horizon and the state entered at each; ``states`` is the state index at
    every grid node (the post-jump state if a switch lands exactly on a node).
    """

    grid: Grid
    states: np.ndarray
    jump_times: np.ndarray
    jump_states: np.ndarray
    initial_state: int

    def state_sequence(self) -> tuple[np.ndarray, np.ndarray]:
        """(segment start times, segment states) covering [0, horizon]."""
        starts = np.concatenate(([0.0], self.jump_times))
        seq = np.concatenate(([self.initial_state], self.jump_states)).astype(int)
        return starts, seq


def validate_chain_model(model: ChainModel) -> ChainModel:
    """Check generator orientation and the initial distribution; return the model.

    Raises
    ------
    GeneratorSignError, GeneratorColumnSumError, InitialDistributionError
    """
    a = model.generator
    d = model.num_states
    if a.shape != (d, d):
        raise ValidationError(f"generator shape {a.shape} does not match num_states {d}")
    off = a - np.diag(np.diag(a))
    if np.any(off < -_COLSUM_TOL) or not np.all(np.isfinite(a)):
        raise GeneratorSignError("off-diagonal intensities must be nonnegative and finite")
    colsums = a.sum(axis=0)
    if np.any(np.abs(colsums) > _COLSUM_TOL * max(1.0, np.abs(a).max())):
        raise GeneratorColumnSumError(f"generator columns must sum to 0, got {colsums}")
    q0 = model.initial_distribution
    if q0.shape != (d,):
        raise InitialDistributionError(f"initial distribution shape {q0.shape}, expected ({d},)")
    if np.any(q0 < 0.0) or abs(q0.sum() - 1.0) > _Q0_TOL:
        raise InitialDistributionError(
            f"initial distribution must be nonnegative and sum to 1, got {q0}"
        )
    return model


def stationary_distribution(model: ChainModel) -> np.ndarray:
    """Solve A pi = 0, <pi, 1> = 1 by least squares on the stacked system."""
    d = model.num_states
    a = np.vstack([model.generator, np.ones(d)])
    b = np.zeros(d + 1)
    b[-1] = 1.0
    pi, *_ = np.linalg.lstsq(a, b, rcond=None)
    return pi


def simulate_chain(
    model: ChainModel, horizon: float, dt: float, seed: int, path: int = 0
) -> ChainPath:
    """Exact simulation: exponential holding times, embedded-chain transitions.

    The holding rate in state i is -a_ii and the next state is j with
    probability a_ji / (-a_ii).  Jump epochs are kept exactly; the grid
    sampling is right-continuous.  Deterministic for a fixed seed;
    ``path`` selects the per-path substream of that seed, so path i here
    reproduces path i of any batched run with the same seed.
    """
    validate_chain_model(model)
    grid = Grid.from_horizon(horizon, dt)
    rng = stream_rng(seed, path, CHAIN)
    return _simulate_chain_with_rng(model, grid, rng)


def _simulate_chain_with_rng(model: ChainModel, grid: Grid, rng: np.random.Generator) -> ChainPath:
    a = model.generator
    d = model.num_states
    horizon = grid.horizon
    state = int(rng.choice(d, p=model.initial_distribution)) if d > 1 else 0
    initial_state = state
    jump_times: list[float] = []
    jump_states: list[int] = []
    t = 0.0
    while True:
        rate = -a[state, state]
        if rate <= 0.0:
            break
        t += rng.exponential(1.0 / rate)
        if t >= horizon:
            break
        probs = a[:, state].copy()
        probs[state] = 0.0
        probs /= rate
        state = int(rng.choice(d, p=probs))
        jump_times.append(t)
        jump_states.append(state)

    jt = np.asarray(jump_times, dtype=float)
    js = np.asarray(jump_states, dtype=int)
    seq = np.concatenate(([initial_state], js)).astype(int)
    # searchsorted(..., 'right') counts jumps at or before each node: post-jump state.
    idx = np.searchsorted(jt, grid.times, side="right")
    states = seq[idx]
    return ChainPath(
        grid=grid, states=states, jump_times=jt, jump_states=js, initial_state=initial_state
    )


def occupation_times(path: ChainPath) -> np.ndarray:
    """Exact per-state occupation time on [0, t_k] for every grid node k.

    Returns a (n_steps + 1, D) array using the exact jump epochs, not the
    grid sampling.
    """
    starts, seq = path.state_sequence()
    d = int(max(seq.max(initial=0), path.states.max(initial=0))) + 1
    times = path.grid.times
    ends = np.concatenate((starts[1:], [path.grid.horizon]))
    occ = np.zeros((times.size, d))
    for s, e, st in zip(starts, ends, seq):
        # overlap of [s, e] with [0, t_k] for all nodes at once
        occ[:, st] += np.clip(np.minimum(times, e) - s, 0.0, None)
    return occ


def chain_martingale_residual(path: ChainPath, model: ChainModel) -> np.ndarray:
    """Residual of the semimartingale decomposition, on the grid.

    Returns the (n_steps + 1, D) array of
    Lambda(t_k) - Lambda(0) - A @ integral_0^{t_k} Lambda(s) ds
    with the integral computed from exact occupation times.
    """
    d = model.num_states
    if path.states.max(initial=0) >= d:
        raise ValidationError("path states exceed model state count")
    occ = occupation_times(path)
    if occ.shape[1] < d:
        occ = np.pad(occ, ((0, 0), (0, d - occ.shape[1])))
    lam = np.zeros((path.grid.n_steps + 1, d))
    lam[np.arange(path.grid.n_steps + 1), path.states] = 1.0
    lam0 = np.zeros(d)
    lam0[path.initial_state] = 1.0
    return lam - lam0[None, :] - occ @ model.generator.T
