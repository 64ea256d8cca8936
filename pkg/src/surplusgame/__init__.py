"""Regime-switching insurer surplus: simulation, filtering, and the robust
investment game with noisy memory."""

from .chain import (
    ChainModel,
    ChainPath,
    chain_martingale_residual,
    simulate_chain,
    stationary_distribution,
    validate_chain_model,
)
from .engine import MonteCarloSpec, run_monte_carlo
from .filtering import (
    FilteredCoefficients,
    FilterPath,
    Observations,
    exact_discrete_filter,
    filter_gap,
    filtered_coefficients,
    innovations_increments,
    run_filter,
)
from .game import (
    ClosedFormControls,
    ClosedFormInvestment,
    ConstantInvestment,
    ControlBounds,
    GameState,
    QuadraticPenalty,
    closed_form_controls,
    hamiltonian,
    make_game_state,
    optimal_pi,
    optimal_thetas,
    two_state_example_pi,
    value_at_zero,
    verify_saddle,
)
from .grid import Grid
from .market import (
    JumpSizeLaw,
    MarketPath,
    RegimeModel,
    regime_compensators,
    reserve_path,
    simulate_market,
)
from .risk import (
    ClosedFormScenario,
    DensityPath,
    LinearFeedbackScenario,
    ScenarioControl,
    objective_game,
    penalty,
    risk_measure,
    simulate_density,
)
from .surplus import (
    DelayParams,
    SurplusPath,
    admissibility_report,
    capital_flow,
    noisy_memory_path,
    noisy_memory_quadrature,
    simulate_surplus,
    step_noisy_memory,
)

__version__ = "0.1.0"
