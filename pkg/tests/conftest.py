"""Shared model builders for the test suite."""

import numpy as np

from surplusgame.chain import ChainModel
from surplusgame.market import JumpSizeLaw, RegimeModel
from surplusgame.surplus import DelayParams


def case1_model() -> RegimeModel:
    """Single-regime market: unit asset jumps at intensity 0.5, no claims."""
    return RegimeModel(
        chain=ChainModel(1, np.array([[0.0]]), np.array([1.0])),
        r=np.array([0.045]),
        alpha=np.array([0.11]),
        beta=0.2,
        asset_intensity=np.array([0.5]),
        asset_law=[JumpSizeLaw.point_mass(1.0)],
        claim_intensity=np.array([0.0]),
        claim_law=[JumpSizeLaw.point_mass(1.0)],
        premium=1.0,
    )


def case2_chain() -> ChainModel:
    # stationary law (0.7, 0.3) matches the initial distribution
    return ChainModel(
        2, np.array([[-0.3, 0.7], [0.3, -0.7]]), np.array([0.7, 0.3])
    )


def case2_model() -> RegimeModel:
    """Two-regime market with unit-jump asset and claim measures."""
    return RegimeModel(
        chain=case2_chain(),
        r=np.array([0.045, 0.09]),
        alpha=np.array([0.13, 0.09]),
        beta=0.2,
        asset_intensity=np.array([0.5, 0.7]),
        asset_law=[JumpSizeLaw.point_mass(1.0), JumpSizeLaw.point_mass(1.0)],
        claim_intensity=np.array([0.5, 0.7]),
        claim_law=[JumpSizeLaw.point_mass(1.0), JumpSizeLaw.point_mass(1.0)],
        premium=1.0,
    )


def uninformative_model() -> RegimeModel:
    """Two regimes whose observable parameters coincide: data carry no news."""
    return RegimeModel(
        chain=case2_chain(),
        r=np.array([0.03, 0.05]),  # rates may differ; they are not observed
        alpha=np.array([0.10, 0.10]),
        beta=0.2,
        asset_intensity=np.array([0.6, 0.6]),
        asset_law=[JumpSizeLaw.point_mass(1.0), JumpSizeLaw.point_mass(1.0)],
        claim_intensity=np.array([0.4, 0.4]),
        claim_law=[JumpSizeLaw.exponential(1.0), JumpSizeLaw.exponential(1.0)],
        premium=1.0,
    )


def default_delay(**overrides) -> DelayParams:
    base = dict(rho=0.2, zeta=1.0, kappa=0.5, theta_flow=0.1, xi=0.1)
    base.update(overrides)
    return DelayParams(**base)
