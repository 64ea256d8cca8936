import numpy as np
import pytest
from scipy.linalg import expm

from conftest import case1_model, case2_model, uninformative_model
from surplusgame.chain import simulate_chain
from surplusgame.filtering import (
    Observations,
    coarsen_observations,
    exact_discrete_filter,
    filter_gap,
    filtered_coefficients,
    innovations_increments,
    run_filter,
)
from surplusgame.market import simulate_market


def observations_for(model, horizon, dt, seed):
    chain = simulate_chain(model.chain, horizon, dt, seed=seed)
    market = simulate_market(model, chain, dt, seed=seed)
    return Observations.from_market(market)


def test_single_state_filter_is_trivial():
    model = case1_model()
    obs = observations_for(model, horizon=1.0, dt=0.01, seed=4)
    for fp in (run_filter(model, obs), exact_discrete_filter(model, obs)):
        assert np.allclose(fp.lambda_hat, 1.0)


def test_simplex_invariant_both_filters():
    model = case2_model()
    obs = observations_for(model, horizon=1.0, dt=1e-3, seed=21)
    for fp in (run_filter(model, obs), exact_discrete_filter(model, obs)):
        assert np.all(fp.lambda_hat >= -1e-15)
        assert np.abs(fp.lambda_hat.sum(axis=1) - 1.0).max() <= 1e-9
    fp = run_filter(model, obs)
    assert np.all(fp.q > 0.0)


def test_uninformative_case_reproduces_prior_flow():
    model = uninformative_model()
    horizon, dt = 1.0, 1e-3
    obs = observations_for(model, horizon, dt, seed=9)
    a = model.chain.generator
    q0 = model.chain.initial_distribution
    prior = np.stack([expm(a * t) @ q0 for t in obs.grid.times])

    fp = run_filter(model, obs)
    assert np.abs(fp.lambda_hat - prior).max() <= 1e-6

    oracle = exact_discrete_filter(model, obs)
    assert np.abs(oracle.lambda_hat - prior).max() <= 1e-9


def test_oracle_rows_renormalized():
    model = case2_model()
    obs = observations_for(model, horizon=0.5, dt=1e-3, seed=33)
    fp = exact_discrete_filter(model, obs)
    assert np.abs(fp.lambda_hat.sum(axis=1) - 1.0).max() <= 1e-12


def test_informative_case_oracle_agreement_and_refinement():
    model = case2_model()
    fine_dt, factor = 5e-4, 2
    gaps_fine, gaps_coarse = [], []
    for seed in range(3):
        chain = simulate_chain(model.chain, 1.0, fine_dt, seed=seed)
        market = simulate_market(model, chain, fine_dt, seed=seed)
        obs_fine = Observations.from_market(market)
        obs_coarse = coarsen_observations(obs_fine, factor)
        gaps_coarse.append(
            filter_gap(run_filter(model, obs_coarse), exact_discrete_filter(model, obs_coarse))
        )
        gaps_fine.append(
            filter_gap(run_filter(model, obs_fine), exact_discrete_filter(model, obs_fine))
        )
    assert np.mean(gaps_coarse) <= 0.05
    ratio = np.mean(gaps_fine) / np.mean(gaps_coarse)
    assert 0.2 <= ratio <= 0.9  # rough per-seed check; the full gate runs in acceptance


def test_reference_law_choice_cancels():
    model = case2_model()
    obs = observations_for(model, horizon=1.0, dt=1e-3, seed=13)
    fp_default = run_filter(model, obs)  # initial-distribution weights
    fp_uniform = run_filter(model, obs, reference_weights=np.array([0.5, 0.5]))
    assert np.abs(fp_default.lambda_hat - fp_uniform.lambda_hat).max() <= 1e-9


def test_rescaled_run_matches_literal_run():
    model = case2_model()
    obs = observations_for(model, horizon=1.0, dt=1e-3, seed=17)
    literal = run_filter(model, obs, rescale=False)
    scaled = run_filter(model, obs, rescale=True)
    assert np.abs(literal.lambda_hat - scaled.lambda_hat).max() <= 1e-9
    # stored values recover the literal ones through the recorded shifts
    q_rec = scaled.q * np.exp(scaled.gamma_shift + scaled.qbar_shift)[:, None]
    assert np.allclose(q_rec, literal.q, rtol=1e-9)


def test_filtered_coefficients_vertex_and_mixture():
    model = case2_model()
    at_e1 = filtered_coefficients(model, np.array([1.0, 0.0]))
    assert float(at_e1.alpha_hat) == pytest.approx(0.13)
    assert float(at_e1.r_hat) == pytest.approx(0.045)
    assert float(at_e1.claim_m1) == pytest.approx(0.5)

    mixed = filtered_coefficients(model, np.array([0.7, 0.3]))
    assert float(mixed.alpha_hat) == pytest.approx(0.118)  # 0.7*0.13 + 0.3*0.09
    assert float(mixed.asset_m2) == pytest.approx(0.56)

    sym = uninformative_model()
    uniform = filtered_coefficients(sym, np.array([0.5, 0.5]))
    assert float(uniform.alpha_hat) == pytest.approx(0.10)


def test_filtered_coefficients_batched():
    model = case2_model()
    w = np.array([[1.0, 0.0], [0.7, 0.3], [0.0, 1.0]])
    c = filtered_coefficients(model, w)
    assert c.alpha_hat.shape == (3,)
    assert c.alpha_hat == pytest.approx([0.13, 0.118, 0.09])


def test_innovations_reconstruction_shape_and_centering():
    model = case2_model()
    obs = observations_for(model, horizon=1.0, dt=1e-3, seed=29)
    fp = run_filter(model, obs)
    dwhat = innovations_increments(model, obs, fp)
    assert dwhat.shape == (obs.grid.n_steps,)
    # one path: crude sanity only, the distributional gate runs in acceptance
    assert abs(dwhat.sum()) < 5.0
