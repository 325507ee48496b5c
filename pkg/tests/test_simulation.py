import math

import numpy as np
import pytest

from src.data.config import PriorConfig
from src.data.store import PosteriorStore
from src.model.emission import emission_cdf, mixing_weights
from src.model.params import ModelParams
from src.model.simulation import (
    CovariateSpec,
    covariate_scenario_sweep,
    generate_synthetic,
    sample_path,
    sample_prior,
    seasonal_summary,
    simulate_chain,
    simulate_observations,
    simulate_panels,
    stationary_distribution,
    wet_day_frequency,
)
from src.util.errors import ConfigurationError, InputError
from src.util.rng import StreamFactory
from tests.helpers import make_covariates, make_panel


def single_state(S=2, beta0=0.0, gamma=1.0, beta1=0.0):
    return ModelParams(
        zeta=np.zeros((1, 2)),
        lam=np.stack([np.full((1, S), 2.0), np.full((1, S), 0.4)]),
        beta0=np.full((1, S), beta0),
        beta1=np.full((1, S), beta1),
        gamma=np.full(S, gamma),
    )


def store_of(params, T=10):
    K, S, A, B = params.dims
    store = PosteriorStore.allocate(1, K, S, A, B, T, np.zeros((0, 2)))
    store.record(0, params, np.zeros(T, dtype=int), np.zeros(0), 0.0, 1)
    store.manifest["stations"] = [f"s{i + 1}" for i in range(S)]
    return store


def test_single_state_chain_is_constant(rng):
    draw = simulate_chain(single_state(), rng.standard_normal((50, 1)), rng.standard_normal((50, 2, 1)), rng=rng)
    np.testing.assert_array_equal(draw.z_star, 0)
    assert draw.y_star.shape == (50, 2)
    assert np.all(draw.y_star >= 0.0)
    np.testing.assert_allclose(draw.q_star, 1.0)


def test_point_mass_gives_dry_panel(rng):
    draw = simulate_chain(single_state(beta0=-50.0), np.zeros((40, 1)), np.zeros((40, 2, 1)), rng=rng)
    np.testing.assert_array_equal(draw.y_star, 0.0)


def test_forecast_rows_are_distributions(two_state_params, rng):
    draw = simulate_chain(two_state_params, rng.standard_normal((30, 1)), rng.standard_normal((30, 2, 1)), 1, rng)
    np.testing.assert_allclose(draw.q_star.sum(axis=2), 1.0)
    assert set(np.unique(draw.z_star)) <= {0, 1}


def test_bad_forecast_inputs(two_state_params, rng):
    with pytest.raises(InputError):
        simulate_chain(two_state_params, np.zeros((5, 1)), np.zeros((6, 2, 1)), rng=rng)
    with pytest.raises(InputError):
        simulate_chain(two_state_params, np.zeros((5, 1)), np.zeros((5, 3, 1)), rng=rng)
    with pytest.raises(InputError):
        simulate_chain(two_state_params, np.zeros((5, 1)), np.zeros((5, 2, 1)), init_state=2, rng=rng)


def test_forecast_starts_from_last_state(two_state_params):
    store = store_of(two_state_params)
    store.states[0, -1] = 1
    # near-certain self transition out of state 1
    store.zeta[0, 0, 1] = -40.0
    draw = simulate_chain(store.draw(0), np.zeros((3, 1)), np.zeros((3, 2, 1)), rng=0)
    assert draw.z_star[0] == 1


def test_stationary_occupancy():
    Q = np.array([[0.9, 0.1], [0.2, 0.8]])
    zeta = np.array([[math.log(9.0), math.log(0.25)], [0.0, 0.0]])
    pi = stationary_distribution(Q)
    np.testing.assert_allclose(pi, [2 / 3, 1 / 3])

    factory = StreamFactory(4)
    occupancy = []
    for c in range(1000):
        _, z = sample_path(zeta, np.zeros((200, 0)), 0, factory.stream("simulate", c))
        occupancy.append((z[100:] == 0).mean())
    assert np.mean(occupancy) == pytest.approx(pi[0], abs=0.02)


def test_simulated_marginal_matches_mixture_cdf(two_state_params):
    rng = np.random.default_rng(21)
    R = 20_000
    w = np.zeros((R, 2, 1))
    grid = np.linspace(0.0, 12.0, 241)
    for k in (0, 1):
        y = simulate_observations(two_state_params, np.full(R, k), w, rng)
        for s in (0, 1):
            weights = mixing_weights(two_state_params.beta0[k, s], two_state_params.gamma[s])
            cdf = emission_cdf(grid, weights, two_state_params.lam[0, k, s], two_state_params.lam[1, k, s])
            empirical = (y[:, s][:, None] <= grid[None, :]).mean(axis=0)
            assert np.max(np.abs(empirical - cdf)) < 0.02


def test_synthetic_panel_shapes_and_mask(two_state_params):
    panel, cov, states = generate_synthetic(two_state_params, 300, 2, seed=5)
    assert panel.mask.all()
    assert panel.values.shape == (300, 2)
    assert states[0] == 0 and states.shape == (300,)
    assert cov.B == 1 and cov.A == 1

    holey, _, _ = generate_synthetic(two_state_params, 300, 2, missing_fraction=0.2, seed=5)
    assert (~holey.mask).sum() == 120
    np.testing.assert_array_equal(holey.values[holey.mask], panel.values[holey.mask])


def test_synthetic_is_seeded(two_state_params):
    a, _, za = generate_synthetic(two_state_params, 100, 2, seed=9)
    b, _, zb = generate_synthetic(two_state_params, 100, 2, seed=9)
    np.testing.assert_array_equal(a.values, b.values)
    np.testing.assert_array_equal(za, zb)


def test_synthetic_rejects_mismatched_truth(two_state_params):
    with pytest.raises(InputError):
        generate_synthetic(two_state_params, 100, 3)
    with pytest.raises(ConfigurationError):
        generate_synthetic(two_state_params, 100, 2, CovariateSpec(B=2, A=1))
    with pytest.raises(ConfigurationError):
        generate_synthetic(two_state_params, 100, 2, missing_fraction=1.0)


def test_synthetic_wet_frequency_reproduced(two_state_params):
    panel, cov, _ = generate_synthetic(two_state_params, 30_000, 2, seed=3)
    store = store_of(two_state_params, T=10)
    sims = simulate_panels(store, cov, 10, StreamFactory(3), init_state=0)
    simulated = np.mean([make_panel(s.y_star).wet_fraction() for s in sims], axis=0)
    np.testing.assert_allclose(simulated, wet_day_frequency(panel), atol=0.02)


def test_simulate_panels_cycles_draws(two_state_params):
    store = store_of(two_state_params)
    sims = simulate_panels(store, make_covariates(15, 2), 3, StreamFactory(0))
    assert len(sims) == 3
    assert not np.array_equal(sims[0].y_star, sims[1].y_star)
    with pytest.raises(ConfigurationError):
        simulate_panels(store, make_covariates(15, 2), 0, StreamFactory(0))


def test_scenario_follows_coefficient_sign():
    store = store_of(single_state(beta1=1.5))
    cov = make_covariates(365, 2)
    low = covariate_scenario_sweep(store, cov, "w", 0, "min", 20, StreamFactory(1))
    high = covariate_scenario_sweep(store, cov, "w", 0, "max", 20, StreamFactory(1))
    assert list(low.columns) == ["s1", "s2"]
    assert low.shape[0] == 365
    assert high.to_numpy().mean() > low.to_numpy().mean()


def test_scenario_chains_start_in_the_first_state():
    # two absorbing states: 0 always dry, 1 always wet
    params = ModelParams(
        zeta=np.array([[40.0, -40.0, 0.0], [0.0, 0.0, 0.0]]),
        lam=np.full((2, 2, 2), 1.0),
        beta0=np.array([[-50.0, -50.0], [50.0, 50.0]]),
        beta1=np.zeros((1, 2)),
        gamma=np.ones(2),
    )
    store = store_of(params, T=10)
    store.states[0, -1] = 1
    cov = make_covariates(40, 2)

    from_last = simulate_panels(store, cov, 2, StreamFactory(3))
    assert all(np.all(s.y_star > 0.0) for s in from_last)

    frame = covariate_scenario_sweep(store, cov, "x", 0, "mean", 2, StreamFactory(3))
    np.testing.assert_array_equal(frame.to_numpy(), 0.0)


def test_scenario_argument_checks():
    store = store_of(single_state())
    cov = make_covariates(30, 2)
    with pytest.raises(InputError):
        covariate_scenario_sweep(store, cov, "w", 3, "max", 2, StreamFactory(0))
    with pytest.raises(InputError):
        covariate_scenario_sweep(store, cov, "x", 0, "median", 2, StreamFactory(0))


def test_prior_draws_need_proper_priors(rng):
    with pytest.raises(ConfigurationError):
        sample_prior(PriorConfig(), 2, 1, 1, 1, rng)
    params = sample_prior(PriorConfig(zeta_precision=1.0, beta_precision=1.0), 3, 2, 1, 1, rng)
    params.validate()


def test_seasonal_summary_layout():
    sims = np.ones((4, 730, 2))
    sims[:, :, 1] = 3.0
    observed = make_panel(np.full((730, 2), 2.0))
    frame = seasonal_summary(sims, ["a", "b"], observed=observed)
    assert list(frame.columns) == ["day_of_year", "mean", "lower", "upper", "mean_a", "mean_b", "observed"]
    assert frame.shape[0] == 365
    np.testing.assert_allclose(frame["mean"], 2.0)
    np.testing.assert_allclose(frame["mean_b"], 3.0)
    np.testing.assert_allclose(frame["observed"], 2.0)
    assert frame["day_of_year"].iloc[0] == 1
