import math

import numpy as np
import pytest
from scipy.integrate import quad, trapezoid
from scipy.special import ndtr, ndtri

from src.model.emission import (
    EmissionDiagnostics,
    MixingWeights,
    cutpoint_log_likelihood,
    draw_emission,
    emission_cdf,
    emission_density,
    log_emission_density,
    mixing_weights,
    order_rates,
    sample_gamma_collapsed,
    sample_gamma_cutpoint,
    sample_L,
    sample_lambda,
    sample_M,
    sample_station_betas,
    sample_station_lambdas,
    state_log_densities,
    sweep_station,
)
from src.util.errors import InputError


def weights(p0, p1, p2):
    return MixingWeights(np.asarray(p0, dtype=float), np.asarray(p1, dtype=float), np.asarray(p2, dtype=float))


def test_weights_without_upper_tail():
    p = mixing_weights(0.0, np.inf)
    assert (p.p0, p.p1, p.p2) == pytest.approx((0.5, 0.5, 0.0))


def test_weights_at_quartile_cutpoint():
    p = mixing_weights(0.0, ndtri(0.75))
    assert (p.p0, p.p1, p.p2) == pytest.approx((0.5, 0.25, 0.25))


def test_weights_sum_to_one(rng):
    mu = rng.normal(0, 3, size=1000)
    gamma = rng.uniform(0.01, 5, size=1000)
    p = mixing_weights(mu, gamma)
    np.testing.assert_allclose(p.p0 + p.p1 + p.p2, 1.0, atol=1e-15)
    assert np.all(p.p1 >= 0.0)


def test_nonpositive_cutpoint_rejected():
    with pytest.raises(InputError):
        mixing_weights(0.0, 0.0)


def test_density_point_mass_and_mixture():
    w = weights(0.5, 0.3, 0.2)
    assert emission_density(0.0, w, 2.0, 0.5) == pytest.approx(0.5)
    expected = 0.3 * 2 * math.exp(-2) + 0.2 * 0.5 * math.exp(-0.5)
    assert emission_density(1.0, w, 2.0, 0.5) == pytest.approx(expected)
    assert emission_density(1.0, w, 2.0, 0.5) == pytest.approx(0.14185, abs=1e-5)


def test_density_single_component():
    assert emission_density(0.7, weights(0, 1, 0), 1.0, 3.0) == pytest.approx(math.exp(-0.7))


def test_negative_rainfall_rejected():
    with pytest.raises(InputError):
        emission_density(-0.1, weights(0.5, 0.3, 0.2), 1.0, 1.0)


def test_log_density_handles_zero_weights():
    out = log_emission_density(np.array([0.0, 2.0]), weights(0.0, 1.0, 0.0), 1.0, 1.0)
    assert out[0] == -np.inf
    assert out[1] == pytest.approx(-2.0)


def test_cdf_matches_integrated_density():
    w = weights(0.4, 0.35, 0.25)
    grid = np.linspace(0.0, 5.0, 20001)
    dens = emission_density(grid[1:], w, 2.0, 0.3)
    integral = 0.4 + trapezoid(dens, grid[1:])
    assert emission_cdf(5.0, w, 2.0, 0.3) == pytest.approx(integral, abs=1e-3)


def test_draws_from_point_mass_are_zero(rng):
    assert np.all(draw_emission(weights(np.ones(100), np.zeros(100), np.zeros(100)), 1.0, 1.0, rng) == 0.0)


def test_draw_mean_of_light_component(rng):
    y = draw_emission(weights(np.zeros(50_000), np.ones(50_000), np.zeros(50_000)), 2.0, 0.1, rng)
    assert y.mean() == pytest.approx(0.5, rel=0.02)


def test_zero_rain_is_dry_category(rng):
    L = sample_L(np.zeros(100), weights(0.2, 0.4, 0.4), 1.0, 1.0, rng)
    assert np.all(L == 0)


def test_no_heavy_weight_means_light(rng):
    L = sample_L(np.full(200, 3.0), weights(0.5, 0.5, 0.0), 1.0, 0.2, rng)
    assert np.all(L == 1)


def test_light_probability_by_normalization(rng):
    n = 100_000
    L = sample_L(np.ones(n), weights(0.2, 0.4, 0.4), 2.0, 0.5, rng)
    expected = 2 * math.exp(-2) / (2 * math.exp(-2) + 0.5 * math.exp(-0.5))
    assert expected == pytest.approx(0.4716, abs=1e-4)
    se = math.sqrt(expected * (1 - expected) / n)
    assert abs((L == 1).mean() - expected) < 4 * se


def test_latent_draws_respect_categories(rng):
    gamma = 0.9
    assert np.all(sample_M(np.zeros(1000, dtype=int), 0.0, gamma, rng) < 0.0)
    light = sample_M(np.ones(1000, dtype=int), 0.3, gamma, rng)
    assert np.all((light > 0.0) & (light < gamma))
    heavy = sample_M(np.full(1000, 2), 0.3, gamma, rng)
    assert np.all(heavy > gamma)


def test_deep_tail_latent_mean(rng):
    M = sample_M(np.full(50_000, 2), -10.0, 1.0, rng)
    assert np.all(np.isfinite(M))
    # E[X | X > a] for X ~ N(mu, 1), a - mu = 11
    a = 11.0
    expected = -10.0 + math.exp(-0.5 * a * a) / math.sqrt(2 * math.pi) / (0.5 * math.erfc(a / math.sqrt(2)))
    assert M.mean() == pytest.approx(expected, abs=0.01)


def test_cutpoint_interval_from_neighbours(rng):
    M = np.array([-1.0, 0.4, 0.9])
    L = np.array([0, 1, 2])
    draws = np.array([sample_gamma_cutpoint(M, L, 0.5, rng) for _ in range(2000)])
    assert np.all((draws >= 0.4) & (draws <= 0.9))
    assert draws.mean() == pytest.approx(0.65, abs=0.02)


def test_cutpoint_without_heavy_days_uses_cap(rng):
    M = np.array([-0.3, 0.2, 1.4])
    L = np.array([0, 1, 1])
    draws = np.array([sample_gamma_cutpoint(M, L, 0.5, rng, cap=10.0) for _ in range(500)])
    assert np.all((draws >= 1.4) & (draws <= 10.0))


def test_empty_cutpoint_interval_keeps_previous(rng):
    diagnostics = EmissionDiagnostics()
    M = np.array([0.7, 0.7])
    L = np.array([1, 2])
    assert sample_gamma_cutpoint(M, L, 0.55, rng, diagnostics=diagnostics, station=3) == 0.55
    assert diagnostics.cutpoints_kept == 1
    assert diagnostics.events[0]["station"] == 3


def test_intercept_only_beta_posterior(rng):
    T = 400
    M = rng.normal(0.3, 1.0, size=T)
    states = np.zeros(T, dtype=int)
    draws = np.array(
        [sample_station_betas(M, states, np.zeros((T, 0)), 1, rng)[0][0] for _ in range(4000)]
    )
    assert draws.mean() == pytest.approx(M.mean(), abs=0.005)
    assert draws.var() == pytest.approx(1.0 / T, rel=0.1)


def test_beta_recovery(rng):
    T = 5000
    states = rng.integers(0, 2, size=T)
    w = rng.standard_normal((T, 1))
    truth0, truth1 = np.array([-0.5, 1.0]), np.array([0.7])
    M = truth0[states] + w @ truth1 + rng.standard_normal(T)
    b0, b1 = sample_station_betas(M, states, w, 2, rng)
    sd = 1.0 / math.sqrt(T / 2)
    assert np.all(np.abs(b0 - truth0) < 5 * sd)
    assert abs(b1[0] - truth1[0]) < 5 / math.sqrt(T)


def test_constant_zero_covariate_falls_back_to_ridge(rng):
    T = 100
    diagnostics = EmissionDiagnostics()
    b0, b1 = sample_station_betas(
        rng.standard_normal(T), np.zeros(T, dtype=int), np.zeros((T, 1)), 1, rng, diagnostics=diagnostics, station=0
    )
    assert np.isfinite(b1[0])
    assert diagnostics.ridge_jitters == 1


def test_lambda_conjugate_update(rng):
    y = np.full(10, 0.5)
    draws = np.array([sample_lambda(y, rng) for _ in range(20_000)])
    # Gamma(11, rate 6)
    assert draws.mean() == pytest.approx(11 / 6, rel=0.02)
    assert draws.var() == pytest.approx(11 / 36, rel=0.05)


def test_lambda_prior_on_empty_cell(rng):
    draws = np.array([sample_lambda(np.zeros(0), rng) for _ in range(20_000)])
    assert draws.mean() == pytest.approx(1.0, rel=0.03)


def test_lambda_concentrates_on_true_rate(rng):
    y = rng.exponential(1 / 2.5, size=100_000)
    assert sample_lambda(y, rng) == pytest.approx(2.5, rel=0.02)


def test_station_lambdas_use_category_and_state(rng):
    y = np.array([0.0, 1.0, 1.0, 4.0, 4.0, 4.0])
    L = np.array([0, 1, 1, 2, 2, 2])
    states = np.array([0, 0, 0, 1, 1, 1])
    lam = np.mean([sample_station_lambdas(y, L, states, 2, rng) for _ in range(5000)], axis=0)
    assert lam.shape == (2, 2)
    # light/state 0: Gamma(3, 3); heavy/state 1: Gamma(4, 13); others prior
    assert lam[0, 0] == pytest.approx(1.0, rel=0.05)
    assert lam[1, 1] == pytest.approx(4 / 13, rel=0.05)
    assert lam[0, 1] == pytest.approx(1.0, rel=0.05)


def test_order_rates_sorts_components():
    lam = np.array([[[0.2, 3.0]], [[1.0, 0.5]]])
    ordered = order_rates(lam)
    np.testing.assert_array_equal(ordered[0], [[1.0, 3.0]])
    np.testing.assert_array_equal(ordered[1], [[0.2, 0.5]])


def test_station_sweep_keeps_invariants(rng):
    T = 300
    states = rng.integers(0, 2, size=T)
    y = np.where(rng.random(T) < 0.5, 0.0, rng.exponential(2.0, size=T))
    update = sweep_station(
        y, states, rng.standard_normal((T, 1)), np.zeros(2), np.zeros(1), np.ones((2, 2)), 1.0, rng
    )
    assert update.gamma > 0.0
    assert np.all(update.lam > 0.0)
    assert np.all(update.L[y == 0.0] == 0)
    assert np.all(update.M[update.L == 0] < 0.0)


def test_missing_cells_contribute_nothing(two_state_params):
    y = np.array([[0.0, 1.2], [3.0, 0.0], [0.5, 0.1]])
    mask = np.array([[True, False], [False, False], [True, True]])
    w = np.zeros((3, 2, 1))
    out = state_log_densities(y, mask, two_state_params, w)
    np.testing.assert_array_equal(out[1], 0.0)

    full = state_log_densities(y, np.ones_like(mask), two_state_params, w)
    assert out[2] == pytest.approx(full[2])


@pytest.mark.parametrize("mu, gamma", [(-9.0, 0.5), (9.0, 0.5), (-30.0, 2.0)])
def test_light_weight_keeps_tail_precision(mu, gamma):
    p = mixing_weights(mu, gamma)
    exact = ndtr(min(gamma - mu, mu)) - ndtr(min(-mu, mu - gamma))
    assert p.p1 > 0.0
    assert p.p1 == pytest.approx(exact, rel=1e-10)


def test_density_integrates_to_one_for_random_parameters(rng):
    for _ in range(40):
        mu = rng.normal(0.0, 1.5)
        gamma = rng.uniform(0.05, 3.0)
        light, heavy = rng.uniform(0.2, 5.0), rng.uniform(0.02, 0.5)
        w = mixing_weights(mu, gamma)
        wet, _ = quad(lambda y: emission_density(y, w, light, heavy), 0.0, np.inf, limit=200)
        assert float(w.p0) + wet == pytest.approx(1.0, abs=1e-7)


def test_cutpoint_likelihood_matches_category_weights(rng):
    mu = rng.normal(0.5, 1.0, size=200)
    L = rng.integers(0, 3, size=200)
    p = mixing_weights(mu, 0.7)
    expected = np.log(p.p1[L == 1]).sum() + np.log(p.p2[L == 2]).sum()
    assert cutpoint_log_likelihood(0.7, L, mu) == pytest.approx(expected)


def test_collapsed_cutpoint_targets_its_conditional():
    rng = np.random.default_rng(44)
    n = 3000
    mu = rng.normal(0.8, 0.5, size=n)
    M = mu + rng.standard_normal(n)
    L = np.where(M < 0.0, 0, np.where(M < 0.6, 1, 2))

    gamma, draws = 2.5, []
    for i in range(3000):
        gamma = sample_gamma_collapsed(L, mu, gamma, rng)
        if i >= 500:
            draws.append(gamma)
    draws = np.array(draws)
    assert np.unique(draws).size > 100
    assert draws.mean() == pytest.approx(0.6, abs=0.05)


def test_collapsed_cutpoint_without_wet_days_stays(rng):
    assert sample_gamma_collapsed(np.zeros(10, dtype=int), np.zeros(10), 1.3, rng) == 1.3


def test_cutpoint_recovered_by_station_sweeps():
    rng = np.random.default_rng(9)
    T = 3000
    w = rng.standard_normal((T, 1))
    mu = 0.3 + 0.4 * w[:, 0]
    truth = 0.55
    y = draw_emission(mixing_weights(mu, truth), 2.0, 0.2, rng)
    states = np.zeros(T, dtype=int)

    beta0, beta1, lam, gamma = np.zeros(1), np.zeros(1), np.array([[2.0], [0.2]]), 1.5
    trace = []
    for i in range(400):
        update = sweep_station(y, states, w, beta0, beta1, lam, gamma, rng)
        beta0, beta1, lam, gamma = update.beta0, update.beta1, update.lam, update.gamma
        if i >= 200:
            trace.append(gamma)
    assert abs(np.mean(trace) - truth) < 0.15
    assert np.std(trace) > 0.0
