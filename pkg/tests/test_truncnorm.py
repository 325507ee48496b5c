import numpy as np
import pytest
from scipy import stats

from src.model.truncnorm import TAIL, truncated_normal


@pytest.mark.parametrize(
    "mu, lower, upper",
    [
        (0.0, -np.inf, 0.0),
        (0.3, 0.0, 0.9),
        (-1.0, 1.2, np.inf),
        (2.0, -0.5, 0.5),
    ],
)
def test_central_region_matches_scipy(mu, lower, upper):
    draws = truncated_normal(np.full(20_000, mu), lower, upper, np.random.default_rng(4))
    assert np.all((draws >= lower) & (draws <= upper))
    reference = stats.truncnorm(lower - mu, upper - mu, loc=mu)
    assert stats.kstest(draws, reference.cdf).pvalue > 0.01


@pytest.mark.parametrize("a", [TAIL, 8.0, 25.0])
def test_upper_tail_mean(a):
    draws = truncated_normal(np.zeros(20_000), a, np.inf, np.random.default_rng(7))
    assert np.all(draws >= a)
    assert draws.mean() == pytest.approx(stats.truncnorm(a, np.inf).mean(), abs=5e-3)


def test_lower_tail_is_mirrored():
    draws = truncated_normal(np.zeros(10_000), -np.inf, -9.0, np.random.default_rng(1))
    assert np.all(draws <= -9.0)
    assert draws.mean() == pytest.approx(-stats.truncnorm(9.0, np.inf).mean(), abs=5e-3)


def test_bounded_tail_interval():
    draws = truncated_normal(np.zeros(5_000), 6.0, 6.2, np.random.default_rng(2))
    assert np.all((draws >= 6.0) & (draws < 6.2))


def test_shape_is_preserved():
    mu = np.zeros((3, 4))
    out = truncated_normal(mu, 0.0, 1.0, np.random.default_rng(0))
    assert out.shape == (3, 4)
