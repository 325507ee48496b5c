"""Direct Gibbs sampling of the hidden chain and per-day state summaries.

States are 0-based internally; day 0 is pinned to state 0.
"""

import logging
from typing import Optional, Tuple

import numpy as np

from src.util.errors import NumericalError
from src.util.rng import as_generator

logger = logging.getLogger(__name__)


def initial_states(T: int, K: int, rng) -> np.ndarray:
    rng = as_generator(rng)
    z = rng.integers(0, K, size=T)
    if T:
        z[0] = 0
    return z.astype(np.int64)


def state_weights(
    t: int,
    chain: np.ndarray,
    log_q_prev: np.ndarray,
    log_q_next: Optional[np.ndarray],
    log_f: np.ndarray,
) -> np.ndarray:
    """Normalized full-conditional probabilities of z_t."""
    w = log_q_prev[chain[t - 1], :] + log_f
    if log_q_next is not None:
        w = w + log_q_next[:, chain[t + 1]]

    top = w.max()
    if not np.isfinite(top):
        raise NumericalError(f"no state has positive weight on day {t + 1}", {"day": t + 1})

    p = np.exp(w - top)
    return p / p.sum()


def sample_state_at(t, chain, log_q_prev, log_q_next, log_f, rng) -> int:
    rng = as_generator(rng)
    p = state_weights(t, chain, log_q_prev, log_q_next, log_f)
    return int(min(np.searchsorted(np.cumsum(p), rng.random(), side="right"), p.size - 1))


def sweep_states(chain: np.ndarray, log_q: np.ndarray, log_f: np.ndarray, rng) -> np.ndarray:
    """One left-to-right pass over days 2..T.

    log_q[t] is the log transition matrix into day t; log_f[t, k] the
    emission log-density of day t under state k (missing cells already
    contribute zero).
    """
    rng = as_generator(rng)
    z = np.array(chain, dtype=np.int64, copy=True)
    T = z.shape[0]
    K = log_f.shape[1] if log_f.ndim == 2 else 1
    if T < 2 or K == 1:
        return z

    u = rng.random(T)
    last = T - 1
    for t in range(1, T):
        w = log_q[t, z[t - 1], :] + log_f[t]
        if t < last:
            w = w + log_q[t + 1, :, z[t + 1]]

        top = w.max()
        if not np.isfinite(top):
            raise NumericalError(f"no state has positive weight on day {t + 1}", {"day": t + 1})

        cdf = np.cumsum(np.exp(w - top))
        z[t] = min(int(np.searchsorted(cdf, u[t] * cdf[-1], side="right")), K - 1)

    return z


def most_probable_states(draws: np.ndarray, K: Optional[int] = None) -> np.ndarray:
    """Per-day mode over retained chains; ties go to the smaller state."""
    draws = np.atleast_2d(np.asarray(draws))
    K = int(draws.max()) + 1 if K is None else K
    counts = np.stack([(draws == k).sum(axis=0) for k in range(K)])
    return counts.argmax(axis=0).astype(np.int64)


def state_rainfall_profile(
    values: np.ndarray, mask: np.ndarray, states: np.ndarray, K: int
) -> Tuple[np.ndarray, np.ndarray]:
    """Mean observed rainfall per (state, station) and day count per state."""
    S = values.shape[1]
    means = np.full((K, S), np.nan)
    days = np.bincount(states, minlength=K)
    for k in range(K):
        on = states == k
        n = mask[on].sum(axis=0)
        total = np.where(mask[on], values[on], 0.0).sum(axis=0)
        with np.errstate(invalid="ignore", divide="ignore"):
            means[k] = np.where(n > 0, total / n, np.nan)
    return means, days


def state_seasonal_counts(states: np.ndarray, K: int, period: int = 365) -> np.ndarray:
    doy = np.arange(states.shape[0]) % period
    counts = np.zeros((period, K), dtype=np.int64)
    np.add.at(counts, (doy, states), 1)
    return counts
