"""Vectorized N(mu, 1) draws truncated to (lower, upper).

Inverse-CDF sampling covers the central region; when the whole interval lies
more than ``TAIL`` standard deviations from the mean, exponential rejection
(Robert's translated-exponential proposal) takes over, since the normal CDF
has no resolution left out there.
"""

import numpy as np
from scipy.special import ndtr, ndtri

from src.util.rng import as_generator

TAIL = 5.0


def _inverse_cdf(a: np.ndarray, b: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    # work in whichever half keeps the CDF values away from 1
    flip = a > 0.0
    lo = np.where(flip, -b, a)
    hi = np.where(flip, -a, b)
    p_lo = ndtr(lo)
    p_hi = ndtr(hi)
    u = p_lo + rng.random(a.shape) * (p_hi - p_lo)
    x = ndtri(np.clip(u, np.finfo(float).tiny, 1.0 - np.finfo(float).eps))
    x = np.clip(x, lo, hi)
    return np.where(flip, -x, x)


def _upper_tail(a: np.ndarray, b: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Standard normal truncated to (a, b) with a >= TAIL."""
    out = np.empty_like(a)
    pending = np.arange(a.size)
    while pending.size:
        aa = a[pending]
        alpha = 0.5 * (aa + np.sqrt(aa * aa + 4.0))
        z = aa + rng.standard_exponential(pending.size) / alpha
        ok = (np.log(rng.random(pending.size)) <= -0.5 * (z - alpha) ** 2) & (z < b[pending])
        out[pending[ok]] = z[ok]
        pending = pending[~ok]
    return out


def truncated_normal(mu, lower, upper, rng) -> np.ndarray:
    rng = as_generator(rng)
    mu, lower, upper = np.broadcast_arrays(
        np.asarray(mu, dtype=float),
        np.asarray(lower, dtype=float),
        np.asarray(upper, dtype=float),
    )
    shape = mu.shape
    a = (lower - mu).ravel()
    b = (upper - mu).ravel()
    out = np.empty(a.size)

    right = a >= TAIL
    left = b <= -TAIL
    central = ~(right | left)

    if central.any():
        out[central] = _inverse_cdf(a[central], b[central], rng)
    if right.any():
        out[right] = _upper_tail(a[right], b[right], rng)
    if left.any():
        out[left] = -_upper_tail(-b[left], -a[left], rng)

    return (out + mu.ravel()).reshape(shape)
