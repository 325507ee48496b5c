"""Polya-Gamma PG(1, z) random variates.

``draw_pg1`` is the exact alternating-series sampler for shape 1: a proposal
mixing a truncated inverse-Gaussian (below ``TRUNC``) with a truncated
exponential (above it), accepted by evaluating partial sums of the tilted
Jacobi series until the alternating bound decides. All work is vectorized
over the requested draws; pending draws are retried in bulk.

``pg_oracle_draw`` is the truncated gamma-sum representation, kept as an
independent reference for tests.
"""

import logging
import math
from typing import Union

import numpy as np
from scipy.special import log_ndtr

from src.util.errors import ConfigurationError, InputError
from src.util.rng import as_generator

logger = logging.getLogger(__name__)

TRUNC = 0.64
TRUNC_RECIP = 1.0 / TRUNC
MAX_SERIES_TERMS = 200
MIN_ORACLE_TERMS = 100

ArrayLike = Union[float, np.ndarray]


def pg_mean(tilt: ArrayLike) -> ArrayLike:
    """Mean of PG(1, z): tanh(z/2) / (2z), 1/4 at z = 0."""
    z = np.abs(np.asarray(tilt, dtype=float))
    small = z < 1e-8
    safe = np.where(small, 1.0, z)
    mean = np.where(small, 0.25, np.tanh(safe / 2.0) / (2.0 * safe))
    return float(mean) if mean.ndim == 0 else mean


def _series_coef(n: int, x: np.ndarray) -> np.ndarray:
    k = (n + 0.5) * math.pi
    out = np.empty_like(x)

    right = x > TRUNC
    out[right] = k * np.exp(-0.5 * k * k * x[right])

    left = ~right
    xl = x[left]
    expnt = (
        -1.5 * (math.log(0.5 * math.pi) + np.log(xl))
        + math.log(k)
        - 2.0 * (n + 0.5) ** 2 / xl
    )
    out[left] = np.exp(expnt)
    return out


def _exponential_mass(z: np.ndarray) -> np.ndarray:
    t = TRUNC
    fz = 0.125 * math.pi**2 + 0.5 * z * z
    b = math.sqrt(1.0 / t) * (t * z - 1.0)
    a = -math.sqrt(1.0 / t) * (t * z + 1.0)
    x0 = np.log(fz) + fz * t
    xb = x0 - z + log_ndtr(b)
    xa = x0 + z + log_ndtr(a)
    qdivp = 4.0 / math.pi * (np.exp(xb) + np.exp(xa))
    return 1.0 / (1.0 + qdivp)


def _truncated_inverse_gaussian(z: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    t = TRUNC
    out = np.empty_like(z)

    # mu = 1/z above the truncation point: chi-square proposal, exp tilt accept
    wide = np.flatnonzero(z < TRUNC_RECIP)
    while wide.size:
        zz = z[wide]
        e1 = rng.standard_exponential(wide.size)
        e2 = rng.standard_exponential(wide.size)
        redo = np.flatnonzero(e1 * e1 > 2.0 * e2 / t)
        while redo.size:
            e1[redo] = rng.standard_exponential(redo.size)
            e2[redo] = rng.standard_exponential(redo.size)
            redo = redo[e1[redo] * e1[redo] > 2.0 * e2[redo] / t]
        x = t / (1.0 + e1 * t) ** 2
        alpha = np.exp(-0.5 * zz * zz * x)
        ok = rng.random(wide.size) <= alpha
        out[wide[ok]] = x[ok]
        wide = wide[~ok]

    # mu below the truncation point: inverse-Gaussian draws until one lands below t
    narrow = np.flatnonzero(z >= TRUNC_RECIP)
    while narrow.size:
        mu = 1.0 / z[narrow]
        y = rng.standard_normal(narrow.size) ** 2
        mu_y = mu * y
        x = mu + 0.5 * mu * mu_y - 0.5 * mu * np.sqrt(4.0 * mu_y + mu_y * mu_y)
        flip = rng.random(narrow.size) > mu / (mu + x)
        x[flip] = mu[flip] ** 2 / x[flip]
        ok = x <= t
        out[narrow[ok]] = x[ok]
        narrow = narrow[~ok]

    return out


def _draw_jacobi(z: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Draws J*(1, z) for half-tilts z >= 0; PG(1, 2z) is a quarter of it."""
    out = np.empty_like(z)
    pending = np.arange(z.size)
    retries = 0

    while pending.size:
        zp = z[pending]
        fz = 0.125 * math.pi**2 + 0.5 * zp * zp

        x = np.empty_like(zp)
        use_exp = rng.random(zp.size) < _exponential_mass(zp)
        x[use_exp] = TRUNC + rng.standard_exponential(int(use_exp.sum())) / fz[use_exp]
        x[~use_exp] = _truncated_inverse_gaussian(zp[~use_exp], rng)

        s = _series_coef(0, x)
        y = rng.random(x.size) * s
        accepted = np.zeros(x.size, dtype=bool)
        undecided = np.ones(x.size, dtype=bool)

        for n in range(1, MAX_SERIES_TERMS + 1):
            idx = np.flatnonzero(undecided)
            if not idx.size:
                break
            coef = _series_coef(n, x[idx])
            if n % 2 == 1:
                s[idx] -= coef
                hit = idx[y[idx] <= s[idx]]
                accepted[hit] = True
                undecided[hit] = False
            else:
                s[idx] += coef
                undecided[idx[y[idx] > s[idx]]] = False

        if undecided.any():
            retries += int(undecided.sum())

        out[pending[accepted]] = x[accepted]
        pending = pending[~accepted]

    if retries:
        logger.debug(f"pg series cap reached {retries} times, draws retried")

    return out


def draw_pg1(tilt: ArrayLike, rng) -> ArrayLike:
    """Exact draw(s) from PG(1, tilt); symmetric in the sign of tilt."""
    rng = as_generator(rng)
    arr = np.asarray(tilt, dtype=float)

    if not np.all(np.isfinite(arr)):
        raise InputError("polya-gamma tilt must be finite")

    flat = np.abs(arr).ravel() * 0.5
    draws = 0.25 * _draw_jacobi(flat, rng)

    if arr.ndim == 0:
        return float(draws[0])
    return draws.reshape(arr.shape)


def pg_oracle_draw(
    b: float,
    tilt: float,
    terms: int,
    rng,
    size: int = None,
    chunk: int = 512,
) -> ArrayLike:
    """Approximate PG(b, tilt) draw(s) from the truncated gamma-sum series."""
    if terms < MIN_ORACLE_TERMS:
        raise ConfigurationError(
            f"oracle needs at least {MIN_ORACLE_TERMS} terms, got {terms}",
            {"terms": terms},
        )
    if b <= 0:
        raise ConfigurationError("oracle shape must be positive", {"b": b})
    if not math.isfinite(tilt):
        raise InputError("polya-gamma tilt must be finite")

    rng = as_generator(rng)
    k = np.arange(1, terms + 1, dtype=float)
    weights = 1.0 / (2.0 * math.pi**2 * ((k - 0.5) ** 2 + tilt**2 / (4.0 * math.pi**2)))

    n = 1 if size is None else int(size)
    out = np.empty(n)
    for start in range(0, n, chunk):
        stop = min(start + chunk, n)
        g = rng.gamma(b, 1.0, size=(stop - start, terms))
        out[start:stop] = g @ weights

    return float(out[0]) if size is None else out
