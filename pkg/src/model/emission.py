"""Zero-inflated two-exponential emissions with ordered-probit mixing weights.

Category 0 is a dry day (point mass at zero), 1 light rain with rate
lam[0], 2 heavy rain with rate lam[1]. The latent normal M maps onto the
categories through the fixed cutpoint 0 and the free cutpoint gamma:
L = 0 iff M < 0, L = 1 iff 0 < M < gamma, L = 2 iff M > gamma.
"""

import logging
from dataclasses import dataclass, field
from typing import NamedTuple, Tuple

import numpy as np
from scipy.linalg import LinAlgError, cho_solve, cholesky, solve_triangular
from scipy.special import log_ndtr, ndtr

from src.model.truncnorm import truncated_normal
from src.util.errors import InputError
from src.util.rng import as_generator

logger = logging.getLogger(__name__)

GAMMA_CAP = 10.0
GAMMA_STEP = 2.5
RIDGE_JITTER = 1e-8


class MixingWeights(NamedTuple):
    p0: np.ndarray
    p1: np.ndarray
    p2: np.ndarray


@dataclass
class EmissionDiagnostics:
    cutpoints_kept: int = 0
    ridge_jitters: int = 0
    events: list = field(default_factory=list)

    def record(self, kind: str, **details) -> None:
        if kind == "cutpoint_kept":
            self.cutpoints_kept += 1
        elif kind == "ridge_jitter":
            self.ridge_jitters += 1
        self.events.append({"kind": kind, **details})

    def merge(self, other: "EmissionDiagnostics") -> None:
        self.cutpoints_kept += other.cutpoints_kept
        self.ridge_jitters += other.ridge_jitters
        self.events.extend(other.events)

    def to_json(self) -> dict:
        return {
            "cutpoints_kept": self.cutpoints_kept,
            "ridge_jitters": self.ridge_jitters,
        }


def mixing_weights(mu, gamma) -> MixingWeights:
    mu = np.asarray(mu, dtype=float)
    gamma = np.asarray(gamma, dtype=float)
    if np.any(gamma <= 0.0):
        raise InputError("cutpoint must be positive")

    p0 = ndtr(-mu)
    p2 = ndtr(mu - gamma)
    p1 = interval_mass(-mu, gamma - mu)
    return MixingWeights(p0, p1, p2)


def interval_mass(a, b) -> np.ndarray:
    """Phi(b) - Phi(a) for a <= b, taken in the lower tail so neither term rounds to 1."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    upper = a > 0.0
    mass = np.where(upper, ndtr(-a) - ndtr(-b), ndtr(b) - ndtr(a))
    return np.maximum(mass, 0.0)


def log_emission_density(y, weights: MixingWeights, lambda1, lambda2) -> np.ndarray:
    """Elementwise log of emission_density; log p0 on exact zeros."""
    y = np.asarray(y, dtype=float)
    with np.errstate(divide="ignore"):
        log_p0 = np.log(weights.p0)
        light = np.log(weights.p1) + np.log(lambda1) - lambda1 * y
        heavy = np.log(weights.p2) + np.log(lambda2) - lambda2 * y
    wet = np.logaddexp(light, heavy)
    return np.where(y == 0.0, log_p0, wet)


def emission_density(y, weights: MixingWeights, lambda1, lambda2):
    """Point mass p0 at y == 0, mixture density of the two exponentials otherwise."""
    arr = np.asarray(y, dtype=float)
    if np.any(arr < 0.0):
        raise InputError("rainfall cannot be negative")
    out = np.exp(log_emission_density(arr, weights, lambda1, lambda2))
    return float(out) if out.ndim == 0 else out


def emission_cdf(y, weights: MixingWeights, lambda1, lambda2):
    y = np.maximum(np.asarray(y, dtype=float), 0.0)
    return (
        weights.p0
        + weights.p1 * -np.expm1(-lambda1 * y)
        + weights.p2 * -np.expm1(-lambda2 * y)
    )


def draw_emission(weights: MixingWeights, lambda1, lambda2, rng) -> np.ndarray:
    """Mixture draws: pick a category from the weights, then 0 or an exponential."""
    rng = as_generator(rng)
    p0, p1, p2 = np.broadcast_arrays(*weights)
    lambda1 = np.broadcast_to(lambda1, p0.shape)
    lambda2 = np.broadcast_to(lambda2, p0.shape)

    u = rng.random(p0.shape)
    expo = rng.standard_exponential(p0.shape)
    light = (u >= p0) & (u < p0 + p1)
    heavy = u >= p0 + p1

    out = np.zeros(p0.shape)
    out[light] = expo[light] / lambda1[light]
    out[heavy] = expo[heavy] / lambda2[heavy]
    return out


def sample_L(y, weights: MixingWeights, lambda1, lambda2, rng) -> np.ndarray:
    """Rain category given an observed amount; y == 0 forces the dry category."""
    rng = as_generator(rng)
    y = np.asarray(y, dtype=float)
    with np.errstate(divide="ignore"):
        light = np.log(weights.p1) + np.log(lambda1) - lambda1 * y
        heavy = np.log(weights.p2) + np.log(lambda2) - lambda2 * y

    with np.errstate(invalid="ignore", over="ignore"):
        prob_light = 1.0 / (1.0 + np.exp(heavy - light))
    # both components at -inf: keep the larger log-density (ties go light)
    degenerate = ~np.isfinite(light) & ~np.isfinite(heavy)
    prob_light = np.where(degenerate, (light >= heavy).astype(float), prob_light)

    L = np.where(rng.random(y.shape) < prob_light, 1, 2)
    return np.where(y == 0.0, 0, L).astype(np.int8)


def latent_bounds(L, gamma) -> Tuple[np.ndarray, np.ndarray]:
    L = np.asarray(L)
    gamma = np.broadcast_to(np.asarray(gamma, dtype=float), L.shape)
    lower = np.where(L == 0, -np.inf, np.where(L == 1, 0.0, gamma))
    upper = np.where(L == 0, 0.0, np.where(L == 1, gamma, np.inf))
    return lower, upper


def sample_M(L, mu, gamma, rng) -> np.ndarray:
    lower, upper = latent_bounds(L, gamma)
    return truncated_normal(mu, lower, upper, rng)


def sample_gamma_cutpoint(
    M: np.ndarray,
    L: np.ndarray,
    previous: float,
    rng,
    cap: float = GAMMA_CAP,
    diagnostics: EmissionDiagnostics = None,
    station: int = None,
) -> float:
    rng = as_generator(rng)
    light = M[L == 1]
    heavy = M[L == 2]

    low = max(0.0, float(light.max())) if light.size else 0.0
    high = min(float(heavy.min()), cap) if heavy.size else cap

    if not low < high:
        logger.debug(f"cutpoint interval ({low}, {high}) empty at station {station}, kept {previous}")
        if diagnostics is not None:
            diagnostics.record("cutpoint_kept", station=station, low=low, high=high)
        return float(previous)

    return float(rng.uniform(low, high))


def cutpoint_log_likelihood(gamma: float, L: np.ndarray, mu: np.ndarray) -> float:
    """log P(L | mu, gamma) with M integrated out; dry days do not involve gamma."""
    light = mu[L == 1]
    heavy = mu[L == 2]
    with np.errstate(divide="ignore"):
        return float(np.log(interval_mass(-light, gamma - light)).sum() + log_ndtr(heavy - gamma).sum())


def sample_gamma_collapsed(
    L: np.ndarray,
    mu: np.ndarray,
    previous: float,
    rng,
    cap: float = GAMMA_CAP,
    step: float = GAMMA_STEP,
) -> float:
    """Metropolis move on gamma given L and mu alone.

    The latent M is redrawn afterwards, so the pair (gamma, M) moves as one
    block. The proposal is a normal around the current value truncated to
    (0, cap), with scale step / sqrt(wet days).
    """
    rng = as_generator(rng)
    wet = int(np.count_nonzero(L > 0))
    if wet == 0:
        return float(previous)

    scale = step / np.sqrt(wet)
    proposal = float(previous + scale * truncated_normal(0.0, -previous / scale, (cap - previous) / scale, rng))
    if not 0.0 < proposal < cap:
        return float(previous)

    def log_norm(g):
        return float(np.log(interval_mass(-g / scale, (cap - g) / scale)))

    current = cutpoint_log_likelihood(previous, L, mu)
    candidate = cutpoint_log_likelihood(proposal, L, mu)
    if not np.isfinite(candidate):
        return float(previous)
    if not np.isfinite(current):
        return proposal

    log_ratio = candidate - current + log_norm(previous) - log_norm(proposal)
    return proposal if np.log(rng.random()) < log_ratio else float(previous)


def station_design(states: np.ndarray, w_s: np.ndarray, K: int) -> np.ndarray:
    """[one-hot(z_t) | w[t, s, :]] for one station."""
    return np.hstack([np.eye(K)[states], w_s])


def sample_station_betas(
    M_s: np.ndarray,
    states: np.ndarray,
    w_s: np.ndarray,
    K: int,
    rng,
    prior_precision: float = 0.0,
    diagnostics: EmissionDiagnostics = None,
    station: int = None,
) -> Tuple[np.ndarray, np.ndarray]:
    """Conjugate N(0, 1/prior_precision) linear-model update of (beta0[:, s], beta1[:, s])."""
    rng = as_generator(rng)
    D = station_design(states, w_s, K)
    P = D.T @ D + prior_precision * np.eye(D.shape[1])
    rhs = D.T @ M_s

    try:
        chol = cholesky(P, lower=True)
    except LinAlgError:
        logger.debug(f"singular beta design at station {station}, ridge {RIDGE_JITTER} added")
        if diagnostics is not None:
            diagnostics.record("ridge_jitter", station=station)
        chol = cholesky(P + RIDGE_JITTER * np.eye(P.shape[0]), lower=True)

    mean = cho_solve((chol, True), rhs)
    draw = mean + solve_triangular(chol.T, rng.standard_normal(D.shape[1]), lower=False)
    return draw[:K], draw[K:]


def sample_betas(M, states, w, K, rng, prior_precision=0.0, diagnostics=None):
    """Station-by-station beta update; returns (beta0 (K, S), beta1 (A, S))."""
    rng = as_generator(rng)
    T, S = M.shape
    A = w.shape[2]
    beta0 = np.empty((K, S))
    beta1 = np.empty((A, S))
    for s in range(S):
        beta0[:, s], beta1[:, s] = sample_station_betas(
            M[:, s], states, w[:, s, :], K, rng, prior_precision, diagnostics, s
        )
    return beta0, beta1


def sample_lambda(y_cell: np.ndarray, rng, shape: float = 1.0, rate: float = 1.0) -> float:
    """Gamma(shape + n, rate + sum y) draw for one (component, state, station) cell."""
    rng = as_generator(rng)
    y_cell = np.asarray(y_cell, dtype=float)
    return float(rng.gamma(shape + y_cell.size, 1.0 / (rate + y_cell.sum())))


def sample_station_lambdas(
    y_s: np.ndarray,
    L_s: np.ndarray,
    states: np.ndarray,
    K: int,
    rng,
    shape: float = 1.0,
    rate: float = 1.0,
) -> np.ndarray:
    """(2, K) rates for one station; empty cells fall back to the prior."""
    rng = as_generator(rng)
    counts = np.zeros((2, K))
    sums = np.zeros((2, K))
    for j in (1, 2):
        hit = L_s == j
        counts[j - 1] = np.bincount(states[hit], minlength=K)
        sums[j - 1] = np.bincount(states[hit], weights=y_s[hit], minlength=K)
    return rng.gamma(shape + counts, 1.0 / (rate + sums))


def order_rates(lam: np.ndarray) -> np.ndarray:
    """Relabels the two components per cell so that lam[0] >= lam[1]."""
    lam = np.asarray(lam)
    light, heavy = lam[..., :1, :, :], lam[..., 1:, :, :]
    return np.concatenate([np.maximum(light, heavy), np.minimum(light, heavy)], axis=-3)


@dataclass
class StationUpdate:
    L: np.ndarray
    M: np.ndarray
    gamma: float
    beta0: np.ndarray
    beta1: np.ndarray
    lam: np.ndarray
    diagnostics: EmissionDiagnostics


def sweep_station(
    y_s: np.ndarray,
    states: np.ndarray,
    w_s: np.ndarray,
    beta0_s: np.ndarray,
    beta1_s: np.ndarray,
    lam_s: np.ndarray,
    gamma_s: float,
    rng,
    station: int = None,
    beta_precision: float = 0.0,
    lambda_shape: float = 1.0,
    lambda_rate: float = 1.0,
    gamma_cap: float = GAMMA_CAP,
) -> StationUpdate:
    """L, M, gamma, beta, lambda for one station, in that order.

    Before M is drawn, gamma takes a collapsed Metropolis step given L; the
    interval draw given M follows.
    """
    rng = as_generator(rng)
    K = beta0_s.shape[0]
    diagnostics = EmissionDiagnostics()

    mu = beta0_s[states] + w_s @ beta1_s
    weights = mixing_weights(mu, gamma_s)
    L = sample_L(y_s, weights, lam_s[0, states], lam_s[1, states], rng)
    gamma_s = sample_gamma_collapsed(L, mu, gamma_s, rng, gamma_cap)
    M = sample_M(L, mu, gamma_s, rng)
    gamma_new = sample_gamma_cutpoint(M, L, gamma_s, rng, gamma_cap, diagnostics, station)
    b0, b1 = sample_station_betas(M, states, w_s, K, rng, beta_precision, diagnostics, station)
    lam = sample_station_lambdas(y_s, L, states, K, rng, lambda_shape, lambda_rate)

    return StationUpdate(
        L=L, M=M, gamma=gamma_new, beta0=b0, beta1=b1, lam=lam, diagnostics=diagnostics
    )


def state_log_densities(y: np.ndarray, mask: np.ndarray, params, w: np.ndarray) -> np.ndarray:
    """log_f[t, k] = sum over observed s of log f(y_ts | z_t = k); (T, K)."""
    K = params.beta0.shape[0]
    T = y.shape[0]
    cov = np.einsum("tsa,as->ts", w, params.beta1) if w.shape[2] else np.zeros(y.shape)
    y_obs = np.where(mask, y, 0.0)

    out = np.empty((T, K))
    for k in range(K):
        mu = params.beta0[k][None, :] + cov
        weights = mixing_weights(mu, params.gamma[None, :])
        logf = log_emission_density(y_obs, weights, params.lam[0, k][None, :], params.lam[1, k][None, :])
        out[:, k] = np.where(mask, logf, 0.0).sum(axis=1)
    return out
