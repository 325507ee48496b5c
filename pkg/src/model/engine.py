"""Gibbs sweeps, burn-in and retention for one NHMM chain.

Each sweep runs, in order: imputation of missing rainfall, the per-station
emission block (L, M, gamma, beta, lambda), the hidden-state pass and the
Polya-Gamma transition update. Every block draws from its own stream,
addressed by sweep number (and station), so results do not depend on the
thread count.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Tuple

import numpy as np
import pandas as pd
from scipy.special import expit, ndtri
from sklearn.cluster import KMeans

from src.data.config import McmcConfig, PriorConfig
from src.data.covariates import CovariateSet
from src.data.panel import ObservationPanel
from src.data.store import PosteriorStore, missing_cells
from src.model.emission import (
    GAMMA_CAP,
    EmissionDiagnostics,
    draw_emission,
    mixing_weights,
    order_rates,
    state_log_densities,
    sweep_station,
)
from src.model.params import ModelParams
from src.model.selection import forward_log_likelihood
from src.model.states import initial_states, sweep_states
from src.model.transition import (
    NormalPrior,
    PGAugmentationState,
    build_design,
    log_transition_matrices,
    sample_zeta,
    transition_log_likelihood,
)
from src.util.errors import InputError
from src.util.rng import StreamFactory, as_generator

logger = logging.getLogger(__name__)

EM_ITERATIONS = 50
WET_FLOOR = 0.02
GAMMA_FLOOR = 0.05

SweepHook = Callable[[int, int, str], None]


@dataclass
class SamplerDiagnostics:
    cutpoints_kept: int = 0
    ridge_jitters: int = 0
    sweeps: int = 0
    events: List[dict] = field(default_factory=list)

    def absorb(self, emission: EmissionDiagnostics, iteration: int) -> None:
        self.cutpoints_kept += emission.cutpoints_kept
        self.ridge_jitters += emission.ridge_jitters
        for event in emission.events:
            self.events.append({"sweep": iteration, **event})

    def to_json(self) -> dict:
        return {
            "cutpoints_kept": self.cutpoints_kept,
            "ridge_jitters": self.ridge_jitters,
            "sweeps": self.sweeps,
        }


@dataclass
class ChainState:
    params: ModelParams
    states: np.ndarray
    values: np.ndarray
    imputed: np.ndarray


def check_dimensions(panel: ObservationPanel, covariates: CovariateSet, K: int) -> None:
    if K < 1:
        raise InputError("K must be at least 1", {"K": K})
    if covariates.T != panel.T:
        raise InputError("covariates and panel cover different days", {"panel": panel.T, "covariates": covariates.T})
    if covariates.S != panel.S:
        raise InputError("w covers a different number of stations", {"panel": panel.S, "w": covariates.S})
    if not (np.all(np.isfinite(covariates.x)) and np.all(np.isfinite(covariates.w))):
        raise InputError("covariates must be finite")


def exponential_split(amounts: np.ndarray, iterations: int = EM_ITERATIONS) -> Tuple[float, float, float]:
    """EM fit of a two-exponential mixture to wet-day amounts.

    Returns (heavy weight, light rate, heavy rate) with light rate >= heavy rate.
    """
    amounts = np.asarray(amounts, dtype=float)
    mean = float(amounts.mean()) if amounts.size else 1.0
    mean = max(mean, 1e-3)
    heavy, r_light, r_heavy = 0.5, 2.0 / mean, 0.5 / mean
    if amounts.size < 2:
        return heavy, r_light, r_heavy

    for _ in range(iterations):
        resp = expit(
            np.log(heavy) + np.log(r_heavy) - r_heavy * amounts
            - np.log1p(-heavy) - np.log(r_light) + r_light * amounts
        )
        heavy = float(np.clip(resp.mean(), 0.01, 0.99))
        r_light = (1.0 - resp).sum() / max(((1.0 - resp) * amounts).sum(), 1e-12)
        r_heavy = resp.sum() / max((resp * amounts).sum(), 1e-12)

    if r_light < r_heavy:
        heavy, r_light, r_heavy = 1.0 - heavy, r_heavy, r_light
    return heavy, float(r_light), float(r_heavy)


def initial_params(
    panel: ObservationPanel,
    states: np.ndarray,
    K: int,
    A: int,
    B: int,
    gamma_cap: float = GAMMA_CAP,
) -> ModelParams:
    """Parameters read off the data under a first labelling of the days.

    beta0 is the probit of each state's wet fraction. The rates and gamma
    come from a per-station two-exponential fit: gamma puts the heavy share
    of wet days above the cutpoint at the station's overall wet fraction.
    Rates are scaled by each state's mean wet amount. zeta holds the
    log-odds of the labelled transitions; all slopes start at zero.
    """
    S = panel.S
    wet = (panel.values > 0.0) & panel.mask
    onehot = np.eye(K)[states]

    observed = onehot.T @ panel.mask
    wet_frac = (onehot.T @ wet + 0.5) / (observed + 1.0)
    beta0 = ndtri(np.clip(wet_frac, WET_FLOOR, 1.0 - WET_FLOOR))

    station_wet = np.clip((wet.sum(axis=0) + 0.5) / (panel.mask.sum(axis=0) + 1.0), WET_FLOOR, 1.0 - WET_FLOOR)
    amounts = np.where(wet, panel.values, 0.0)
    lam = np.empty((2, K, S))
    gamma = np.empty(S)
    for s in range(S):
        heavy, r_light, r_heavy = exponential_split(panel.values[wet[:, s], s])
        gamma[s] = ndtri(station_wet[s]) - ndtri(station_wet[s] * heavy)

        mean = amounts[:, s].sum() / max(wet[:, s].sum(), 1)
        counts = onehot.T @ wet[:, s]
        state_mean = np.where(counts > 0, (onehot.T @ amounts[:, s]) / np.maximum(counts, 1), mean)
        scale = np.maximum(mean, 1e-3) / np.maximum(state_mean, 1e-3)
        lam[0, :, s] = r_light * scale
        lam[1, :, s] = r_heavy * scale

    moves = np.zeros((K, K))
    if states.shape[0] > 1:
        np.add.at(moves, (states[:-1], states[1:]), 1.0)
    # xi[i, j] against the pinned last category
    xi = np.log(moves + 0.5) - np.log(moves[:, -1:] + 0.5)
    zeta = np.hstack([xi.T, np.zeros((K, B))])

    return ModelParams(
        zeta=zeta,
        lam=lam,
        beta0=beta0,
        beta1=np.zeros((A, S)),
        gamma=np.clip(gamma, GAMMA_FLOOR, 0.9 * gamma_cap),
    )


def wet_day_features(panel: ObservationPanel) -> np.ndarray:
    """Wet indicators and scaled log amounts per day; missing cells take the station mean."""
    wet = ((panel.values > 0.0) & panel.mask).astype(float)
    logs = np.log1p(np.where(panel.mask, panel.values, 0.0))
    features = np.hstack([wet, logs])
    observed = np.hstack([panel.mask, panel.mask])

    fill = np.where(observed, features, 0.0).sum(axis=0) / np.maximum(observed.sum(axis=0), 1)
    features = np.where(observed, features, fill[None, :])
    sd = features.std(axis=0)
    return features / np.where(sd > 0.0, sd, 1.0)


def initial_chain(
    panel: ObservationPanel,
    covariates: CovariateSet,
    K: int,
    rng,
    gamma_cap: float = GAMMA_CAP,
) -> Tuple[ModelParams, np.ndarray]:
    """Starting parameters and states from k-means on the daily wet pattern.

    The cluster whose regime best explains day one (forward likelihood with
    the chain started there) becomes state 1.
    """
    rng = as_generator(rng)
    T = panel.T
    if K == 1 or T < K:
        states = initial_states(T, K, rng)
        return initial_params(panel, states, K, covariates.A, covariates.B, gamma_cap), states

    kmeans = KMeans(n_clusters=K, n_init=10, random_state=int(rng.integers(2**31 - 1)))
    labels = kmeans.fit_predict(wet_day_features(panel)).astype(np.int64)
    params = initial_params(panel, labels, K, covariates.A, covariates.B, gamma_cap)

    best, best_order = -np.inf, np.arange(K)
    for first in range(K):
        order = np.array([first] + [k for k in range(K) if k != first])
        score = forward_log_likelihood(panel, covariates, params.relabel(order))
        if score > best:
            best, best_order = score, order

    states = np.argsort(best_order)[labels]
    states[0] = 0
    logger.info(f"chain start: clusters of {np.bincount(states, minlength=K).tolist()} days, state 1 from cluster {int(best_order[0]) + 1}")
    return params.relabel(best_order), states


def impute_missing(
    panel: ObservationPanel,
    chain: np.ndarray,
    params: ModelParams,
    covariates: CovariateSet,
    rng,
) -> np.ndarray:
    """Full rainfall array with every missing cell drawn from the emission at (z_t, s)."""
    values = panel.values.copy()
    cells = ~panel.mask
    if not cells.any():
        return values

    rng = as_generator(rng)
    t, s = np.nonzero(cells)
    k = chain[t]
    mu = params.beta0[k, s]
    if covariates.A:
        mu = mu + np.einsum("ia,ai->i", covariates.w[t, s, :], params.beta1[:, s])
    weights = mixing_weights(mu, params.gamma[s])
    values[t, s] = draw_emission(weights, params.lam[0, k, s], params.lam[1, k, s], rng)
    return values


def complete_log_likelihood(
    panel: ObservationPanel,
    states: np.ndarray,
    params: ModelParams,
    covariates: CovariateSet,
) -> float:
    """log p(y_obs, z | zeta, theta), states pinned to 0 on day one."""
    log_f = state_log_densities(panel.values, panel.mask, params, covariates.w)
    emission = float(log_f[np.arange(panel.T), states].sum())
    return emission + transition_log_likelihood(states, params.zeta, covariates.x)


def zeta_prior(priors: PriorConfig) -> NormalPrior:
    return NormalPrior(mean=np.asarray(priors.zeta_mean, dtype=float), precision=np.asarray(priors.zeta_precision, dtype=float))


def gibbs_sweep(
    chain: ChainState,
    panel: ObservationPanel,
    covariates: CovariateSet,
    priors: PriorConfig,
    factory: StreamFactory,
    iteration: int,
    pool: Optional[ThreadPoolExecutor] = None,
) -> tuple:
    """One full sweep; returns (ChainState, EmissionDiagnostics)."""
    params = chain.params
    K, S, A, B = params.dims

    values = impute_missing(panel, chain.states, params, covariates, factory.stream("impute", iteration))
    imputed = values[~panel.mask]

    def station(s: int):
        return sweep_station(
            values[:, s],
            chain.states,
            covariates.w[:, s, :],
            params.beta0[:, s],
            params.beta1[:, s],
            params.lam[:, :, s],
            float(params.gamma[s]),
            factory.stream("emission", iteration, s),
            station=s,
            beta_precision=priors.beta_precision,
            lambda_shape=priors.lambda_shape,
            lambda_rate=priors.lambda_rate,
            gamma_cap=priors.gamma_cap,
        )

    updates = list(pool.map(station, range(S))) if pool is not None else [station(s) for s in range(S)]

    new = params.copy()
    diagnostics = EmissionDiagnostics()
    for s, update in enumerate(updates):
        new.beta0[:, s] = update.beta0
        new.beta1[:, s] = update.beta1
        new.lam[:, :, s] = update.lam
        new.gamma[s] = update.gamma
        diagnostics.merge(update.diagnostics)

    log_q = log_transition_matrices(new.zeta, covariates.x)
    log_f = state_log_densities(panel.values, panel.mask, new, covariates.w)
    states = sweep_states(chain.states, log_q, log_f, factory.stream("states", iteration))

    design = build_design(states, covariates.x, K)
    aug = PGAugmentationState.empty(panel.T, K)
    new.zeta = sample_zeta(design, new.zeta, aug, zeta_prior(priors), factory.stream("zeta", iteration))

    return ChainState(params=new, states=states, values=values, imputed=imputed), diagnostics


def run_chain(
    panel: ObservationPanel,
    covariates: CovariateSet,
    config: McmcConfig,
    priors: Optional[PriorConfig] = None,
    threads: int = 1,
    on_sweep: Optional[SweepHook] = None,
) -> PosteriorStore:
    config.validate()
    priors = (priors or PriorConfig()).validate()
    K = config.states
    panel.validate()
    check_dimensions(panel, covariates, K)

    factory = StreamFactory(config.seed)
    params, states = initial_chain(panel, covariates, K, factory.stream("init"), priors.gamma_cap)
    params.validate()
    chain = ChainState(params=params, states=states, values=panel.values.copy(), imputed=np.zeros(0))

    burn_in = config.burn_in
    store = PosteriorStore.allocate(
        config.retained, K, panel.S, covariates.A, covariates.B, panel.T, missing_cells(panel.mask)
    )
    diagnostics = SamplerDiagnostics()

    logger.info(
        f"chain start: K={K}, T={panel.T}, S={panel.S}, A={covariates.A}, B={covariates.B}, "
        f"seed={config.seed}, sweeps={burn_in}+{config.iterations}, thinning={config.thinning}"
    )

    pool = ThreadPoolExecutor(max_workers=threads) if threads > 1 else None
    try:
        slot = 0
        for i in range(burn_in + config.iterations):
            chain, emission = gibbs_sweep(chain, panel, covariates, priors, factory, i, pool)
            diagnostics.absorb(emission, i)
            diagnostics.sweeps += 1

            if i < burn_in:
                if on_sweep is not None:
                    on_sweep(i + 1, burn_in, "burn-in")
                if i + 1 == burn_in:
                    logger.info(f"burn-in complete after {burn_in} sweeps")
                continue

            n = i - burn_in + 1
            if n % config.thinning == 0:
                loglik = complete_log_likelihood(panel, chain.states, chain.params, covariates)
                store.record(slot, chain.params, chain.states, chain.imputed, loglik, n)
                slot += 1
            if on_sweep is not None:
                on_sweep(n, config.iterations, "sampling")
    finally:
        if pool is not None:
            pool.shutdown()

    for event in diagnostics.events:
        logger.info(f"sampler diagnostic: {event}")

    store.manifest.update(
        {
            "seed": config.seed,
            "mcmc": {
                "iterations": config.iterations,
                "burn_in_fraction": config.burn_in_fraction,
                "thinning": config.thinning,
                "states": K,
            },
            "stations": list(panel.stations),
            "covariates": covariates.manifest(),
            "diagnostics": diagnostics.to_json(),
        }
    )
    logger.info(f"chain end: {len(store)} draws retained, {diagnostics.cutpoints_kept} cutpoints kept")
    return store


FAMILY_ATTRS = {
    "zeta": "zeta",
    "lambda": "lam",
    "beta0": "beta0",
    "beta1": "beta1",
    "gamma": "gamma",
}


def summarize(store: PosteriorStore, credibility: float = 0.95, ordered_rates: bool = False) -> pd.DataFrame:
    """Posterior mean, equal-tailed interval and significance per scalar parameter."""
    if len(store) < 2:
        raise InputError("summaries need at least 2 retained draws", {"draws": len(store)})
    if not 0.0 < credibility < 1.0:
        raise InputError("credibility must lie in (0, 1)", {"credibility": credibility})

    tail = 0.5 * (1.0 - credibility)
    rows = []
    for family, attr in FAMILY_ATTRS.items():
        draws = getattr(store, attr)
        if family == "lambda" and ordered_rates:
            draws = order_rates(draws)
        if draws[0].size == 0:
            continue

        mean = draws.mean(axis=0)
        lower, upper = np.quantile(draws, [tail, 1.0 - tail], axis=0)
        for index in np.ndindex(*draws.shape[1:]):
            lo, hi = float(lower[index]), float(upper[index])
            rows.append(
                {
                    "parameter": family,
                    "index": ",".join(str(i) for i in index),
                    "mean": float(mean[index]),
                    "lower": lo,
                    "upper": hi,
                    "significant": bool(lo > 0.0 or hi < 0.0),
                }
            )

    return pd.DataFrame(rows, columns=["parameter", "index", "mean", "lower", "upper", "significant"])
