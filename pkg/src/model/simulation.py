"""Predictive chains, forecasts and the synthetic-data generator."""

import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from scipy.linalg import solve

from src.data.config import PriorConfig
from src.data.covariates import CovariateSet, build_covariates
from src.data.panel import ObservationPanel
from src.data.store import PosteriorDraw, PosteriorStore
from src.model.emission import draw_emission, mixing_weights
from src.model.params import ModelParams
from src.model.transition import transition_matrices
from src.util.errors import ConfigurationError, InputError
from src.util.rng import StreamFactory, as_generator

logger = logging.getLogger(__name__)

LEVELS = ("min", "max", "mean")


@dataclass
class ForecastDraw:
    q_star: np.ndarray
    z_star: np.ndarray
    y_star: np.ndarray


@dataclass
class CovariateSpec:
    """Raw covariate generator: AR(1) x series, i.i.d. normal w, optional seasonal terms."""

    B: int = 1
    A: int = 1
    ar: float = 0.9
    harmonics: bool = False
    drift: bool = False


def _as_params(draw: Union[PosteriorDraw, ModelParams]) -> ModelParams:
    return draw.params if isinstance(draw, PosteriorDraw) else draw


def sample_path(zeta: np.ndarray, x: np.ndarray, init_state: int, rng) -> Tuple[np.ndarray, np.ndarray]:
    """(Q, z) for len(x) steps; z[r] is drawn from row z[r-1] of Q[r], z[-1] = init_state."""
    rng = as_generator(rng)
    Q = transition_matrices(zeta, x)
    R, K = Q.shape[0], Q.shape[1]
    u = rng.random(R)
    z = np.empty(R, dtype=np.int64)
    prev = int(init_state)
    for r in range(R):
        z[r] = min(int(np.searchsorted(np.cumsum(Q[r, prev]), u[r], side="right")), K - 1)
        prev = z[r]
    return Q, z


def simulate_observations(params: ModelParams, states: np.ndarray, w: np.ndarray, rng) -> np.ndarray:
    """Rainfall panel (R, S) drawn from the emission mixture at each (z_r, s)."""
    rng = as_generator(rng)
    K, S, A, B = params.dims
    if w.shape[1:] != (S, A):
        raise InputError("w does not match the fitted stations and covariates", {"w": list(w.shape)})

    mu = params.mixing_mean(states, w)
    weights = mixing_weights(mu, params.gamma[None, :])
    cols = np.arange(S)[None, :]
    return draw_emission(weights, params.lam[0][states[:, None], cols], params.lam[1][states[:, None], cols], rng)


def simulate_chain(
    draw: Union[PosteriorDraw, ModelParams],
    x_new: np.ndarray,
    w_new: np.ndarray,
    init_state: Optional[int] = None,
    rng=None,
) -> ForecastDraw:
    params = _as_params(draw)
    K, S, A, B = params.dims
    x_new = np.asarray(x_new, dtype=float).reshape(-1, B) if B else np.zeros((np.asarray(w_new).shape[0], 0))
    w_new = np.asarray(w_new, dtype=float)
    if x_new.shape[0] != w_new.shape[0]:
        raise InputError("x and w cover different forecast lengths", {"x": x_new.shape[0], "w": w_new.shape[0]})

    if init_state is None:
        init_state = int(draw.states[-1]) if isinstance(draw, PosteriorDraw) else 0
    if not 0 <= init_state < K:
        raise InputError(f"initial state {init_state + 1} outside 1..{K}")

    rng = as_generator(rng)
    Q, z = sample_path(params.zeta, x_new, init_state, rng)
    y = simulate_observations(params, z, w_new, rng)
    return ForecastDraw(q_star=Q, z_star=z, y_star=y)


def simulate_panels(
    store: PosteriorStore,
    covariates: CovariateSet,
    chains: int,
    factory: StreamFactory,
    init_state: Optional[int] = None,
) -> List[ForecastDraw]:
    """One predictive chain per index, cycling through the retained draws."""
    if not len(store):
        raise InputError("posterior store is empty")
    if chains < 1:
        raise ConfigurationError("need at least one chain", {"chains": chains})

    out = []
    for c in range(chains):
        draw = store.draw(c % len(store))
        out.append(simulate_chain(draw, covariates.x, covariates.w, init_state, factory.stream("simulate", c)))
    logger.info(f"simulated {chains} chains over {covariates.T} days")
    return out


def generate_synthetic(
    truth: ModelParams,
    T: int,
    S: int,
    spec: Optional[CovariateSpec] = None,
    missing_fraction: float = 0.0,
    seed: int = 0,
    stations: Optional[Sequence[str]] = None,
) -> Tuple[ObservationPanel, CovariateSet, np.ndarray]:
    """Data drawn from the exact model, with the generating chain and a uniform missingness mask."""
    truth.validate()
    spec = spec or CovariateSpec(B=truth.dims[3], A=truth.dims[2])
    K, S_truth, A, B = truth.dims
    if S != S_truth:
        raise InputError("truth and requested station counts differ", {"truth": S_truth, "S": S})
    if T < 2:
        raise ConfigurationError("synthetic panel needs at least 2 days", {"T": T})
    if not 0.0 <= missing_fraction < 1.0:
        raise ConfigurationError("missing fraction must lie in [0, 1)", {"missing_fraction": missing_fraction})

    factory = StreamFactory(seed)
    rng = factory.stream("synth", 0)
    stations = list(stations) if stations is not None else [f"s{i + 1}" for i in range(S)]

    raw_b = spec.B - (4 if spec.harmonics else 0)
    raw_a = spec.A - (4 if spec.harmonics else 0) - (1 if spec.drift else 0)
    if raw_b < 0 or raw_a < 0 or spec.B != B or spec.A != A:
        raise ConfigurationError("covariate spec does not match the truth dimensions", {"A": A, "B": B})

    x = np.empty((T, raw_b))
    if raw_b:
        x[0] = rng.standard_normal(raw_b)
        scale = np.sqrt(1.0 - spec.ar**2)
        for t in range(1, T):
            x[t] = spec.ar * x[t - 1] + scale * rng.standard_normal(raw_b)
    w = rng.standard_normal((T, S, raw_a))

    covariates = build_covariates(
        x,
        [f"x{i + 1}" for i in range(raw_b)],
        w,
        [f"w{i + 1}" for i in range(raw_a)],
        harmonics=spec.harmonics,
        drift=spec.drift,
    )

    _, states = sample_path(truth.zeta, covariates.x[1:], 0, factory.stream("synth", 1))
    states = np.concatenate([[0], states]).astype(np.int64)
    values = simulate_observations(truth, states, covariates.w, factory.stream("synth", 2))

    mask = np.ones((T, S), dtype=bool)
    n_missing = int(round(missing_fraction * T * S))
    if n_missing:
        cells = factory.stream("synth", 3).choice(T * S, size=n_missing, replace=False)
        mask.flat[cells] = False

    panel = ObservationPanel(values=values, mask=mask, stations=stations)
    logger.info(f"synthetic panel: K={K}, T={T}, S={S}, {n_missing} missing")
    return panel, covariates, states


def sample_prior(priors: PriorConfig, K: int, S: int, A: int, B: int, rng) -> ModelParams:
    """One parameter set from the (proper) prior."""
    rng = as_generator(rng)
    zeta_precision = np.broadcast_to(np.asarray(priors.zeta_precision, dtype=float), (K, K + B))
    if np.any(zeta_precision[:-1] <= 0) or priors.beta_precision <= 0:
        raise ConfigurationError("drawing from the prior needs positive precisions")

    zeta_mean = np.broadcast_to(np.asarray(priors.zeta_mean, dtype=float), (K, K + B))
    zeta = zeta_mean + rng.standard_normal((K, K + B)) / np.sqrt(zeta_precision)
    zeta[-1] = 0.0
    sd = 1.0 / np.sqrt(priors.beta_precision)
    return ModelParams(
        zeta=zeta,
        lam=rng.gamma(priors.lambda_shape, 1.0 / priors.lambda_rate, size=(2, K, S)),
        beta0=rng.normal(0.0, sd, size=(K, S)),
        beta1=rng.normal(0.0, sd, size=(A, S)),
        gamma=rng.uniform(0.0, priors.gamma_cap, size=S),
    )


def covariate_scenario_sweep(
    store: PosteriorStore,
    covariates: CovariateSet,
    kind: str,
    index: int,
    level: str,
    chains: int,
    factory: StreamFactory,
) -> pd.DataFrame:
    """Mean simulated rainfall per day of year with one covariate pinned at its min, max or mean."""
    if level not in LEVELS:
        raise InputError(f"unknown level '{level}', expected one of {', '.join(LEVELS)}")
    # validates kind and index
    covariates.pinned(kind, index, 0.0)
    column = covariates.x[:, index] if kind == "x" else covariates.w[:, :, index]

    value = {"min": column.min(), "max": column.max(), "mean": column.mean()}[level]
    scenario = covariates.pinned(kind, index, float(value))
    sims = simulate_panels(store, scenario, chains, factory, init_state=0)
    mean = np.mean([s.y_star for s in sims], axis=0)

    frame = pd.DataFrame(mean, columns=store.manifest.get("stations") or [f"s{i + 1}" for i in range(mean.shape[1])])
    frame["day_of_year"] = (covariates.start_day + np.arange(mean.shape[0])) % 365 + 1
    return frame.groupby("day_of_year").mean()


def wet_day_frequency(panel: ObservationPanel, threshold: float = 0.0) -> np.ndarray:
    return panel.wet_fraction(threshold)


def stationary_distribution(Q: np.ndarray) -> np.ndarray:
    """pi with pi Q = pi and sum(pi) = 1."""
    Q = np.asarray(Q, dtype=float)
    K = Q.shape[0]
    A = Q.T - np.eye(K)
    A[-1] = 1.0
    b = np.zeros(K)
    b[-1] = 1.0
    return solve(A, b)


def seasonal_summary(
    simulations: np.ndarray,
    stations: Sequence[str],
    observed: Optional[ObservationPanel] = None,
    start_day: int = 0,
    period: int = 365,
    credibility: float = 0.95,
) -> pd.DataFrame:
    """Per day-of-year mean rainfall across stations with bands across chains.

    simulations is (chains, R, S). Per-station means are added as
    mean_<station> columns; the observed climatology, when given, as observed.
    """
    sims = np.asarray(simulations, dtype=float)
    n, R, S = sims.shape
    doy = (start_day + np.arange(R)) % period
    days = np.unique(doy)
    tail = 0.5 * (1.0 - credibility)

    # (chains, doy) mean over stations and matching days
    per_chain = np.stack([sims[:, doy == d, :].mean(axis=(1, 2)) for d in days], axis=1)
    lower, upper = np.quantile(per_chain, [tail, 1.0 - tail], axis=0)

    frame = pd.DataFrame(
        {
            "day_of_year": days + 1,
            "mean": per_chain.mean(axis=0),
            "lower": lower,
            "upper": upper,
        }
    )
    for s, name in enumerate(stations):
        frame[f"mean_{name}"] = [sims[:, doy == d, s].mean() for d in days]

    if observed is not None:
        obs_doy = (start_day + np.arange(observed.T)) % period
        climatology = []
        for d in days:
            on = obs_doy == d
            cells = observed.mask[on]
            climatology.append(observed.values[on][cells].mean() if cells.any() else np.nan)
        frame["observed"] = climatology

    return frame
