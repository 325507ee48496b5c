"""Marginal likelihood, information criteria and predictive scores for fitted chains."""

import logging
import math
from dataclasses import asdict, dataclass
from itertools import combinations
from typing import Optional

import numpy as np
import pandas as pd
from scipy.special import logsumexp
from scipy.stats import spearmanr

from src.data.covariates import CovariateSet
from src.data.panel import ObservationPanel
from src.data.store import PosteriorStore
from src.model.emission import state_log_densities
from src.model.params import ModelParams
from src.model.simulation import sample_path
from src.model.transition import log_transition_matrices
from src.util.errors import InputError
from src.util.rng import StreamFactory

logger = logging.getLogger(__name__)

LOG_ODDS_CAP = 99.0


@dataclass
class ModelScore:
    K: int
    param_count: int
    log_likelihood: float
    bic: float
    pls: Optional[float]
    n_obs: int
    seed: int = 0

    def to_json(self) -> dict:
        def finite(v):
            return v if v is None or math.isfinite(v) else str(v)

        return {
            "K": self.K,
            "p": self.param_count,
            "loglik": finite(self.log_likelihood),
            "bic": finite(self.bic),
            "pls": finite(self.pls),
            "n_obs": self.n_obs,
            "seed": self.seed,
        }


def forward_log_likelihood(panel: ObservationPanel, covariates: CovariateSet, params: ModelParams) -> float:
    """log p(y | x, w, zeta, theta) with z marginalized; day one starts in state 0."""
    log_f = state_log_densities(panel.values, panel.mask, params, covariates.w)
    log_q = log_transition_matrices(params.zeta, covariates.x)

    alpha = np.full(log_f.shape[1], -np.inf)
    alpha[0] = log_f[0, 0]
    total = 0.0
    for t in range(1, panel.T):
        alpha = logsumexp(alpha[:, None] + log_q[t], axis=0) + log_f[t]
        # rescale each step; the shift accumulates into the total
        shift = alpha.max()
        if not np.isfinite(shift):
            return -math.inf
        alpha = alpha - shift
        total += shift

    return float(total + logsumexp(alpha))


def count_parameters(K: int, S: int, A: int, B: int) -> int:
    """Transition intercepts and slopes, probit intercepts and slopes, cutpoints, rates."""
    if K < 1:
        raise InputError("K must be at least 1", {"K": K})
    return K * (K - 1) + B * (K - 1) + K * S + A * S + (K - 2) * S + 2 * S * K


def bic(log_likelihood: float, param_count: int, n_observations: int) -> float:
    return -2.0 * log_likelihood + param_count * math.log(n_observations)


def predictive_log_score(
    held_out: ObservationPanel,
    store: PosteriorStore,
    covariates: CovariateSet,
    factory: StreamFactory,
    init_state: Optional[int] = None,
) -> float:
    """sum_r log mean_n prod_s f(y_rs | z*_r, theta_n) over a simulated path per draw.

    Missing held-out cells contribute a factor of one.
    """
    n = len(store)
    if not n:
        raise InputError("posterior store is empty")
    if covariates.T != held_out.T:
        raise InputError("held-out covariates and panel differ in length", {"panel": held_out.T, "covariates": covariates.T})

    R = held_out.T
    terms = np.empty((n, R))
    for i in range(n):
        draw = store.draw(i)
        start = int(draw.states[-1]) if init_state is None else init_state
        _, z = sample_path(draw.params.zeta, covariates.x, start, factory.stream("score", i))
        log_f = state_log_densities(held_out.values, held_out.mask, draw.params, covariates.w)
        terms[i] = log_f[np.arange(R), z]

    per_day = logsumexp(terms, axis=0) - math.log(n)
    bad = np.flatnonzero(~np.isfinite(per_day))
    if bad.size:
        logger.warning(f"zero predictive density on held-out day {int(bad[0]) + 1}")
        return -math.inf
    return float(per_day.sum())


def annual_ratio(pls_a: float, pls_b: float, years: float) -> float:
    return math.exp((pls_a - pls_b) / years)


def occurrence_log_odds(a: np.ndarray, b: np.ndarray, threshold: float = 0.0) -> float:
    """log(matched / mismatched) on the wet/dry binarization; NaN cells are skipped."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    both = np.isfinite(a) & np.isfinite(b)
    wet_a = a[both] > threshold
    wet_b = b[both] > threshold
    matched = int((wet_a == wet_b).sum())
    mismatched = int(both.sum()) - matched

    if mismatched == 0:
        return LOG_ODDS_CAP
    if matched == 0:
        return -LOG_ODDS_CAP
    return math.log(matched / mismatched)


def rank_correlation(a: np.ndarray, b: np.ndarray) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    both = np.isfinite(a) & np.isfinite(b)
    if both.sum() < 2:
        return math.nan
    return float(spearmanr(a[both], b[both]).correlation)


def pairwise_statistics(panel: ObservationPanel) -> pd.DataFrame:
    values = np.where(panel.mask, panel.values, np.nan)
    rows = []
    for i, j in combinations(range(panel.S), 2):
        rows.append(
            {
                "station_a": panel.stations[i],
                "station_b": panel.stations[j],
                "log_odds": occurrence_log_odds(values[:, i], values[:, j]),
                "spearman": rank_correlation(values[:, i], values[:, j]),
            }
        )
    return pd.DataFrame(rows, columns=["station_a", "station_b", "log_odds", "spearman"])


def spatial_diagnostics(panel_a: ObservationPanel, panel_b: ObservationPanel) -> pd.DataFrame:
    """Per station pair statistics of both panels side by side (suffixes _a and _b)."""
    if panel_a.values.shape != panel_b.values.shape:
        raise InputError(
            "panels must have equal shapes",
            {"a": list(panel_a.values.shape), "b": list(panel_b.values.shape)},
        )
    a = pairwise_statistics(panel_a)
    b = pairwise_statistics(panel_b)
    return a.merge(b, on=["station_a", "station_b"], suffixes=("_a", "_b"))


def score_model(
    panel: ObservationPanel,
    covariates: CovariateSet,
    store: PosteriorStore,
    held_out: Optional[ObservationPanel] = None,
    held_covariates: Optional[CovariateSet] = None,
    seed: int = 0,
) -> ModelScore:
    plug_in = store.posterior_mean()
    K, S, A, B = plug_in.dims
    loglik = forward_log_likelihood(panel, covariates, plug_in)
    p = count_parameters(K, S, A, B)

    pls = None
    if held_out is not None and held_out.T:
        if held_covariates is None:
            raise InputError("held-out panel given without covariates")
        pls = predictive_log_score(held_out, store, held_covariates, StreamFactory(seed))

    score = ModelScore(
        K=K,
        param_count=p,
        log_likelihood=loglik,
        bic=bic(loglik, p, panel.n_observed),
        pls=pls,
        n_obs=panel.n_observed,
        seed=seed,
    )
    logger.info(f"score: {asdict(score)}")
    return score
