"""Covariate-dependent multinomial-logistic transitions and their PG update."""

import logging
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np
from scipy.linalg import LinAlgError, cho_solve, cholesky, solve_triangular
from scipy.special import logsumexp

from src.model.polyagamma import draw_pg1
from src.util.errors import InputError, NumericalError
from src.util.rng import as_generator

logger = logging.getLogger(__name__)


@dataclass
class DesignMatrices:
    """X: (T, K+B) one-hot previous state then x_t; Z: (T, K) one-hot z_t.

    Row 0 holds no previous state and is excluded from coefficient updates.
    """

    X: np.ndarray
    Z: np.ndarray
    K: int

    @property
    def update_rows(self) -> slice:
        return slice(1, None)

    @property
    def n_updates(self) -> int:
        return max(self.X.shape[0] - 1, 0)


@dataclass
class PGAugmentationState:
    omega: np.ndarray
    eta: np.ndarray
    C: np.ndarray

    @classmethod
    def empty(cls, T: int, K: int) -> "PGAugmentationState":
        return cls(
            omega=np.full((T, K), 0.25),
            eta=np.zeros((T, K)),
            C=np.zeros((T, K)),
        )


@dataclass
class NormalPrior:
    """Independent normal prior on each zeta coefficient, by mean and precision.

    A zero precision is the flat (noninformative) prior.
    """

    mean: Union[float, np.ndarray] = 0.0
    precision: Union[float, np.ndarray] = 0.0

    def expand(self, K: int, H: int):
        mean = np.broadcast_to(np.asarray(self.mean, dtype=float), (K, H))
        precision = np.broadcast_to(np.asarray(self.precision, dtype=float), (K, H))
        return mean, precision


def log_transition_matrices(zeta: np.ndarray, x: np.ndarray) -> np.ndarray:
    """log Q_t[i, j] for every day, shape (T, K, K)."""
    K = zeta.shape[0]
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[None, :]
    if x.shape[1] != zeta.shape[1] - K:
        raise InputError(
            "covariate width does not match coefficients",
            {"covariates": x.shape[1], "coefficients": zeta.shape[1] - K},
        )

    # logits[t, i, j] = xi[i, j] + x_t . rho_j
    logits = zeta[:, :K].T[None, :, :] + (x @ zeta[:, K:].T)[:, None, :]
    return logits - logsumexp(logits, axis=2, keepdims=True)


def transition_matrices(zeta: np.ndarray, x: np.ndarray) -> np.ndarray:
    return np.exp(log_transition_matrices(zeta, x))


def compute_transition_matrix(zeta: np.ndarray, x_t: np.ndarray) -> np.ndarray:
    x_t = np.asarray(x_t, dtype=float).ravel()
    if not np.all(np.isfinite(x_t)):
        raise InputError("covariates must be finite")
    return transition_matrices(zeta, x_t[None, :])[0]


def build_design(states: np.ndarray, x: np.ndarray, K: int) -> DesignMatrices:
    states = np.asarray(states)
    T = states.shape[0]
    x = np.asarray(x, dtype=float).reshape(T, -1)

    if T and (states.min() < 0 or states.max() >= K):
        raise InputError("state outside 1..K", {"K": K})

    onehot = np.eye(K)[states]
    X = np.zeros((T, K + x.shape[1]))
    X[1:, :K] = onehot[:-1]
    X[:, K:] = x
    return DesignMatrices(X=X, Z=onehot, K=K)


def refresh_holdout(X: np.ndarray, zeta: np.ndarray, k: int) -> np.ndarray:
    """C[t] = log sum_{i != k} exp(X_t . zeta_i)."""
    others = np.delete(zeta, k, axis=0)
    return logsumexp(X @ others.T, axis=1)


def zeta_conditional(
    X: np.ndarray,
    z_k: np.ndarray,
    omega: np.ndarray,
    C: np.ndarray,
    prior_mean: np.ndarray,
    prior_precision: np.ndarray,
):
    """Gaussian full conditional of zeta_k given the PG latents.

    Returns the mean and the lower Cholesky factor of the precision
    X' Omega X + B^{-1}; the mean solves it against
    X'((Z_k - 1/2) + Omega C_k) + B^{-1} a.
    """
    precision = X.T @ (omega[:, None] * X) + np.diag(prior_precision)
    rhs = X.T @ ((z_k - 0.5) + omega * C) + prior_precision * prior_mean

    chol = cholesky(precision, lower=True)
    mean = cho_solve((chol, True), rhs)
    return mean, chol


def sample_zeta(
    design: DesignMatrices,
    zeta: np.ndarray,
    aug: PGAugmentationState,
    prior: Optional[NormalPrior],
    rng,
) -> np.ndarray:
    """One PG Gibbs pass over the non-pinned categories, block per category."""
    rng = as_generator(rng)
    prior = prior or NormalPrior()
    K, H = zeta.shape
    zeta = zeta.copy()

    if design.n_updates == 0:
        return zeta

    rows = design.update_rows
    X = design.X[rows]
    a, b_inv = prior.expand(K, H)

    for k in range(K - 1):
        C = refresh_holdout(X, zeta, k)
        eta = X @ zeta[k] - C
        omega = draw_pg1(eta, rng)

        aug.C[rows, k] = C
        aug.eta[rows, k] = eta
        aug.omega[rows, k] = omega

        try:
            mean, chol = zeta_conditional(X, design.Z[rows, k], omega, C, a[k], b_inv[k])
        except LinAlgError as e:
            raise NumericalError(
                f"singular posterior precision for category {k + 1}",
                {"category": k + 1},
            ) from e

        # L L' = P  =>  L'^{-1} e ~ N(0, P^{-1})
        zeta[k] = mean + solve_triangular(chol.T, rng.standard_normal(H), lower=False)

    zeta[K - 1] = 0.0
    return zeta


def transition_log_likelihood(states: np.ndarray, zeta: np.ndarray, x: np.ndarray) -> float:
    """sum_{t>=2} log Q_t[z_{t-1}, z_t]."""
    if states.shape[0] < 2:
        return 0.0
    logq = log_transition_matrices(zeta, x[1:])
    return float(logq[np.arange(states.shape[0] - 1), states[:-1], states[1:]].sum())
