from dataclasses import dataclass
from typing import Tuple

import numpy as np

from src.util.errors import InputError


@dataclass
class ModelParams:
    """One full parameter set of the NHMM.

    zeta:  (K, K+B) transition logits; row k = destination category k, the
           first K columns are the Markov intercepts xi[prev, k], the last B
           the covariate weights rho_k. The last row is pinned to zero.
    lam:   (2, K, S) exponential rates, [0] light rain, [1] heavy rain.
    beta0: (K, S) state-dependent probit intercepts.
    beta1: (A, S) covariate probit coefficients, shared across states.
    gamma: (S,) free ordered-probit cutpoint per station.
    """

    zeta: np.ndarray
    lam: np.ndarray
    beta0: np.ndarray
    beta1: np.ndarray
    gamma: np.ndarray

    @property
    def dims(self) -> Tuple[int, int, int, int]:
        K = self.zeta.shape[0]
        S = self.lam.shape[2]
        A = self.beta1.shape[0]
        B = self.zeta.shape[1] - K
        return K, S, A, B

    @property
    def pinned_category(self) -> int:
        return self.zeta.shape[0] - 1

    def validate(self) -> "ModelParams":
        K, S, A, B = self.dims

        if self.zeta.ndim != 2 or B < 0:
            raise InputError("zeta must be K x (K+B)", {"shape": list(self.zeta.shape)})
        if self.lam.shape != (2, K, S):
            raise InputError("lambda must be 2 x K x S", {"shape": list(self.lam.shape)})
        if self.beta0.shape != (K, S):
            raise InputError("beta0 must be K x S", {"shape": list(self.beta0.shape)})
        if self.beta1.shape != (A, S):
            raise InputError("beta1 must be A x S", {"shape": list(self.beta1.shape)})
        if self.gamma.shape != (S,):
            raise InputError("gamma must have one cutpoint per station")

        for name in ("zeta", "lam", "beta0", "beta1", "gamma"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise InputError(f"{name} has non-finite entries")

        if np.any(self.zeta[self.pinned_category] != 0.0):
            raise InputError("pinned transition category must be all zero")
        if np.any(self.lam <= 0.0):
            raise InputError("rates must be positive")
        if np.any(self.gamma <= 0.0):
            raise InputError("cutpoints must be positive")

        return self

    def mixing_mean(self, states: np.ndarray, w: np.ndarray) -> np.ndarray:
        """mu[t, s] = beta0[z_t, s] + sum_a w[t, s, a] beta1[a, s]."""
        mu = self.beta0[states]
        if w.shape[2]:
            mu = mu + np.einsum("tsa,as->ts", w, self.beta1)
        return mu

    def copy(self) -> "ModelParams":
        return ModelParams(
            zeta=self.zeta.copy(),
            lam=self.lam.copy(),
            beta0=self.beta0.copy(),
            beta1=self.beta1.copy(),
            gamma=self.gamma.copy(),
        )

    def relabel(self, order) -> "ModelParams":
        """Same model with new state k standing for old state order[k].

        The logits are re-referenced so the last category stays pinned at zero.
        """
        K = self.zeta.shape[0]
        order = np.asarray(order, dtype=np.int64)
        if sorted(order.tolist()) != list(range(K)):
            raise InputError("relabelling must be a permutation of the states", {"order": order.tolist()})

        # xi[i, j]: logit of moving from i into j
        xi = self.zeta[:, :K].T[np.ix_(order, order)]
        rho = self.zeta[order, K:]
        xi = xi - xi[:, -1:]
        rho = rho - rho[-1:]
        return ModelParams(
            zeta=np.hstack([xi.T, rho]),
            lam=self.lam[:, order, :].copy(),
            beta0=self.beta0[order].copy(),
            beta1=self.beta1.copy(),
            gamma=self.gamma.copy(),
        )

    def to_json(self) -> dict:
        return {
            "zeta": self.zeta.tolist(),
            "lambda": self.lam.tolist(),
            "beta0": self.beta0.tolist(),
            "beta1": self.beta1.tolist(),
            "gamma": self.gamma.tolist(),
        }

    @classmethod
    def from_json(cls, data: dict) -> "ModelParams":
        K = len(data["zeta"])
        S = len(data["gamma"])
        beta1 = np.asarray(data.get("beta1", []), dtype=float)
        if beta1.size == 0:
            beta1 = np.zeros((0, S))
        return cls(
            zeta=np.asarray(data["zeta"], dtype=float).reshape(K, -1),
            lam=np.asarray(data["lambda"], dtype=float),
            beta0=np.asarray(data["beta0"], dtype=float),
            beta1=beta1,
            gamma=np.asarray(data["gamma"], dtype=float),
        )


def random_truth(K: int, S: int, A: int, B: int, rng: np.random.Generator) -> ModelParams:
    zeta = np.zeros((K, K + B))
    if K > 1:
        # persistent regimes: strong self-transition intercepts
        zeta[:-1, :K] = rng.normal(0.0, 0.5, size=(K - 1, K))
        for k in range(K - 1):
            zeta[k, k] += 2.0
            zeta[k, K - 1] -= 1.0
        zeta[:-1, K:] = rng.normal(0.0, 0.8, size=(K - 1, B))
    zeta[-1] = 0.0

    # wetter states get higher intercepts
    beta0 = np.sort(rng.normal(0.0, 1.0, size=(K, S)), axis=0)
    beta1 = rng.normal(0.0, 0.5, size=(A, S))
    gamma = rng.uniform(0.5, 1.5, size=S)

    heavy = rng.uniform(0.05, 0.2, size=(K, S))
    light = heavy * rng.uniform(3.0, 8.0, size=(K, S))
    lam = np.stack([light, heavy])

    return ModelParams(zeta=zeta, lam=lam, beta0=beta0, beta1=beta1, gamma=gamma)
