import numpy as np

from src.data.covariates import build_covariates
from src.data.panel import ObservationPanel


def make_covariates(T, S, A=1, B=1, seed=0):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((T, B))
    w = rng.standard_normal((T, S, A))
    return build_covariates(x, [f"x{i + 1}" for i in range(B)], w, [f"w{i + 1}" for i in range(A)])


def make_panel(values, mask=None):
    values = np.asarray(values, dtype=float)
    if mask is None:
        mask = np.ones(values.shape, dtype=bool)
    return ObservationPanel(values=values, mask=mask, stations=[f"s{i + 1}" for i in range(values.shape[1])])
