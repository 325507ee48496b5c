"""Retained MCMC draws and their on-disk layout.

A store directory holds one CSV per parameter family in long format
(`draw,<index columns>,value`) plus `manifest.json` with dimensions, seed,
run configuration and covariate standardization constants. States are
written 1-based.
"""

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Tuple

import numpy as np
import pandas as pd

from src.data.panel import FLOAT_FORMAT
from src.model.params import ModelParams
from src.util.errors import ConfigurationError, InputError

logger = logging.getLogger(__name__)

MANIFEST = "manifest.json"

# family -> index column names (draw column excluded)
FAMILIES: Dict[str, Tuple[str, ...]] = {
    "zeta": ("k", "h"),
    "lambda": ("component", "k", "s"),
    "beta0": ("k", "s"),
    "beta1": ("a", "s"),
    "gamma": ("s",),
    "states": ("t",),
    "imputed": ("cell",),
    "loglik": (),
}


@dataclass
class PosteriorDraw:
    params: ModelParams
    states: np.ndarray
    imputed: np.ndarray
    loglik: float
    index: int


@dataclass
class PosteriorStore:
    zeta: np.ndarray
    lam: np.ndarray
    beta0: np.ndarray
    beta1: np.ndarray
    gamma: np.ndarray
    states: np.ndarray
    imputed: np.ndarray
    loglik: np.ndarray
    draw_index: np.ndarray
    missing_cells: np.ndarray
    manifest: Dict = field(default_factory=dict)

    @classmethod
    def allocate(cls, n: int, K: int, S: int, A: int, B: int, T: int, missing_cells: np.ndarray) -> "PosteriorStore":
        return cls(
            zeta=np.zeros((n, K, K + B)),
            lam=np.zeros((n, 2, K, S)),
            beta0=np.zeros((n, K, S)),
            beta1=np.zeros((n, A, S)),
            gamma=np.zeros((n, S)),
            states=np.zeros((n, T), dtype=np.int64),
            imputed=np.zeros((n, missing_cells.shape[0])),
            loglik=np.zeros(n),
            draw_index=np.zeros(n, dtype=np.int64),
            missing_cells=np.asarray(missing_cells, dtype=np.int64).reshape(-1, 2),
        )

    def __len__(self) -> int:
        return self.zeta.shape[0]

    @property
    def dims(self) -> Tuple[int, int, int, int, int]:
        n, K, H = self.zeta.shape
        return K, self.lam.shape[3], self.beta1.shape[1], H - K, self.states.shape[1]

    def record(self, slot: int, params: ModelParams, states: np.ndarray, imputed: np.ndarray, loglik: float, index: int) -> None:
        self.zeta[slot] = params.zeta
        self.lam[slot] = params.lam
        self.beta0[slot] = params.beta0
        self.beta1[slot] = params.beta1
        self.gamma[slot] = params.gamma
        self.states[slot] = states
        self.imputed[slot] = imputed
        self.loglik[slot] = loglik
        self.draw_index[slot] = index

    def params(self, n: int) -> ModelParams:
        return ModelParams(
            zeta=self.zeta[n].copy(),
            lam=self.lam[n].copy(),
            beta0=self.beta0[n].copy(),
            beta1=self.beta1[n].copy(),
            gamma=self.gamma[n].copy(),
        )

    def draw(self, n: int) -> PosteriorDraw:
        return PosteriorDraw(
            params=self.params(n),
            states=self.states[n].copy(),
            imputed=self.imputed[n].copy(),
            loglik=float(self.loglik[n]),
            index=int(self.draw_index[n]),
        )

    def posterior_mean(self) -> ModelParams:
        if not len(self):
            raise InputError("posterior store is empty")
        return ModelParams(
            zeta=self.zeta.mean(axis=0),
            lam=self.lam.mean(axis=0),
            beta0=self.beta0.mean(axis=0),
            beta1=self.beta1.mean(axis=0),
            gamma=self.gamma.mean(axis=0),
        )

    def families(self) -> Dict[str, np.ndarray]:
        return {
            "zeta": self.zeta,
            "lambda": self.lam,
            "beta0": self.beta0,
            "beta1": self.beta1,
            "gamma": self.gamma,
            "states": self.states + 1,
            "imputed": self.imputed,
            "loglik": self.loglik,
        }

    def save(self, directory: Path) -> Path:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)

        for name, values in self.families().items():
            _long_frame(values, self.draw_index, FAMILIES[name]).to_csv(
                directory / f"{name}.csv", index=False, float_format=FLOAT_FORMAT
            )

        manifest = dict(self.manifest)
        K, S, A, B, T = self.dims
        manifest["dimensions"] = {"K": K, "S": S, "A": A, "B": B, "T": T, "draws": len(self)}
        manifest["missing_cells"] = self.missing_cells.tolist()
        with open(directory / MANIFEST, "w") as f:
            json.dump(manifest, f, indent=2, sort_keys=True)

        logger.info(f"saved {len(self)} draws to {directory}")
        return directory

    @classmethod
    def load(cls, directory: Path) -> "PosteriorStore":
        directory = Path(directory)
        manifest_path = directory / MANIFEST
        if not manifest_path.exists():
            raise ConfigurationError(f"no posterior store at {directory}", {"path": str(directory)})

        with open(manifest_path, "r") as f:
            manifest = json.load(f)

        dims = manifest["dimensions"]
        K, S, A, B, T, n = dims["K"], dims["S"], dims["A"], dims["B"], dims["T"], dims["draws"]
        missing = np.asarray(manifest.get("missing_cells", []), dtype=np.int64).reshape(-1, 2)
        shapes = {
            "zeta": (n, K, K + B),
            "lambda": (n, 2, K, S),
            "beta0": (n, K, S),
            "beta1": (n, A, S),
            "gamma": (n, S),
            "states": (n, T),
            "imputed": (n, missing.shape[0]),
            "loglik": (n,),
        }

        arrays, draw_index = {}, None
        for name, shape in shapes.items():
            frame = pd.read_csv(directory / f"{name}.csv", float_precision="round_trip")
            arrays[name], index = _from_long(frame, shape)
            if draw_index is None:
                draw_index = index

        store = cls(
            zeta=arrays["zeta"],
            lam=arrays["lambda"],
            beta0=arrays["beta0"],
            beta1=arrays["beta1"],
            gamma=arrays["gamma"],
            states=arrays["states"].astype(np.int64) - 1,
            imputed=arrays["imputed"],
            loglik=arrays["loglik"],
            draw_index=draw_index if draw_index is not None else np.arange(n),
            missing_cells=missing,
            manifest={k: v for k, v in manifest.items() if k not in ("dimensions", "missing_cells")},
        )
        logger.info(f"loaded {n} draws from {directory}")
        return store


def _long_frame(values: np.ndarray, draw_index: np.ndarray, index_names: Tuple[str, ...]) -> pd.DataFrame:
    n = values.shape[0]
    inner = values.shape[1:]
    grids = np.indices((n,) + inner).reshape(len(inner) + 1, -1)

    columns = {"draw": draw_index[grids[0]]}
    for i, name in enumerate(index_names):
        columns[name] = grids[i + 1]
    columns["value"] = values.reshape(-1)
    return pd.DataFrame(columns)


def _from_long(frame: pd.DataFrame, shape: Tuple[int, ...]):
    expected = int(np.prod(shape))
    if frame.shape[0] != expected:
        raise InputError(f"store file has {frame.shape[0]} rows, expected {expected}")

    # rows are written in C order, draw-major
    values = frame["value"].to_numpy(dtype=float).reshape(shape)
    if not expected:
        return values, None
    draws = frame["draw"].to_numpy()
    return values, draws[:: expected // shape[0]].astype(np.int64)


def missing_cells(mask: np.ndarray) -> np.ndarray:
    """(n_missing, 2) array of (t, s) for unobserved cells, row-major."""
    return np.argwhere(~mask)
