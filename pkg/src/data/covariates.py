"""Covariate ingestion and standardization.

x holds the region-wide series driving the transitions (T x B); w holds the
station-level series driving the mixing weights (T x S x A). Every column is
standardized at ingestion and the constants are kept, so new covariates for
forecasting go through exactly the same transform.
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from src.data.panel import MISSING_TOKEN, read_table
from src.util.errors import ConfigurationError, InputError

logger = logging.getLogger(__name__)

MONTHLY_FLAG = ":monthly"
MONTH_LENGTHS = (31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31)
HARMONIC_PERIODS = (365.0, 182.5)
HARMONIC_NAMES = ("sin365", "cos365", "sin182", "cos182")
DRIFT_NAME = "drift"


@dataclass
class Standardization:
    mean: np.ndarray
    sd: np.ndarray

    def apply(self, values: np.ndarray) -> np.ndarray:
        return (values - self.mean) / self.sd

    def invert(self, values: np.ndarray) -> np.ndarray:
        return values * self.sd + self.mean

    def to_json(self) -> dict:
        return {"mean": self.mean.tolist(), "sd": self.sd.tolist()}

    @classmethod
    def from_json(cls, data: dict) -> "Standardization":
        return cls(mean=np.asarray(data["mean"], dtype=float), sd=np.asarray(data["sd"], dtype=float))


@dataclass
class CovariateSet:
    x: np.ndarray
    w: np.ndarray
    x_names: List[str]
    w_names: List[str]
    x_scale: Standardization
    w_scale: Standardization
    harmonics: bool = False
    drift: bool = False
    start_day: int = 0

    @property
    def T(self) -> int:
        return self.x.shape[0]

    @property
    def B(self) -> int:
        return self.x.shape[1]

    @property
    def A(self) -> int:
        return self.w.shape[2]

    @property
    def S(self) -> int:
        return self.w.shape[1]

    def slice(self, start: int, stop: Optional[int] = None) -> "CovariateSet":
        return CovariateSet(
            x=self.x[start:stop].copy(),
            w=self.w[start:stop].copy(),
            x_names=list(self.x_names),
            w_names=list(self.w_names),
            x_scale=self.x_scale,
            w_scale=self.w_scale,
            harmonics=self.harmonics,
            drift=self.drift,
            start_day=self.start_day + start,
        )

    def apply(self, x_raw: np.ndarray, w_raw: np.ndarray, start_day: int) -> "CovariateSet":
        """Standardizes new raw covariates with the stored training constants."""
        x_raw, w_raw = _append_generated(x_raw, w_raw, start_day, self.harmonics, self.drift)
        if x_raw.shape[1] != self.B or w_raw.shape[2] != self.A or w_raw.shape[1] != self.S:
            raise InputError(
                "new covariates do not match the fitted columns",
                {"B": [x_raw.shape[1], self.B], "A": [w_raw.shape[2], self.A], "S": [w_raw.shape[1], self.S]},
            )
        x = self.x_scale.apply(x_raw)
        w = self.w_scale.apply(w_raw)
        _check_finite(x, w)
        return CovariateSet(
            x=x,
            w=w,
            x_names=list(self.x_names),
            w_names=list(self.w_names),
            x_scale=self.x_scale,
            w_scale=self.w_scale,
            harmonics=self.harmonics,
            drift=self.drift,
            start_day=start_day,
        )

    def pinned(self, kind: str, index: int, value: float) -> "CovariateSet":
        """Copy with every covariate at its column mean and one column at value."""
        x = np.broadcast_to(self.x.mean(axis=0), self.x.shape).copy()
        w = np.broadcast_to(self.w.mean(axis=0), self.w.shape).copy()
        if kind == "x":
            if not 0 <= index < self.B:
                raise InputError(f"x covariate index {index} out of range", {"B": self.B})
            x[:, index] = value
        elif kind == "w":
            if not 0 <= index < self.A:
                raise InputError(f"w covariate index {index} out of range", {"A": self.A})
            w[:, :, index] = value
        else:
            raise InputError(f"unknown covariate kind: {kind}")
        out = self.slice(0)
        out.x, out.w = x, w
        return out

    def manifest(self) -> dict:
        return {
            "x_names": self.x_names,
            "w_names": self.w_names,
            "x_scale": self.x_scale.to_json(),
            "w_scale": self.w_scale.to_json(),
            "harmonics": self.harmonics,
            "drift": self.drift,
            "start_day": self.start_day,
        }


def _check_finite(x: np.ndarray, w: np.ndarray) -> None:
    if not np.all(np.isfinite(x)):
        raise InputError("x covariates must be finite after ingestion")
    if not np.all(np.isfinite(w)):
        raise InputError("w covariates must be finite after ingestion")


def standardize(values: np.ndarray, names: Sequence[str]) -> Tuple[np.ndarray, Standardization]:
    """Column-wise zero mean, unit sd (population sd) of a (T, columns) array."""
    mean = values.mean(axis=0)
    sd = values.std(axis=0)

    if np.any(~(sd > 0.0)):
        bad = int(np.flatnonzero(~(sd > 0.0))[0])
        name = names[bad] if bad < len(names) else str(bad)
        raise ConfigurationError(
            f"covariate '{name}' is constant and cannot be standardized",
            {"column": name},
        )

    scaled = (values - mean) / sd
    # second pass pins the moments to rounding level
    shift = scaled.mean(axis=0)
    stretch = scaled.std(axis=0)
    scaled = (scaled - shift) / stretch
    return scaled, Standardization(mean=mean + shift * sd, sd=sd * stretch)


def month_midpoints(n_months: int, start_day: int = 0) -> np.ndarray:
    """Day index of the middle of each consecutive month on a 365-day calendar."""
    lengths = np.resize(np.asarray(MONTH_LENGTHS, dtype=float), n_months)
    starts = np.concatenate([[0.0], np.cumsum(lengths)[:-1]])
    return starts + (lengths - 1.0) / 2.0 - start_day


def monthly_to_daily(values: Sequence[float], T: int, start_day: int = 0) -> np.ndarray:
    """Linear interpolation of consecutive monthly values to T daily values.

    Each monthly value sits at its month's midpoint; days before the first or
    after the last midpoint take the nearest monthly value.
    """
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        raise InputError("monthly series is empty")
    anchors = month_midpoints(values.size, start_day)
    return np.interp(np.arange(T, dtype=float), anchors, values)


def harmonic_terms(T: int, start_day: int = 0) -> np.ndarray:
    day = np.arange(start_day, start_day + T, dtype=float)
    cols = []
    for period in HARMONIC_PERIODS:
        cols.append(np.sin(2.0 * np.pi * day / period))
        cols.append(np.cos(2.0 * np.pi * day / period))
    return np.column_stack(cols)


def _append_generated(x, w, start_day, harmonics, drift):
    T, S = w.shape[0], w.shape[1]
    if harmonics:
        h = harmonic_terms(T, start_day)
        x = np.hstack([x, h])
        w = np.concatenate([w, np.broadcast_to(h[:, None, :], (T, S, h.shape[1]))], axis=2)
    if drift:
        day = np.arange(start_day, start_day + T, dtype=float)
        w = np.concatenate([w, np.broadcast_to(day[:, None, None], (T, S, 1))], axis=2)
    return x, w


def _column_values(frame: pd.DataFrame, column: str, T: int, start_day: int, source: str) -> Tuple[str, np.ndarray]:
    name = str(column).strip()
    tokens = [str(v).strip() for v in frame[column].tolist()]

    if name.endswith(MONTHLY_FLAG):
        name = name[: -len(MONTHLY_FLAG)]
        months = []
        for i, token in enumerate(tokens):
            if token in (MISSING_TOKEN, ""):
                break
            months.append(_number(token, i + 1, name, source))
        return name, monthly_to_daily(months, T, start_day)

    if len(tokens) != T:
        raise InputError(
            f"{source} has {len(tokens)} rows, panel has {T} days",
            {"rows": len(tokens), "T": T},
        )
    return name, np.array([_number(t, i + 1, name, source) for i, t in enumerate(tokens)])


def _number(token: str, row: int, column: str, source: str) -> float:
    try:
        value = float(token)
    except ValueError:
        raise InputError(
            f"non-numeric covariate '{token}' at row {row}, column {column} in {source}",
            {"row": row, "column": column},
        ) from None
    if not np.isfinite(value):
        raise InputError(f"non-finite covariate at row {row}, column {column} in {source}")
    return value


def read_x(path: Optional[Path], T: int, start_day: int = 0) -> Tuple[np.ndarray, List[str]]:
    if path is None:
        return np.zeros((T, 0)), []
    frame = read_table(path)
    names, cols = [], []
    for column in frame.columns:
        name, values = _column_values(frame, column, T, start_day, Path(path).name)
        names.append(name)
        cols.append(values)
    x = np.column_stack(cols) if cols else np.zeros((T, 0))
    return x, names


def read_w_long(path: Path, stations: List[str], T: int, start_day: int = 0) -> Tuple[np.ndarray, List[str]]:
    """Long format: day, station, name, value (day is 1-based)."""
    frame = read_table(path)
    required = {"day", "station", "name", "value"}
    if not required.issubset(frame.columns):
        raise InputError(f"w file needs columns {sorted(required)}", {"columns": list(frame.columns)})

    unknown = sorted(set(frame["station"]) - set(stations))
    if unknown:
        raise InputError(f"unknown station identifiers in w: {unknown[:5]}", {"stations": unknown})

    names = list(dict.fromkeys(n.strip() for n in frame["name"]))
    w = np.full((T, len(stations), len(names)), np.nan)
    index = {s: i for i, s in enumerate(stations)}

    for a, raw_name in enumerate(names):
        name = raw_name[: -len(MONTHLY_FLAG)] if raw_name.endswith(MONTHLY_FLAG) else raw_name
        block = frame[frame["name"].str.strip() == raw_name]
        for station, rows in block.groupby("station", sort=False):
            days = np.array([int(d) for d in rows["day"]]) - 1
            vals = np.array([_number(v, int(d), name, Path(path).name) for d, v in zip(rows["day"], rows["value"])])
            order = np.argsort(days)
            if raw_name.endswith(MONTHLY_FLAG):
                w[:, index[station], a] = monthly_to_daily(vals[order], T, start_day)
            else:
                if days.min() < 0 or days.max() >= T:
                    raise InputError(f"w day index outside 1..{T} for {name}")
                w[days, index[station], a] = vals

    if np.isnan(w).any():
        t, s, a = np.argwhere(np.isnan(w))[0]
        raise InputError(
            f"w missing value for day {t + 1}, station {stations[s]}, covariate {names[a]}",
            {"day": int(t + 1), "station": stations[s]},
        )
    return w, [n[: -len(MONTHLY_FLAG)] if n.endswith(MONTHLY_FLAG) else n for n in names]


def read_w_directory(path: Path, stations: List[str], T: int, start_day: int = 0) -> Tuple[np.ndarray, List[str]]:
    """One `<station>.csv` per station, T rows x A columns, identical headers."""
    path = Path(path)
    files = {p.stem: p for p in sorted(path.glob("*.csv"))}

    unknown = sorted(set(files) - set(stations))
    if unknown:
        raise InputError(f"unknown station identifiers in w: {unknown[:5]}", {"stations": unknown})
    missing = [s for s in stations if s not in files]
    if missing:
        raise InputError(f"no w file for stations {missing[:5]}", {"stations": missing})

    blocks, names = [], None
    for station in stations:
        block, block_names = read_x(files[station], T, start_day)
        if names is not None and block_names != names:
            raise InputError(f"w file for {station} has different columns")
        names = block_names
        blocks.append(block)
    return np.stack(blocks, axis=1), names or []


def load_raw_covariates(
    x_path: Optional[Path],
    w_path: Optional[Path],
    stations: List[str],
    T: int,
    start_day: int = 0,
) -> Tuple[np.ndarray, List[str], np.ndarray, List[str]]:
    x, x_names = read_x(x_path, T, start_day)
    if w_path is None:
        w, w_names = np.zeros((T, len(stations), 0)), []
    elif Path(w_path).is_dir():
        w, w_names = read_w_directory(Path(w_path), stations, T, start_day)
    else:
        w, w_names = read_w_long(Path(w_path), stations, T, start_day)
    return x, x_names, w, w_names


def build_covariates(
    x: np.ndarray,
    x_names: List[str],
    w: np.ndarray,
    w_names: List[str],
    harmonics: bool = False,
    drift: bool = False,
    start_day: int = 0,
) -> CovariateSet:
    T, S = w.shape[0], w.shape[1]
    if x.shape[0] != T:
        raise InputError("x and w cover different numbers of days", {"x": x.shape[0], "w": T})

    x, w = _append_generated(x, w, start_day, harmonics, drift)
    if harmonics:
        x_names = list(x_names) + list(HARMONIC_NAMES)
        w_names = list(w_names) + list(HARMONIC_NAMES)
    if drift:
        w_names = list(w_names) + [DRIFT_NAME]

    _check_finite(x, w)
    x_std, x_scale = standardize(x, x_names) if x.shape[1] else (x, Standardization(np.zeros(0), np.ones(0)))
    if w.shape[2]:
        # standardized per (station, covariate) column
        w_std, w_scale = standardize(w.reshape(T, -1), [n for _ in range(S) for n in w_names])
        w_std = w_std.reshape(T, S, -1)
        w_scale = Standardization(w_scale.mean.reshape(S, -1), w_scale.sd.reshape(S, -1))
    else:
        w_std, w_scale = w, Standardization(np.zeros((S, 0)), np.ones((S, 0)))

    return CovariateSet(
        x=x_std,
        w=w_std,
        x_names=list(x_names),
        w_names=list(w_names),
        x_scale=x_scale,
        w_scale=w_scale,
        harmonics=harmonics,
        drift=drift,
        start_day=start_day,
    )


def load_covariates(
    x_path: Optional[Path],
    w_path: Optional[Path],
    stations: List[str],
    T: int,
    harmonics: bool = False,
    drift: bool = False,
) -> CovariateSet:
    x, x_names, w, w_names = load_raw_covariates(x_path, w_path, stations, T)
    covariates = build_covariates(x, x_names, w, w_names, harmonics, drift)
    logger.info(f"loaded covariates: B={covariates.B}, A={covariates.A}, T={covariates.T}")
    return covariates
