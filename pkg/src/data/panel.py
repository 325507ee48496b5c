import logging
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional

import numpy as np
import pandas as pd

from src.util.errors import ConfigurationError, InputError

logger = logging.getLogger(__name__)

MISSING_TOKEN = "NA"
FLOAT_FORMAT = "%.17g"


@dataclass
class ObservationPanel:
    """Daily rainfall (mm/day), T days x S stations; mask is True where observed."""

    values: np.ndarray
    mask: np.ndarray
    stations: List[str]

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        self.mask = np.asarray(self.mask, dtype=bool)
        # unobserved cells hold 0 so arithmetic over the full array stays finite
        self.values = np.where(self.mask, self.values, 0.0)

    @property
    def T(self) -> int:
        return self.values.shape[0]

    @property
    def S(self) -> int:
        return self.values.shape[1]

    @property
    def n_observed(self) -> int:
        return int(self.mask.sum())

    @classmethod
    def from_array(cls, values: np.ndarray, stations: Optional[List[str]] = None) -> "ObservationPanel":
        values = np.asarray(values, dtype=float)
        mask = np.isfinite(values)
        if stations is None:
            stations = [f"s{i + 1}" for i in range(values.shape[1])]
        return cls(values=np.where(mask, values, 0.0), mask=mask, stations=list(stations))

    def validate(self) -> "ObservationPanel":
        if self.values.ndim != 2 or self.values.shape != self.mask.shape:
            raise InputError("panel values and mask must be matching T x S arrays")
        if self.T < 2:
            raise InputError("panel needs at least 2 days", {"T": self.T})
        if self.S < 1:
            raise InputError("panel needs at least 1 station")
        if len(self.stations) != self.S:
            raise InputError("one station identifier per column required")

        observed = self.values[self.mask]
        if not np.all(np.isfinite(observed)):
            raise InputError("observed rainfall must be finite")
        if np.any(observed < 0.0):
            t, s = np.argwhere(self.mask & (self.values < 0.0))[0]
            raise InputError(
                f"negative rainfall at row {t + 1}, column {self.stations[s]}",
                {"row": int(t + 1), "column": self.stations[s]},
            )
        return self

    def slice(self, start: int, stop: Optional[int] = None) -> "ObservationPanel":
        return ObservationPanel(
            values=self.values[start:stop].copy(),
            mask=self.mask[start:stop].copy(),
            stations=list(self.stations),
        )

    def with_values(self, values: np.ndarray) -> "ObservationPanel":
        return ObservationPanel(values=values, mask=self.mask.copy(), stations=list(self.stations))

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame(self.values, columns=self.stations)
        return frame.where(self.mask)

    def wet_fraction(self, threshold: float = 0.0) -> np.ndarray:
        wet = (self.values > threshold) & self.mask
        with np.errstate(invalid="ignore", divide="ignore"):
            return wet.sum(axis=0) / self.mask.sum(axis=0)


def _parse_cell(token: str, row: int, column: str) -> float:
    token = token.strip()
    if token == MISSING_TOKEN:
        return np.nan
    try:
        value = float(token)
    except ValueError:
        raise InputError(
            f"non-numeric value '{token}' at row {row}, column {column}",
            {"row": row, "column": column, "value": token},
        ) from None
    if not np.isfinite(value):
        raise InputError(
            f"non-finite value at row {row}, column {column}",
            {"row": row, "column": column},
        )
    if value < 0.0:
        raise InputError(
            f"negative rainfall {value} at row {row}, column {column}",
            {"row": row, "column": column, "value": value},
        )
    return value


def read_table(path: Path) -> pd.DataFrame:
    """CSV as strings, rejecting ragged rows."""
    path = Path(path)
    if not path.exists():
        raise ConfigurationError(f"file not found: {path}", {"path": str(path)})

    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False, na_filter=False)
    except pd.errors.ParserError as e:
        raise InputError(f"ragged rows in {path.name}: {e}", {"path": str(path)}) from None
    except pd.errors.EmptyDataError:
        raise InputError(f"empty file: {path.name}", {"path": str(path)}) from None

    # short rows come back as NaN even with na_filter off
    short = frame.isna().any(axis=1).to_numpy()
    if short.any():
        row = int(np.flatnonzero(short)[0]) + 1
        raise InputError(f"ragged row {row} in {path.name}", {"path": str(path), "row": row})

    return frame


def load_panel(path: Path) -> ObservationPanel:
    frame = read_table(path)
    stations = [str(c).strip() for c in frame.columns]

    values = np.empty(frame.shape)
    for j, column in enumerate(frame.columns):
        for i, token in enumerate(frame[column].tolist()):
            values[i, j] = _parse_cell(token, i + 1, stations[j])

    panel = ObservationPanel.from_array(values, stations).validate()
    logger.info(f"loaded panel {path}: {panel.T} days, {panel.S} stations, {panel.T * panel.S - panel.n_observed} missing")
    return panel


def write_panel(panel: ObservationPanel, path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    panel.to_frame().to_csv(path, index=False, na_rep=MISSING_TOKEN, float_format=FLOAT_FORMAT)
    logger.debug(f"wrote panel {path}")
    return path
