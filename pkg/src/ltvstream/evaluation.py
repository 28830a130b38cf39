"""Prequential scoring of posterior predictive batches.

Metrics for a batch are computed from predictions made before that batch was
fit (progressive validation): LPPD on the untruncated predictive density,
MAE/RMSE on truncated predictive means, and a location-fit pair that tracks
drift via predictive medians, which fat tails cannot destroy. All error
metrics are in unscaled target units.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import logsumexp

logger = logging.getLogger(__name__)

__all__ = [
    "lppd",
    "lppd_pointwise",
    "point_errors",
    "location_fit",
    "PrequentialRecord",
    "MetricsWriter",
    "read_metrics",
    "METRICS_COLUMNS",
]

# Delimited metrics schema, one record per batch. The first seven fields are
# the stable core; `rows` makes cumulative metrics reconstructible from the
# file alone and the *_cum fields are running per-row aggregates for
# convergence plots.
METRICS_COLUMNS = (
    "batch_index",
    "lppd",
    "mae",
    "rmse",
    "pred_location",
    "actual_mean",
    "divergences",
    "rows",
    "lppd_cum",
    "mae_cum",
    "rmse_cum",
)


def lppd_pointwise(log_densities: np.ndarray) -> np.ndarray:
    """Per-row log pointwise predictive density: log mean_s p(y_i | theta_s)."""
    log_densities = np.asarray(log_densities, dtype=np.float64)
    if log_densities.ndim != 2 or log_densities.shape[1] < 1:
        raise ValueError("expected a (rows, draws) matrix of log-densities")
    s = log_densities.shape[1]
    return logsumexp(log_densities, axis=1) - np.log(s)

def lppd(log_densities: np.ndarray) -> float:
    """Total LPPD over a batch (log-sum-exp stabilized)."""
    per_row = lppd_pointwise(log_densities)
    bad = np.nonzero(np.isneginf(per_row))[0]
    if bad.size:
        logger.warning(
            "lppd: %d rows have zero predictive density (indices %s)",
            bad.size,
            bad[:10].tolist(),
        )
    return float(per_row.sum())


def point_errors(predictive_draws: np.ndarray, actuals: np.ndarray) -> tuple[float, float]:
    """(MAE, RMSE) of per-row predictive means against actuals."""
    draws = np.asarray(predictive_draws, dtype=np.float64)
    actuals = np.asarray(actuals, dtype=np.float64)
    if draws.shape[0] != actuals.shape[0]:
        raise ValueError("row counts of draws and actuals differ")
    forecasts = draws.mean(axis=1)
    err = forecasts - actuals
    mae = float(np.abs(err).mean())
    rmse = float(np.sqrt(np.mean(err * err)))
    return mae, rmse


def location_fit(predictive_draws: np.ndarray, actuals: np.ndarray) -> tuple[float, float]:
    """(mean of per-row predictive medians, mean of actuals) for one batch."""
    draws = np.asarray(predictive_draws, dtype=np.float64)
    actuals = np.asarray(actuals, dtype=np.float64)
    if actuals.size == 0:
        raise ValueError("location_fit needs a nonempty batch")
    if draws.ndim != 2 or draws.shape[1] == 0:
        logger.warning("location_fit: no predictive draws; reporting actuals only")
        return float("nan"), float(actuals.mean())
    return float(np.median(draws, axis=1).mean()), float(actuals.mean())


@dataclass
class PrequentialRecord:
    """Per-batch scores; `timestamp` is informational and never serialized."""

    batch_index: int
    rows: int
    lppd: float
    mae: float
    rmse: float
    pred_location: float
    actual_mean: float
    divergences: int
    timestamp: float = field(default_factory=time.time, compare=False)


class MetricsWriter:
    """Append-only delimited metrics file with running cumulative columns.

    Output is deterministic for identical record sequences: floats are
    written with shortest round-trip repr and no timestamps are included.
    """

    def __init__(self, path, delimiter: str = ","):
        self.path = Path(path)
        self.delimiter = delimiter
        self._rows_seen = 0
        self._lppd_sum = 0.0
        self._abs_err_sum = 0.0
        self._sq_err_sum = 0.0
        self.path.write_text(delimiter.join(METRICS_COLUMNS) + "\n")

    @staticmethod
    def _fmt(value) -> str:
        if isinstance(value, float):
            return repr(value)
        return str(value)

    def append(self, record: PrequentialRecord) -> None:
        self._rows_seen += record.rows
        self._lppd_sum += record.lppd
        self._abs_err_sum += record.mae * record.rows
        self._sq_err_sum += record.rmse**2 * record.rows
        values = [
            record.batch_index,
            record.lppd,
            record.mae,
            record.rmse,
            record.pred_location,
            record.actual_mean,
            record.divergences,
            record.rows,
            self._lppd_sum / self._rows_seen,
            self._abs_err_sum / self._rows_seen,
            float(np.sqrt(self._sq_err_sum / self._rows_seen)),
        ]
        with self.path.open("a") as fh:
            fh.write(self.delimiter.join(self._fmt(v) for v in values) + "\n")


def read_metrics(path, delimiter: str = ",") -> list[dict]:
    """Parse a metrics file back into one dict per batch."""
    lines = Path(path).read_text().strip().splitlines()
    if not lines:
        return []
    header = lines[0].split(delimiter)
    records = []
    for line in lines[1:]:
        parts = line.split(delimiter)
        rec = {}
        for key, raw in zip(header, parts):
            if key in ("batch_index", "divergences", "rows"):
                rec[key] = int(raw)
            else:
                rec[key] = float(raw)
        records.append(rec)
    return records
