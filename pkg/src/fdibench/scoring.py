"""Anomaly score series, threshold selection, and per-bus localization."""
from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

IQR_EPS = 1e-9


class ScoringError(ValueError):
    pass


@dataclass(frozen=True)
class RobustNormalizer:
    """Per-sensor (median, IQR) scaling of raw errors, fitted on normal data."""

    median: np.ndarray
    iqr: np.ndarray

    @staticmethod
    def fit(errors: np.ndarray) -> "RobustNormalizer":
        med = np.median(errors, axis=0)
        q75, q25 = np.percentile(errors, [75, 25], axis=0)
        iqr = np.maximum(q75 - q25, IQR_EPS)
        return RobustNormalizer(median=med, iqr=iqr)

    def apply(self, errors: np.ndarray) -> np.ndarray:
        return (errors - self.median) / self.iqr


@dataclass(frozen=True)
class AnomalyScoreSeries:
    t: np.ndarray                 # (n,) s
    per_sensor: np.ndarray        # (n, sensors) deviation scores a_i(t)
    sensor_ids: tuple
    threshold: float
    overall: np.ndarray = None    # A(t) = max_i a_i(t); derived if omitted

    def __post_init__(self):
        if self.overall is None:
            object.__setattr__(self, "overall", self.per_sensor.max(axis=1))

    @property
    def fired(self) -> np.ndarray:
        return self.overall > self.threshold

    def with_threshold(self, threshold: float) -> "AnomalyScoreSeries":
        return replace(self, threshold=float(threshold))


def select_threshold(validation_overall: np.ndarray, factor: float = 1.0) -> float:
    """Maximum overall score on normal validation data, scaled by ``factor``."""
    v = np.asarray(validation_overall, dtype=float)
    if v.size == 0:
        raise ScoringError("empty validation scores")
    thr = float(v.max() * factor)
    return thr


def localize(series: AnomalyScoreSeries, t_start: float, t_end: float) -> list:
    """Sensors ranked by mean deviation score over [t_start, t_end], descending.

    Ties break toward the lower sensor index.
    """
    sel = (series.t >= t_start - 1e-9) & (series.t <= t_end + 1e-9)
    if not sel.any():
        raise ScoringError(f"span [{t_start}, {t_end}] outside score series")
    means = series.per_sensor[sel].mean(axis=0)
    order = np.lexsort((np.arange(means.size), -means))
    return [series.sensor_ids[i] for i in order]


def write_score_series(series: AnomalyScoreSeries, path: str | Path) -> None:
    path = Path(path)
    with path.open("w") as fh:
        fh.write(f"# threshold: {series.threshold!r}\n")
        fh.write("t,overall," + ",".join(f"bus_{b}" for b in series.sensor_ids) + "\n")
        for k in range(series.t.size):
            row = [format(series.t[k], ".12e"), format(series.overall[k], ".12e")]
            row += [format(v, ".12e") for v in series.per_sensor[k]]
            fh.write(",".join(row) + "\n")
