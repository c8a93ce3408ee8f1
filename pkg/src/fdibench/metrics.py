"""Detection and localization metrics."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class MetricsError(ValueError):
    pass


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    fn: int
    tn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


@dataclass(frozen=True)
class PointMetrics:
    precision: float
    recall: float
    f1: float
    counts: ConfusionCounts
    degenerate: bool = False  # a zero denominator was mapped to 0


def f1_score(precision: float, recall: float) -> float:
    if precision + recall <= 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


def point_metrics(predicted: np.ndarray, truth: np.ndarray) -> PointMetrics:
    predicted = np.asarray(predicted, dtype=bool)
    truth = np.asarray(truth, dtype=bool)
    if predicted.shape != truth.shape:
        raise MetricsError(f"mask length mismatch: {predicted.shape} vs {truth.shape}")
    tp = int((predicted & truth).sum())
    fp = int((predicted & ~truth).sum())
    fn = int((~predicted & truth).sum())
    tn = int((~predicted & ~truth).sum())
    degenerate = (tp + fp == 0) or (tp + fn == 0)
    p = tp / (tp + fp) if tp + fp else 0.0
    r = tp / (tp + fn) if tp + fn else 0.0
    return PointMetrics(
        precision=p, recall=r, f1=f1_score(p, r),
        counts=ConfusionCounts(tp, fp, fn, tn), degenerate=degenerate,
    )


@dataclass(frozen=True)
class LocalizationMetrics:
    hit_at_k: float
    mean_rank: float
    k: int


def localization_metrics(ranked_buses: list, true_attacked: set, k: int) -> LocalizationMetrics:
    if not true_attacked:
        raise MetricsError("empty true attacked set")
    missing = set(true_attacked) - set(ranked_buses)
    if missing:
        raise MetricsError(f"ranking does not cover attacked buses {sorted(missing)}")
    topk = set(ranked_buses[:k])
    hit = len(topk & set(true_attacked)) / len(true_attacked)
    ranks = [ranked_buses.index(b) + 1 for b in true_attacked]
    return LocalizationMetrics(hit_at_k=hit, mean_rank=float(np.mean(ranks)), k=k)
