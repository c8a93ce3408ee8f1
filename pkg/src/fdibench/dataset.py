"""Angle-difference transform, normalization, and sliding-window extraction."""
from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .attacks import LabelMask
from .trace import MeasurementTrace, TraceError

SCALE_EPS = 1e-12
PRE_EVENT_END = 1.0  # s; the shipped scenarios schedule the grid event at 1 s


@dataclass(frozen=True)
class NormalizationStats:
    center: np.ndarray      # per-bus
    scale: np.ndarray       # per-bus, > 0 (clamped columns flagged)
    bus_ids: tuple
    method: str = "pre-event-zscore"
    clamped: np.ndarray | None = None  # bool per bus: zero-variance columns

    def apply(self, angles: np.ndarray) -> np.ndarray:
        out = (angles - self.center) / self.scale
        if self.clamped is not None and self.clamped.any():
            out[..., self.clamped] = 0.0  # constant columns carry no signal
        return out

    def invert(self, normalized: np.ndarray) -> np.ndarray:
        return normalized * self.scale + self.center

    def save(self, path: str | Path) -> None:
        np.savez(
            path,
            center=self.center,
            scale=self.scale,
            bus_ids=np.array([str(b) for b in self.bus_ids]),
            method=np.array(self.method),
            clamped=self.clamped if self.clamped is not None else np.zeros(0, bool),
        )

    @staticmethod
    def load(path: str | Path) -> "NormalizationStats":
        d = np.load(path, allow_pickle=False)
        ids = tuple(int(b) if b.isdigit() else str(b) for b in d["bus_ids"])
        clamped = d["clamped"] if d["clamped"].size else None
        return NormalizationStats(
            center=d["center"], scale=d["scale"], bus_ids=ids,
            method=str(d["method"]), clamped=clamped,
        )


@dataclass(frozen=True)
class WindowMatrix:
    data: np.ndarray        # (sensors, samples)
    start_time: float       # s
    width: float            # s
    sensor_ids: tuple
    attacked: bool = False
    attacked_sensors: tuple = ()


def to_angle_differences(trace: MeasurementTrace, reference_bus) -> MeasurementTrace:
    """Subtract the reference bus column and drop it; other bus ids remain."""
    if reference_bus not in trace.bus_ids:
        raise TraceError(f"reference bus {reference_bus!r} not in trace")
    j = trace.bus_ids.index(reference_bus)
    ref = trace.angles[:, j][:, None]
    keep = [i for i in range(len(trace.bus_ids)) if i != j]
    return replace(
        trace,
        angles=trace.angles[:, keep] - ref,
        bus_ids=tuple(trace.bus_ids[i] for i in keep),
    )


def normalize(
    trace: MeasurementTrace,
    stats: NormalizationStats | None = None,
    pre_event_end: float = PRE_EVENT_END,
) -> tuple[MeasurementTrace, NormalizationStats]:
    """Per-bus z-score against the pre-event segment [0, pre_event_end).

    With ``stats`` given, applies that transform instead so train and test
    data share one frame.  Zero-variance columns get their scale clamped to
    1e-12 and are flagged in ``stats.clamped``.
    """
    if stats is not None:
        if stats.bus_ids != trace.bus_ids:
            raise TraceError("normalization stats bus set does not match trace")
    else:
        pre = trace.t < pre_event_end - 1e-9
        if not pre.any():
            pre = trace.t <= trace.t[0]
        seg = trace.angles[pre]
        center = seg.mean(axis=0)
        scale = seg.std(axis=0)
        clamped = scale <= SCALE_EPS
        scale = np.where(clamped, SCALE_EPS, scale)
        stats = NormalizationStats(
            center=center, scale=scale, bus_ids=trace.bus_ids, clamped=clamped
        )
    return trace.with_angles(stats.apply(trace.angles)), stats


def denormalize(trace: MeasurementTrace, stats: NormalizationStats) -> MeasurementTrace:
    return trace.with_angles(stats.invert(trace.angles))


def windows(
    trace: MeasurementTrace,
    width: float,
    stride: float | None = None,
    mask: LabelMask | None = None,
) -> list[WindowMatrix]:
    """Left-to-right windows of ``width`` seconds; stride defaults to width.

    A window is labeled attacked iff any of its samples is labeled on any
    sensor; the attacked sensor set collects every sensor with a labeled
    sample inside the window.
    """
    if stride is None:
        stride = width
    if stride <= 0:
        raise ValueError("stride must be > 0")
    if width > trace.duration + 1e-9:
        raise ValueError(f"window width {width}s exceeds trace duration {trace.duration}s")
    fs = trace.sample_rate
    w = int(round(width * fs))
    s_stride = stride * fs
    n_windows = int(np.floor((trace.duration - width) / stride + 1e-9)) + 1
    out = []
    for k in range(n_windows):
        i0 = int(round(k * s_stride))
        block = trace.angles[i0:i0 + w]
        attacked = False
        attacked_sensors: tuple = ()
        if mask is not None:
            sub = mask.mask[i0:i0 + w]
            attacked = bool(sub.any())
            attacked_sensors = tuple(
                mask.bus_ids[j] for j in np.where(sub.any(axis=0))[0]
            )
        out.append(WindowMatrix(
            data=block.T.copy(),
            start_time=float(trace.t[i0]),
            width=width,
            sensor_ids=trace.bus_ids,
            attacked=attacked,
            attacked_sensors=attacked_sensors,
        ))
    return out
