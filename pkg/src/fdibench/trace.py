"""Time-indexed per-bus angle measurement traces and their CSV persistence.

CSV layout: comment lines carrying metadata, then a header
``t,bus_1,...,bus_N`` and one row per sample with >= 12 significant digits.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np


class TraceError(ValueError):
    """Malformed trace file or inconsistent trace contents."""


@dataclass(frozen=True)
class MeasurementTrace:
    t: np.ndarray                  # (n,) seconds, uniform, strictly increasing
    angles: np.ndarray             # (n, n_buses)
    bus_ids: tuple                 # column labels (reference column dropped after differencing)
    sample_rate: float             # Hz
    provenance: str = "true"       # "true" | "attacked"
    scenario_id: str = ""
    freq: np.ndarray | None = None  # optional (n, n_buses) per-bus frequency estimates, pu
    aux: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        t = np.asarray(self.t, dtype=float)
        a = np.asarray(self.angles, dtype=float)
        if a.shape != (t.size, len(self.bus_ids)):
            raise TraceError(f"angle matrix shape {a.shape} != ({t.size}, {len(self.bus_ids)})")
        if t.size >= 2:
            dt = np.diff(t)
            if np.any(dt <= 0):
                raise TraceError("time grid not strictly increasing")
            if not np.allclose(dt, dt[0], rtol=0, atol=1e-9):
                raise TraceError("time grid not uniform")
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "angles", a)

    @property
    def n_samples(self) -> int:
        return self.t.size

    @property
    def duration(self) -> float:
        return float(self.t[-1] - self.t[0])

    def column(self, bus_id) -> np.ndarray:
        try:
            j = self.bus_ids.index(bus_id)
        except ValueError:
            raise TraceError(f"bus {bus_id!r} not in trace") from None
        return self.angles[:, j]

    def with_angles(self, angles: np.ndarray, **changes) -> "MeasurementTrace":
        return replace(self, angles=angles, **changes)


def write_trace(trace: MeasurementTrace, path: str | Path) -> None:
    path = Path(path)
    with path.open("w") as fh:
        fh.write(f"# sample_rate: {trace.sample_rate!r}\n")
        fh.write(f"# provenance: {trace.provenance}\n")
        fh.write(f"# scenario_id: {trace.scenario_id}\n")
        header = "t," + ",".join(f"bus_{b}" for b in trace.bus_ids)
        fh.write(header + "\n")
        for k in range(trace.n_samples):
            row = [format(trace.t[k], ".12e")]
            row += [format(v, ".12e") for v in trace.angles[k]]
            fh.write(",".join(row) + "\n")


def read_trace(path: str | Path) -> MeasurementTrace:
    path = Path(path)
    meta = {"sample_rate": None, "provenance": "true", "scenario_id": ""}
    header = None
    rows = []
    with path.open() as fh:
        for raw in fh:
            s = raw.strip()
            if not s:
                continue
            if s.startswith("#"):
                body = s.lstrip("#").strip()
                if ":" in body:
                    k, v = body.split(":", 1)
                    meta[k.strip()] = v.strip()
                continue
            if header is None:
                header = s.split(",")
                continue
            parts = s.split(",")
            if len(parts) != len(header):
                raise TraceError(
                    f"{path}: row has {len(parts)} columns, header has {len(header)}"
                )
            rows.append([float(p) for p in parts])
    if header is None:
        raise TraceError(f"{path}: empty trace file")
    if header[0] != "t" or not all(h.startswith("bus_") for h in header[1:]):
        raise TraceError(f"{path}: unexpected header {header[:3]}...")
    if not rows:
        raise TraceError(f"{path}: trace has no samples")
    data = np.array(rows)

    def _bus_label(h):
        lbl = h[len("bus_"):]
        try:
            return int(lbl)
        except ValueError:
            return lbl

    bus_ids = tuple(_bus_label(h) for h in header[1:])
    sr = float(meta["sample_rate"]) if meta["sample_rate"] else (
        1.0 / (data[1, 0] - data[0, 0]) if data.shape[0] > 1 else 1.0
    )
    return MeasurementTrace(
        t=data[:, 0],
        angles=data[:, 1:],
        bus_ids=bus_ids,
        sample_rate=sr,
        provenance=meta["provenance"],
        scenario_id=meta["scenario_id"],
    )
