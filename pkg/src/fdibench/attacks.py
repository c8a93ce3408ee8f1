"""The four false-data attacks on angle measurements, plus label masks.

Attack support is the inclusive time window [t1, t2] on the target buses.
Inside the window:

    step    phi~ = c * phi
    poison  phi~ = phi + c,  c ~ N(mu, sigma^2) drawn per (bus, sample)
    ramp    phi~ = (1 + m * (t - t1)) * phi
    rtw     phi~ = (1 + c(t)) * phi,  c(t) = beta * (t - t1) * (phi - phi_nom)

The literal composition of the rtw signal with the multiplicative form
(phi~ = c(t) * phi) collapses measurements toward zero; the shifted form above
keeps "zero perturbation => no distortion" and is the default.  Set
``literal_rtw=True`` for the collapsing variant.

Poison draws come from a PCG64 generator seeded per sample with
SeedSequence([seed, sample_index]), so a post-hoc attack on a stored trace and
an online measurement tap produce identical values.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .trace import MeasurementTrace

KINDS = ("step", "poison", "ramp", "rtw")

RNG_NAME = "pcg64/seedseq-v1"  # recorded in outputs alongside the seed


class AttackError(ValueError):
    pass


@dataclass(frozen=True)
class AttackSpec:
    kind: str
    targets: tuple            # bus ids
    t1: float
    t2: float
    c: float = 1.0            # step scale factor
    mu: float = 0.0           # poison mean
    sigma: float = 0.0        # poison std (normalized angle units)
    m: float = 0.0            # ramp gradient, 1/s
    beta: float = 0.0         # rtw gain, 1/s
    phi_nom: dict | None = None  # rtw nominal angle per target bus; None = pre-event mean
    seed: int = 0
    literal_rtw: bool = False

    def __post_init__(self):
        if self.kind not in KINDS:
            raise AttackError(f"unknown attack kind {self.kind!r}")
        if not self.targets:
            raise AttackError("targets must be non-empty")
        if len(set(self.targets)) != len(self.targets):
            raise AttackError("duplicate target buses")
        if not (0 <= self.t1 < self.t2):
            raise AttackError("need 0 <= t1 < t2")
        if self.sigma < 0:
            raise AttackError("sigma must be >= 0")
        object.__setattr__(self, "targets", tuple(self.targets))


@dataclass(frozen=True)
class LabelMask:
    mask: np.ndarray      # (samples, buses) bool
    any_bus: np.ndarray   # (samples,) bool
    bus_ids: tuple


def _target_columns(spec: AttackSpec, bus_ids: tuple) -> list[int]:
    cols = []
    for b in spec.targets:
        if b not in bus_ids:
            raise AttackError(f"target bus {b!r} not present")
        cols.append(bus_ids.index(b))
    return cols


def attack_label_mask(spec: AttackSpec, t: np.ndarray, bus_ids: tuple) -> LabelMask:
    t = np.asarray(t, dtype=float)
    if t.size == 0:
        raise AttackError("empty time grid")
    cols = _target_columns(spec, bus_ids)
    in_window = (t >= spec.t1 - 1e-9) & (t <= spec.t2 + 1e-9)
    mask = np.zeros((t.size, len(bus_ids)), dtype=bool)
    for j in cols:
        mask[in_window, j] = True
    return LabelMask(mask=mask, any_bus=mask.any(axis=1), bus_ids=tuple(bus_ids))


def _poison_draws(spec: AttackSpec, sample_index: int, n_targets: int) -> np.ndarray:
    rng = np.random.Generator(np.random.PCG64(
        np.random.SeedSequence([int(spec.seed), int(sample_index)])))
    return spec.mu + spec.sigma * rng.standard_normal(n_targets)


def _resolve_phi_nom(spec: AttackSpec, trace: MeasurementTrace, cols: list[int]) -> np.ndarray:
    if spec.phi_nom is not None:
        try:
            return np.array([float(spec.phi_nom[b]) for b in spec.targets])
        except KeyError as e:
            raise AttackError(f"phi_nom missing target bus {e.args[0]!r}") from None
    # default: mean over the pre-event/pre-attack segment
    cut = min(spec.t1, 1.0)
    pre = trace.t < cut - 1e-9
    if not pre.any():
        pre = trace.t <= trace.t[0]
    return trace.angles[np.ix_(pre, cols)].mean(axis=0)


def apply_attack(trace: MeasurementTrace, spec: AttackSpec) -> MeasurementTrace:
    """Return the attacked copy of ``trace``; bit-exact outside the support."""
    if spec.t1 < trace.t[0] - 1e-9 or spec.t2 > trace.t[-1] + 1e-9:
        raise AttackError(
            f"attack window [{spec.t1}, {spec.t2}] outside trace span "
            f"[{trace.t[0]}, {trace.t[-1]}]"
        )
    cols = _target_columns(spec, trace.bus_ids)
    out = trace.angles.copy()
    in_window = np.where((trace.t >= spec.t1 - 1e-9) & (trace.t <= spec.t2 + 1e-9))[0]
    sub = out[np.ix_(in_window, cols)]
    dt_rel = trace.t[in_window] - spec.t1

    if spec.kind == "step":
        sub = spec.c * sub
    elif spec.kind == "ramp":
        sub = (1.0 + spec.m * dt_rel)[:, None] * sub
    elif spec.kind == "rtw":
        nom = _resolve_phi_nom(spec, trace, cols)
        ct = spec.beta * dt_rel[:, None] * (sub - nom[None, :])
        sub = ct * sub if spec.literal_rtw else (1.0 + ct) * sub
    else:  # poison
        for r, k in enumerate(in_window):
            sub[r] = sub[r] + _poison_draws(spec, k, len(cols))

    out[np.ix_(in_window, cols)] = sub
    return trace.with_angles(out, provenance="attacked")


class MeasurementTap:
    """Online per-sample attack hook for the simulator's AGC feedback path.

    ``phi_nom`` must be resolved up front (e.g. from the operating point) for
    the rtw kind, since no trace history exists online.
    """

    def __init__(self, spec: AttackSpec, bus_ids: tuple):
        self.spec = spec
        self.bus_ids = tuple(bus_ids)
        self.cols = _target_columns(spec, self.bus_ids)
        if spec.kind == "rtw" and spec.phi_nom is None:
            raise AttackError("online rtw tap requires explicit phi_nom")
        self._nom = (np.array([float(spec.phi_nom[b]) for b in spec.targets])
                     if spec.phi_nom is not None else None)

    def __call__(self, sample_index: int, t: float, angles: np.ndarray) -> np.ndarray:
        spec = self.spec
        if t < spec.t1 - 1e-9 or t > spec.t2 + 1e-9:
            return angles
        out = angles.copy()
        vals = out[self.cols]
        dt_rel = t - spec.t1
        if spec.kind == "step":
            vals = spec.c * vals
        elif spec.kind == "ramp":
            vals = (1.0 + spec.m * dt_rel) * vals
        elif spec.kind == "rtw":
            ct = spec.beta * dt_rel * (vals - self._nom)
            vals = ct * vals if spec.literal_rtw else (1.0 + ct) * vals
        else:
            vals = vals + _poison_draws(spec, sample_index, len(self.cols))
        out[self.cols] = vals
        return out
