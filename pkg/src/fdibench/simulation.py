"""Linearized multi-machine grid dynamics with governor and AGC control.

Model: swing equations over generator buses, M_i * dd(delta_i) + (D_i/w_s) *
d(delta_i) = Pm_i - Pe_i, with load buses eliminated algebraically through the
DC power-flow equations (Kron reduction). Primary control is a first-order
governor lag with droop; secondary control is a per-area integral of the
frequency error (AGC), distributed by participation factors.

AGC consumes *measured* angles: per-bus frequency is estimated by a backward
finite difference of the recorded (noisy, possibly attacked) angle samples, so
a measurement tap propagates into the control loop.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .network import BusNetwork

OMEGA_S = 2 * np.pi * 60.0  # rad/s


class SimulationError(RuntimeError):
    pass


class SimulationDiverged(SimulationError):
    """Integration left the configured state bound; carries the partial trace."""

    def __init__(self, message: str, partial_trace):
        super().__init__(message)
        self.partial_trace = partial_trace


@dataclass(frozen=True)
class GridEvent:
    kind: str          # only "load-change" is exercised
    bus: int
    delta_p: float     # pu change in net injection (load increase => negative)
    time: float        # s

    def __post_init__(self):
        if self.kind != "load-change":
            raise ValueError(f"unsupported event kind {self.kind!r}")
        if self.time < 0:
            raise ValueError("event time must be >= 0")


@dataclass(frozen=True)
class SimConfig:
    sample_rate: float = 50.0       # Hz
    duration: float = 30.0          # s
    dt: float = 0.01                # integration step, s
    measurement_feedback: bool = True  # AGC reads measured (tapped) angles
    agc_gain: float = 30.0          # per-area integral gain, pu / (pu-freq * s)
    noise_std: float = 0.0          # measurement noise, rad
    seed: int = 0
    angle_bound: float = 10.0       # divergence guard on |delta|, rad

    def __post_init__(self):
        if self.duration <= 0:
            raise ValueError("duration must be > 0")
        if self.dt > 1.0 / self.sample_rate + 1e-12:
            raise ValueError("integration step must be <= sample period")
        n_sub = (1.0 / self.sample_rate) / self.dt
        if abs(n_sub - round(n_sub)) > 1e-9:
            raise ValueError("sample period must be an integer multiple of dt")


@dataclass(frozen=True)
class OperatingPoint:
    angles: np.ndarray          # (n_buses,) rad
    gen_mech_power: np.ndarray  # (n_gen,) pu
    residual: float             # max |B theta - P|, pu


def steady_state(net: BusNetwork, injections: np.ndarray | None = None) -> OperatingPoint:
    """DC power-flow solution; generator buses absorb any injection imbalance."""
    B = net.susceptance_matrix
    P = net.injections.copy() if injections is None else injections.astype(float).copy()
    imbalance = P.sum()
    P[net.gen_idx] -= imbalance / net.gen_idx.size
    ref = net.gen_idx[0]
    keep = np.array([i for i in range(net.n_buses) if i != ref], dtype=int)
    theta = np.zeros(net.n_buses)
    sub = B[np.ix_(keep, keep)]
    try:
        theta[keep] = np.linalg.solve(sub, P[keep])
    except np.linalg.LinAlgError:
        comp = _singular_component(net, ref)
        raise SimulationError(
            f"singular susceptance matrix; island without reference: buses {comp}"
        ) from None
    residual = float(np.abs(B @ theta - P).max())
    if residual > 1e-9:
        raise SimulationError(f"DC power-flow residual {residual:.3e} pu exceeds 1e-9")
    return OperatingPoint(angles=theta, gen_mech_power=P[net.gen_idx].copy(), residual=residual)


def _singular_component(net: BusNetwork, ref: int) -> list:
    adj = {i: set() for i in range(net.n_buses)}
    for ln in net.lines:
        i, j = net.bus_index(ln.from_bus), net.bus_index(ln.to_bus)
        adj[i].add(j)
        adj[j].add(i)
    seen, stack = {ref}, [ref]
    while stack:
        for nb in adj[stack.pop()]:
            if nb not in seen:
                seen.add(nb)
                stack.append(nb)
    return [net.bus_ids[i] for i in range(net.n_buses) if i not in seen]


def simulate(
    net: BusNetwork,
    events: list[GridEvent],
    cfg: SimConfig,
    measurement_tap=None,
):
    """Run one scenario; returns a MeasurementTrace of per-bus angle samples.

    ``measurement_tap(sample_index, t, angles) -> angles`` distorts the
    recorded measurements; with ``cfg.measurement_feedback`` the AGC frequency
    estimates are formed from the tapped samples.
    """
    from .trace import MeasurementTrace

    events = sorted(events, key=lambda e: e.time)
    for ev in events:
        net.bus_index(ev.bus)  # raises on unknown bus

    op = steady_state(net)
    B = net.susceptance_matrix
    gi, li = net.gen_idx, net.load_idx
    B_GG = B[np.ix_(gi, gi)]
    B_GL = B[np.ix_(gi, li)]
    B_LG = B[np.ix_(li, gi)]
    B_LL = B[np.ix_(li, li)]
    B_LL_inv = np.linalg.inv(B_LL) if li.size else np.zeros((0, 0))

    n_gen = gi.size
    M = np.array([g.inertia for g in net.generators])
    D = np.array([g.damping for g in net.generators])
    droop = np.array([g.droop_gain for g in net.generators])
    Tg = np.array([g.gov_time_const for g in net.generators])
    part = np.array([g.participation for g in net.generators])
    area_ids = {a: k for k, a in enumerate(net.areas)}
    gen_area = np.array([area_ids[g.area] for g in net.generators], dtype=int)
    n_area = len(net.areas)

    T_s = 1.0 / cfg.sample_rate
    n_sub = int(round(T_s / cfg.dt))
    n_samples = int(round(cfg.duration * cfg.sample_rate)) + 1
    rng = np.random.default_rng(cfg.seed)

    # dynamic state
    delta = op.angles[gi].copy()
    omega = np.zeros(n_gen)         # d(delta)/dt, rad/s
    dPm = np.zeros(n_gen)
    z = np.zeros(n_area)            # AGC integral per area, pu

    P_L = net.injections[li].copy()
    extra_gen = np.zeros(n_gen)     # load-change events on generator buses
    pending = list(events)

    Pm0 = op.gen_mech_power

    def derivs(delta, omega, dPm, P_L, extra_gen, z):
        if li.size:
            theta_L = B_LL_inv @ (P_L - B_LG @ delta)
            P_e = B_GG @ delta + B_GL @ theta_L
        else:
            P_e = B_GG @ delta
        d_delta = omega
        d_omega = (Pm0 + dPm + extra_gen - P_e - (D / OMEGA_S) * omega) / M
        d_dPm = (-dPm - droop * (omega / OMEGA_S) + part * z[gen_area]) / Tg
        return d_delta, d_omega, d_dPm

    def full_angles(delta, P_L):
        phi = np.zeros(net.n_buses)
        phi[gi] = delta
        if li.size:
            phi[li] = B_LL_inv @ (P_L - B_LG @ delta)
        return phi

    t_grid = np.arange(n_samples) * T_s
    angles_out = np.full((n_samples, net.n_buses), np.nan)
    freq_out = np.zeros((n_samples, net.n_buses))
    agc_out = np.zeros((n_samples, n_area))
    prev_meas = None

    def make_trace(n_ok, diverged_at=None):
        aux = {"agc": agc_out[:n_ok].copy()}
        if diverged_at is not None:
            aux["diverged_at"] = diverged_at
        return MeasurementTrace(
            t=t_grid[:n_ok],
            angles=angles_out[:n_ok].copy(),
            bus_ids=net.bus_ids,
            sample_rate=cfg.sample_rate,
            provenance="attacked" if measurement_tap is not None else "true",
            freq=freq_out[:n_ok].copy(),
            aux=aux,
        )

    t = 0.0
    for k in range(n_samples):
        # measurement at t_k
        phi = full_angles(delta, P_L)
        meas = phi + (rng.standard_normal(net.n_buses) * cfg.noise_std
                      if cfg.noise_std > 0 else 0.0)
        if measurement_tap is not None:
            meas = measurement_tap(k, t_grid[k], np.asarray(meas, dtype=float))
        angles_out[k] = meas
        if prev_meas is not None:
            src = meas if cfg.measurement_feedback else phi
            prev = prev_meas if cfg.measurement_feedback else prev_phi
            freq_out[k] = (src - prev) / (T_s * OMEGA_S)
            # AGC: per-area mean generator-bus frequency error, integrated
            for a in range(n_area):
                sel = gi[gen_area == a]
                z[a] += T_s * (-cfg.agc_gain * freq_out[k][sel].mean())
        prev_meas = meas
        prev_phi = phi
        agc_out[k] = z

        if k == n_samples - 1:
            break
        # integrate to the next sample
        for _ in range(n_sub):
            while pending and pending[0].time <= t + 1e-9:
                ev = pending.pop(0)
                j = net.bus_index(ev.bus)
                if j in li:
                    P_L[np.where(li == j)[0][0]] += ev.delta_p
                else:
                    extra_gen[np.where(gi == j)[0][0]] += ev.delta_p
            h = cfg.dt
            k1 = derivs(delta, omega, dPm, P_L, extra_gen, z)
            k2 = derivs(delta + h / 2 * k1[0], omega + h / 2 * k1[1], dPm + h / 2 * k1[2],
                        P_L, extra_gen, z)
            k3 = derivs(delta + h / 2 * k2[0], omega + h / 2 * k2[1], dPm + h / 2 * k2[2],
                        P_L, extra_gen, z)
            k4 = derivs(delta + h * k3[0], omega + h * k3[1], dPm + h * k3[2],
                        P_L, extra_gen, z)
            delta = delta + h / 6 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
            omega = omega + h / 6 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
            dPm = dPm + h / 6 * (k1[2] + 2 * k2[2] + 2 * k3[2] + k4[2])
            t += h
        if not np.all(np.isfinite(delta)) or np.abs(delta).max() > cfg.angle_bound:
            raise SimulationDiverged(
                f"state bound exceeded at t={t:.3f}s (|delta| max "
                f"{np.abs(delta).max():.3g} rad)", make_trace(k + 1, diverged_at=t)
            )

    return make_trace(n_samples)
