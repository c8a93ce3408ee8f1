"""Bus network model and the sectioned text-file loader.

The network file has three sections::

    [buses]       id  kind(generator|load)  injection_pu
    [lines]       from  to  susceptance_pu
    [generators]  bus  inertia_s2  damping_pu  droop_gain_pu  gov_time_const_s
                  participation  area

Lines starting with ``#`` are comments; a ``schema = ...`` line may precede
the first section.
"""
from __future__ import annotations

from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

SCHEMA_TAG = "fdibench-network-v1"


class NetworkError(ValueError):
    """Malformed network file or violated network invariant."""


@dataclass(frozen=True)
class Bus:
    id: int
    kind: str           # "generator" | "load"
    injection: float    # nominal real-power injection, pu (loads negative)


@dataclass(frozen=True)
class Line:
    from_bus: int
    to_bus: int
    susceptance: float  # pu, > 0


@dataclass(frozen=True)
class Generator:
    bus: int
    inertia: float         # M, s^2 (= 2H / omega_s)
    damping: float         # D, pu torque per pu speed
    droop_gain: float      # 1/R, pu
    gov_time_const: float  # Tg, s
    participation: float   # AGC participation factor within its area
    area: int


class BusNetwork:
    """Immutable network: buses, lines, generators, and derived matrices."""

    def __init__(self, buses: list[Bus], lines: list[Line], generators: list[Generator]):
        self.buses = tuple(sorted(buses, key=lambda b: b.id))
        self.lines = tuple(lines)
        self.generators = tuple(sorted(generators, key=lambda g: g.bus))
        self._validate()

        self.bus_ids = tuple(b.id for b in self.buses)
        self._index = {b: i for i, b in enumerate(self.bus_ids)}
        self.n_buses = len(self.buses)
        self.gen_buses = tuple(g.bus for g in self.generators)
        self.gen_idx = np.array([self._index[g.bus] for g in self.generators], dtype=int)
        self.load_idx = np.array(
            [i for i in range(self.n_buses) if i not in set(self.gen_idx)], dtype=int
        )
        self.injections = np.array([b.injection for b in self.buses])
        self.areas = tuple(sorted({g.area for g in self.generators}))

        # susceptance Laplacian: B[i,i] = sum b, B[i,j] = -b_ij
        B = np.zeros((self.n_buses, self.n_buses))
        for ln in self.lines:
            i, j = self._index[ln.from_bus], self._index[ln.to_bus]
            B[i, i] += ln.susceptance
            B[j, j] += ln.susceptance
            B[i, j] -= ln.susceptance
            B[j, i] -= ln.susceptance
        self.susceptance_matrix = B

    def bus_index(self, bus_id: int) -> int:
        try:
            return self._index[bus_id]
        except KeyError:
            raise NetworkError(f"unknown bus id {bus_id}") from None

    def _validate(self) -> None:
        ids = [b.id for b in self.buses]
        if len(set(ids)) != len(ids):
            raise NetworkError("duplicate bus ids in [buses]")
        idset = set(ids)
        if not self.buses:
            raise NetworkError("no buses defined")
        for ln in self.lines:
            for end, name in ((ln.from_bus, "from"), (ln.to_bus, "to")):
                if end not in idset:
                    raise NetworkError(f"line {ln.from_bus}-{ln.to_bus}: {name} references unknown bus {end}")
            if ln.susceptance <= 0:
                raise NetworkError(f"line {ln.from_bus}-{ln.to_bus}: susceptance must be > 0")
        kinds = {b.id: b.kind for b in self.buses}
        gbuses = [g.bus for g in self.generators]
        if len(set(gbuses)) != len(gbuses):
            raise NetworkError("multiple generators on one bus")
        for g in self.generators:
            if g.bus not in idset:
                raise NetworkError(f"generator references unknown bus {g.bus}")
            if kinds[g.bus] != "generator":
                raise NetworkError(f"generator at bus {g.bus}: bus kind is not 'generator'")
            for val, name in ((g.inertia, "inertia"), (g.damping, "damping"),
                              (g.droop_gain, "droop_gain"), (g.gov_time_const, "gov_time_const")):
                if val <= 0:
                    raise NetworkError(f"generator at bus {g.bus}: {name} must be > 0")
            if not 0.0 <= g.participation <= 1.0:
                raise NetworkError(f"generator at bus {g.bus}: participation outside [0, 1]")
        declared_gen_buses = {b.id for b in self.buses if b.kind == "generator"}
        if declared_gen_buses != set(gbuses):
            missing = sorted(declared_gen_buses - set(gbuses))
            raise NetworkError(f"generator buses without generator records: {missing}")
        # participation sums to 1 per area
        for area in sorted({g.area for g in self.generators}):
            s = sum(g.participation for g in self.generators if g.area == area)
            if abs(s - 1.0) > 1e-9:
                raise NetworkError(f"area {area}: participation factors sum to {s}, expected 1")
        # connectivity
        adj: dict[int, set[int]] = {b.id: set() for b in self.buses}
        for ln in self.lines:
            adj[ln.from_bus].add(ln.to_bus)
            adj[ln.to_bus].add(ln.from_bus)
        seen = {self.buses[0].id}
        stack = [self.buses[0].id]
        while stack:
            for nb in adj[stack.pop()]:
                if nb not in seen:
                    seen.add(nb)
                    stack.append(nb)
        if len(seen) != len(ids):
            missing = sorted(idset - seen)
            raise NetworkError(f"graph is disconnected; unreachable buses: {missing}")

    def area_gen_indices(self) -> dict[int, np.ndarray]:
        """Generator array positions (0..n_gen-1) grouped by AGC area."""
        out: dict[int, list[int]] = {a: [] for a in self.areas}
        for k, g in enumerate(self.generators):
            out[g.area].append(k)
        return {a: np.array(v, dtype=int) for a, v in out.items()}


def _parse_fields(parts: list[str], types: list, where: str) -> list:
    if len(parts) != len(types):
        raise NetworkError(f"{where}: expected {len(types)} fields, got {len(parts)}")
    out = []
    for p, t in zip(parts, types):
        try:
            out.append(t(p))
        except ValueError:
            raise NetworkError(f"{where}: cannot parse {p!r}") from None
    return out


def parse_network(text: str, source: str = "<string>") -> BusNetwork:
    buses: list[Bus] = []
    lines: list[Line] = []
    gens: list[Generator] = []
    section = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        s = raw.strip()
        if not s or s.startswith("#"):
            continue
        where = f"{source}:{lineno}"
        if s.startswith("schema"):
            tag = s.split("=", 1)[1].strip() if "=" in s else ""
            if tag != SCHEMA_TAG:
                raise NetworkError(f"{where}: unsupported schema {tag!r}")
            continue
        if s.startswith("["):
            section = s.strip("[]").lower()
            if section not in ("buses", "lines", "generators"):
                raise NetworkError(f"{where}: unknown section [{section}]")
            continue
        if section is None:
            raise NetworkError(f"{where}: data before any section header")
        parts = s.split()
        if section == "buses":
            bid, kind, inj = _parse_fields(parts, [int, str, float], where)
            if kind not in ("generator", "load"):
                raise NetworkError(f"{where}: bus kind must be 'generator' or 'load'")
            buses.append(Bus(bid, kind, inj))
        elif section == "lines":
            f, t, b = _parse_fields(parts, [int, int, float], where)
            lines.append(Line(f, t, b))
        else:
            vals = _parse_fields(parts, [int, float, float, float, float, float, int], where)
            gens.append(Generator(*vals))
    if not buses:
        raise NetworkError(f"{source}: no [buses] section found")
    return BusNetwork(buses, lines, gens)


def load_network(path: str | Path) -> BusNetwork:
    path = Path(path)
    return parse_network(path.read_text(), source=str(path))


def bundled_network_path() -> Path:
    """Path of the shipped 68-bus network file."""
    return Path(resources.files("fdibench.data") / "ieee68.net")


def load_bundled_network() -> BusNetwork:
    return load_network(bundled_network_path())
