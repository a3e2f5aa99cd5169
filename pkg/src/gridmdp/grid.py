"""Static network model, energization, radiality and reconfiguration actions."""

from __future__ import annotations

import hashlib
import json
import threading
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np

from gridmdp import kernels

MAX_DISPATCHABLE = 20

# An action is the set of dispatchable, in-service lines left open.
SwitchConfig = frozenset


class NetworkError(ValueError):
    """Malformed or invariant-violating network data."""


class ActionSpaceError(ValueError):
    """Too many dispatchable lines to enumerate."""


@dataclass(frozen=True)
class Bus:
    id: int
    p_load: float
    q_load: float
    is_substation: bool = False
    v_min: float = 0.9
    v_max: float = 1.05


@dataclass(frozen=True)
class Line:
    id: int
    from_bus: int
    to_bus: int
    r: float
    x: float
    s_max: float
    dispatchable: bool = False
    initially_closed: bool = True
    switch_cost: float = 10.0

    @property
    def label(self) -> str:
        return f"{self.from_bus}-{self.to_bus}"


@dataclass(frozen=True)
class Topology:
    closed_lines: frozenset
    energized_buses: frozenset
    islanded_buses: frozenset


@dataclass(frozen=True, eq=False)
class Network:
    buses: tuple
    lines: tuple
    base_mva: float = 10.0
    base_kv: float = 12.66
    name: str = ""
    _cache: dict = field(default_factory=dict, repr=False, compare=False)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "buses", tuple(sorted(self.buses, key=lambda b: b.id)))
        object.__setattr__(self, "lines", tuple(sorted(self.lines, key=lambda l: l.id)))
        _validate(self)
        bus_index = {b.id: i for i, b in enumerate(self.buses)}
        object.__setattr__(self, "bus_index", bus_index)
        object.__setattr__(self, "line_index", {l.id: i for i, l in enumerate(self.lines)})
        object.__setattr__(self, "_lf", np.array([bus_index[l.from_bus] for l in self.lines], dtype=np.int64))
        object.__setattr__(self, "_lt", np.array([bus_index[l.to_bus] for l in self.lines], dtype=np.int64))
        object.__setattr__(self, "_is_sub", np.array([b.is_substation for b in self.buses], dtype=np.uint8))

    # -- lookups -------------------------------------------------------------
    def line(self, line_id: int) -> Line:
        try:
            return self.lines[self.line_index[line_id]]
        except KeyError:
            raise NetworkError(f"unknown line id {line_id}") from None

    def bus(self, bus_id: int) -> Bus:
        return self.buses[self.bus_index[bus_id]]

    @property
    def line_ids(self) -> frozenset:
        return frozenset(self.line_index)

    @property
    def substations(self) -> frozenset:
        return frozenset(b.id for b in self.buses if b.is_substation)

    @property
    def dispatchable(self) -> tuple:
        return tuple(l.id for l in self.lines if l.dispatchable)

    @property
    def initial_open(self) -> frozenset:
        """Dispatchable lines that start open."""
        return frozenset(l.id for l in self.lines if l.dispatchable and not l.initially_closed)

    @property
    def fixed_open(self) -> frozenset:
        """Non-dispatchable lines that are normally open and never switched."""
        return frozenset(l.id for l in self.lines if not l.dispatchable and not l.initially_closed)

    def line_by_label(self, label: str) -> Line:
        a, b = (int(v) for v in label.split("-"))
        for l in self.lines:
            if {l.from_bus, l.to_bus} == {a, b}:
                return l
        raise NetworkError(f"no line between buses {a} and {b}")

    def closed_lines(self, open_lines: Iterable[int], unavailable: Iterable[int] = ()) -> frozenset:
        """Closed set implied by an open dispatchable set; unavailable lines are excluded."""
        excluded = set(open_lines) | set(unavailable) | self.fixed_open
        return frozenset(l.id for l in self.lines if l.id not in excluded)

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(network_to_dict(self), sort_keys=True).encode()).hexdigest()[:16]


def _validate(net: Network) -> None:
    bus_ids = [b.id for b in net.buses]
    line_ids = [l.id for l in net.lines]
    if not net.buses:
        raise NetworkError("network has no buses")
    if len(set(bus_ids)) != len(bus_ids):
        raise NetworkError(f"duplicate bus id in {sorted(bus_ids)}")
    if len(set(line_ids)) != len(line_ids):
        dup = sorted({i for i in line_ids if line_ids.count(i) > 1})
        raise NetworkError(f"duplicate line id {dup[0]}")
    if bus_ids != list(range(bus_ids[0], bus_ids[0] + len(bus_ids))):
        raise NetworkError("bus ids must be dense")
    if line_ids and line_ids != list(range(line_ids[0], line_ids[0] + len(line_ids))):
        raise NetworkError("line ids must be dense")
    if not any(b.is_substation for b in net.buses):
        raise NetworkError("network needs at least one substation")
    for b in net.buses:
        if b.p_load < 0:
            raise NetworkError(f"bus {b.id}: negative p_load")
        if abs(b.q_load) > 10 * b.p_load + 1e-12 and b.p_load > 0:
            raise NetworkError(f"bus {b.id}: |q_load| exceeds 10 * p_load")
        if not (0 < b.v_min < b.v_max <= 1.2):
            raise NetworkError(f"bus {b.id}: voltage bounds must satisfy 0 < v_min < v_max <= 1.2")
        if b.is_substation and not (b.v_min <= 1.0 <= b.v_max):
            raise NetworkError(f"bus {b.id}: substation bounds must contain 1.0")
    known = set(bus_ids)
    for l in net.lines:
        if l.from_bus not in known or l.to_bus not in known:
            raise NetworkError(f"line {l.id}: unknown terminal bus")
        if l.from_bus == l.to_bus:
            raise NetworkError(f"line {l.id}: from_bus equals to_bus")
        if l.r < 0 or l.x < 0 or l.r + l.x <= 0:
            raise NetworkError(f"line {l.id}: need r >= 0, x >= 0, r + x > 0")
        if l.s_max <= 0:
            raise NetworkError(f"line {l.id}: s_max must be positive")
        if l.switch_cost < 0:
            raise NetworkError(f"line {l.id}: negative switch_cost")
    # connectivity with every line closed
    adj = {b: [] for b in bus_ids}
    for l in net.lines:
        adj[l.from_bus].append(l.to_bus)
        adj[l.to_bus].append(l.from_bus)
    seen = {bus_ids[0]}
    todo = [bus_ids[0]]
    while todo:
        k = todo.pop()
        for nb in adj[k]:
            if nb not in seen:
                seen.add(nb)
                todo.append(nb)
    if len(seen) != len(bus_ids):
        raise NetworkError("network is not connected with all lines closed")
    if len(net.dispatchable) > MAX_DISPATCHABLE:
        raise NetworkError(f"at most {MAX_DISPATCHABLE} dispatchable lines are supported")


# -- I/O -----------------------------------------------------------------------

_BUS_FIELDS = {"id": int, "p_mw": float, "q_mvar": float}
_LINE_FIELDS = {"id": int, "from": int, "to": int, "r_pu": float, "x_pu": float, "smax_mva": float}


def network_from_dict(data: dict, name: str = "") -> Network:
    try:
        buses = []
        for i, raw in enumerate(data["buses"]):
            for key, typ in _BUS_FIELDS.items():
                if key not in raw:
                    raise NetworkError(f"buses[{i}]: missing field '{key}'")
            buses.append(
                Bus(
                    id=int(raw["id"]),
                    p_load=float(raw["p_mw"]),
                    q_load=float(raw["q_mvar"]),
                    is_substation=bool(raw.get("substation", False)),
                    v_min=float(raw.get("vmin", 0.9)),
                    v_max=float(raw.get("vmax", 1.05)),
                )
            )
        lines = []
        for i, raw in enumerate(data["lines"]):
            for key in _LINE_FIELDS:
                if key not in raw:
                    raise NetworkError(f"lines[{i}]: missing field '{key}'")
            lines.append(
                Line(
                    id=int(raw["id"]),
                    from_bus=int(raw["from"]),
                    to_bus=int(raw["to"]),
                    r=float(raw["r_pu"]),
                    x=float(raw["x_pu"]),
                    s_max=float(raw["smax_mva"]),
                    dispatchable=bool(raw.get("dispatchable", False)),
                    initially_closed=bool(raw.get("closed", True)),
                    switch_cost=float(raw.get("switch_cost", 10.0)),
                )
            )
    except KeyError as exc:
        raise NetworkError(f"missing top-level field {exc}") from None
    except (TypeError, ValueError) as exc:
        if isinstance(exc, NetworkError):
            raise
        raise NetworkError(f"bad field value: {exc}") from None
    return Network(
        buses=tuple(buses),
        lines=tuple(lines),
        base_mva=float(data.get("base_mva", 10.0)),
        base_kv=float(data.get("base_kv", 12.66)),
        name=name or str(data.get("name", "")),
    )


def network_to_dict(net: Network) -> dict:
    return {
        "name": net.name,
        "base_mva": net.base_mva,
        "base_kv": net.base_kv,
        "buses": [
            {"id": b.id, "p_mw": b.p_load, "q_mvar": b.q_load, "substation": b.is_substation,
             "vmin": b.v_min, "vmax": b.v_max}
            for b in net.buses
        ],
        "lines": [
            {"id": l.id, "from": l.from_bus, "to": l.to_bus, "r_pu": l.r, "x_pu": l.x,
             "smax_mva": l.s_max, "dispatchable": l.dispatchable, "closed": l.initially_closed,
             "switch_cost": l.switch_cost}
            for l in net.lines
        ],
    }


def load_network(path) -> Network:
    """Read and validate a network JSON file.

    A bare name such as ``ieee33`` resolves to the bundled data file.
    """
    path = resolve_data_path(path)
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise NetworkError(f"{path}: line {exc.lineno}: {exc.msg}") from None
    return network_from_dict(data, name=Path(path).stem)


def resolve_data_path(path) -> Path:
    p = Path(path)
    if p.exists():
        return p
    bundled = Path(__file__).parent / "data" / (p.name if p.suffix else p.name + ".json")
    if bundled.exists():
        return bundled
    raise FileNotFoundError(f"{path}: no such file")


# -- topology ------------------------------------------------------------------

def _check_ids(net: Network, ids: Iterable[int]) -> None:
    for i in ids:
        if i not in net.line_index:
            raise NetworkError(f"unknown line id {i}")


def energization(net: Network, closed: Iterable[int], failed: Iterable[int] = ()) -> Topology:
    """Buses reachable from a substation through closed, non-failed lines."""
    closed, failed = set(closed), set(failed)
    _check_ids(net, closed | failed)
    eff = frozenset(closed - failed)
    adj = {b.id: [] for b in net.buses}
    for lid in eff:
        l = net.line(lid)
        adj[l.from_bus].append(l.to_bus)
        adj[l.to_bus].append(l.from_bus)
    seen = set(net.substations)
    todo = deque(sorted(seen))
    while todo:
        k = todo.popleft()
        for nb in adj[k]:
            if nb not in seen:
                seen.add(nb)
                todo.append(nb)
    every = frozenset(adj)
    return Topology(closed_lines=eff, energized_buses=frozenset(seen), islanded_buses=every - seen)


def is_radial(net: Network, closed: Iterable[int], failed: Iterable[int] = ()) -> bool:
    """True when every substation-fed component is a tree with one substation.

    Components without a substation are islanded and unconstrained.
    """
    closed, failed = set(closed), set(failed)
    _check_ids(net, closed | failed)
    eff = closed - failed
    parent = {b.id: b.id for b in net.buses}

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    edges_in = {}
    for lid in eff:
        l = net.line(lid)
        ra, rb = find(l.from_bus), find(l.to_bus)
        if ra != rb:
            parent[ra] = rb
    for lid in eff:
        r = find(net.line(lid).from_bus)
        edges_in[r] = edges_in.get(r, 0) + 1
    verts, subs = {}, {}
    for b in net.buses:
        r = find(b.id)
        verts[r] = verts.get(r, 0) + 1
        subs[r] = subs.get(r, 0) + int(b.is_substation)
    for r, n_sub in subs.items():
        if n_sub == 0:
            continue
        if n_sub > 1 or edges_in.get(r, 0) != verts[r] - 1:
            return False
    return True


def action_sort_key(config) -> tuple:
    return tuple(sorted(config))


def feasible_configs(net: Network, unavailable: Iterable[int] = ()) -> tuple:
    """All radial open-sets over available dispatchable lines, canonically sorted.

    Unavailable lines (failed or isolated) are forced open; non-dispatchable
    lines keep their normal status. Results are cached per unavailable set.
    """
    unavailable = frozenset(unavailable)
    cached = net._cache.get(("actions", unavailable))
    if cached is not None:
        return cached
    _check_ids(net, unavailable)
    cands = [lid for lid in net.dispatchable if lid not in unavailable]
    if len(cands) > MAX_DISPATCHABLE:
        raise ActionSpaceError(f"{len(cands)} dispatchable lines exceed the cap of {MAX_DISPATCHABLE}")
    base = [l for l in net.lines
            if not l.dispatchable and l.initially_closed and l.id not in unavailable]
    bi = net.bus_index
    masks = kernels.radial_masks(
        len(net.buses),
        net._is_sub,
        np.array([bi[l.from_bus] for l in base], dtype=np.int64),
        np.array([bi[l.to_bus] for l in base], dtype=np.int64),
        np.array([bi[net.line(c).from_bus] for c in cands], dtype=np.int64),
        np.array([bi[net.line(c).to_bus] for c in cands], dtype=np.int64),
    )
    configs = []
    for mask in masks.tolist():
        configs.append(frozenset(c for i, c in enumerate(cands) if not (mask >> i) & 1))
    configs.sort(key=action_sort_key)
    result = tuple(configs)
    with net._lock:
        net._cache[("actions", unavailable)] = result
    return result


def enumerate_actions(net: Network, state) -> tuple:
    """Feasible reconfigurations for a Markov state (anything with ``unavailable``)."""
    return feasible_configs(net, state.unavailable)


def tie_rank(net: Network, unavailable: Iterable[int], actions) -> np.ndarray:
    """Preference among equal-cost actions: position of each action when
    ordered by the number of dispatchable lines whose status differs from
    the normal configuration, then canonically. Lower is preferred.
    """
    unavailable = frozenset(unavailable)
    normal = net.initial_open - unavailable
    keys = [(len(a ^ normal), action_sort_key(a)) for a in actions]
    order = sorted(range(len(keys)), key=keys.__getitem__)
    rank = np.empty(len(keys), dtype=np.intp)
    rank[order] = np.arange(len(keys))
    return rank


def closed_masks(net: Network, unavailable: Iterable[int], actions) -> np.ndarray:
    """``(n_action, n_line)`` 0/1 matrix of the closed in-service lines of each open set."""
    unavailable = frozenset(unavailable)
    base = np.array([l.initially_closed and not l.dispatchable and l.id not in unavailable
                     for l in net.lines], dtype=np.uint8)
    masks = np.repeat(base[None, :], len(actions), axis=0)
    for lid in net.dispatchable:
        if lid in unavailable:
            continue
        masks[:, net.line_index[lid]] = [lid not in a for a in actions]
    return masks
