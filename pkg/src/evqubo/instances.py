"""Problem data for the V2G dispatch and mobile charging-asset placement models.

All containers are frozen dataclasses holding tuples, so instances compare by
value and can be shared freely between threads.  Units: kW, kWh, hours, $.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence, Tuple

FloatGrid = Tuple[Tuple[float, ...], ...]


class InstanceError(ValueError):
    """An instance field violates its invariant."""

    def __init__(self, field_name: str, message: str):
        self.field = field_name
        super().__init__(f"{field_name}: {message}")


def _floats(values) -> Tuple[float, ...]:
    return tuple(float(v) for v in values)


def _grid(rows) -> FloatGrid:
    return tuple(_floats(r) for r in rows)


def _check_grid(name: str, grid: FloatGrid, rows: int, cols: int) -> None:
    if len(grid) != rows or any(len(r) != cols for r in grid):
        raise InstanceError(name, f"expected shape ({rows}, {cols})")
    if any(v < 0 or math.isnan(v) for r in grid for v in r):
        raise InstanceError(name, "entries must be >= 0")


@dataclass(frozen=True)
class TimeGrid:
    horizon_steps: int
    step_hours: float = 1.0

    def __post_init__(self):
        if int(self.horizon_steps) != self.horizon_steps or self.horizon_steps < 1:
            raise InstanceError("horizon_steps", "must be a positive integer")
        if not self.step_hours > 0:
            raise InstanceError("step_hours", "must be > 0")


@dataclass(frozen=True)
class VehicleSpec:
    id: str
    p_ch_max: float
    p_dis_max: float
    eta_ch: float
    eta_dis: float
    soc_min: float
    soc_max: float
    soc_init: float
    q_dis_ratio: float = 0.0
    battery_cost: float = 0.0

    def __post_init__(self):
        if not self.p_ch_max > 0:
            raise InstanceError(f"fleet[{self.id}].p_ch_max", "must be > 0")
        if self.p_dis_max < 0:
            raise InstanceError(f"fleet[{self.id}].p_dis_max", "must be >= 0")
        for name in ("eta_ch", "eta_dis"):
            eta = getattr(self, name)
            if not 0 < eta <= 1:
                raise InstanceError(f"fleet[{self.id}].{name}", "must lie in (0, 1]")
        if not self.soc_min > 0:
            raise InstanceError(f"fleet[{self.id}].soc_min", "must be > 0")
        if self.soc_min > self.soc_max:
            raise InstanceError(f"fleet[{self.id}].soc_min", "soc_min > soc_max")
        if not self.soc_min <= self.soc_init <= self.soc_max:
            raise InstanceError(f"fleet[{self.id}].soc_init", "outside [soc_min, soc_max]")
        if self.q_dis_ratio < 0:
            raise InstanceError(f"fleet[{self.id}].q_dis_ratio", "must be >= 0")
        if self.battery_cost < 0:
            raise InstanceError(f"fleet[{self.id}].battery_cost", "must be >= 0")


@dataclass(frozen=True)
class PriceSeries:
    r_ch: Tuple[float, ...]
    r_dis: Tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "r_ch", _floats(self.r_ch))
        object.__setattr__(self, "r_dis", _floats(self.r_dis))
        for name in ("r_ch", "r_dis"):
            if any(v < 0 for v in getattr(self, name)):
                raise InstanceError(f"prices.{name}", "entries must be >= 0")


@dataclass(frozen=True)
class GridLimits:
    """Per-timestep (and per-location where indexed [t][d]) grid data.

    ``p_line_max``/``q_line_max`` of ``None`` mean no line limit.  When
    ``gen_dispatchable`` is set, local generation becomes a decision variable
    in ``[0, p_gen_max]`` instead of the fixed ``p_gen`` profile.
    """

    p_gen: FloatGrid
    p_gen_max: FloatGrid
    p_demand: Tuple[float, ...]
    sr_req: Tuple[float, ...]
    p_crit: FloatGrid
    c_crit: FloatGrid
    c_gen: FloatGrid
    p_line_max: Optional[float] = None
    q_line_max: Optional[float] = None
    gen_dispatchable: bool = False

    def __post_init__(self):
        for name in ("p_gen", "p_gen_max", "p_crit", "c_crit", "c_gen"):
            object.__setattr__(self, name, _grid(getattr(self, name)))
        object.__setattr__(self, "p_demand", _floats(self.p_demand))
        object.__setattr__(self, "sr_req", _floats(self.sr_req))
        for name in ("p_line_max", "q_line_max"):
            v = getattr(self, name)
            if v is not None and v < 0:
                raise InstanceError(f"limits.{name}", "must be >= 0")

    @classmethod
    def zeros(cls, horizon: int, n_locations: int, **kw) -> "GridLimits":
        z = tuple((0.0,) * n_locations for _ in range(horizon))
        base = dict(p_gen=z, p_gen_max=z, p_demand=(0.0,) * horizon,
                    sr_req=(0.0,) * horizon, p_crit=z, c_crit=z, c_gen=z)
        base.update(kw)
        return cls(**base)

    def validate(self, horizon: int, n_locations: int) -> None:
        for name in ("p_gen", "p_gen_max", "p_crit", "c_crit", "c_gen"):
            _check_grid(f"limits.{name}", getattr(self, name), horizon, n_locations)
        for name in ("p_demand", "sr_req"):
            seq = getattr(self, name)
            if len(seq) != horizon:
                raise InstanceError(f"limits.{name}", f"expected length {horizon}")
            if any(v < 0 for v in seq):
                raise InstanceError(f"limits.{name}", "entries must be >= 0")
        for t in range(horizon):
            for d in range(n_locations):
                if self.p_gen[t][d] > self.p_gen_max[t][d]:
                    raise InstanceError("limits.p_gen", f"exceeds p_gen_max at t={t}, d={d}")


@dataclass(frozen=True)
class ObjectiveMode:
    kind: str = "cost"
    w1: float = 1.0
    w2: float = 0.0

    def __post_init__(self):
        if self.kind not in ("cost", "contingency", "weighted"):
            raise InstanceError("objective.mode", f"unknown mode {self.kind!r}")
        if self.kind == "weighted":
            if not (0 <= self.w1 <= 1 and 0 <= self.w2 <= 1) or abs(self.w1 + self.w2 - 1) > 1e-9:
                raise InstanceError("objective.weights", "need w1, w2 in [0,1] with w1 + w2 = 1")

    @classmethod
    def weighted(cls, w1: float, w2: float) -> "ObjectiveMode":
        return cls("weighted", w1, w2)


@dataclass(frozen=True)
class V2GInstance:
    grid: TimeGrid
    fleet: Tuple[VehicleSpec, ...]
    prices: PriceSeries
    limits: GridLimits
    locations: Tuple[str, ...] = ("site",)
    objective: ObjectiveMode = field(default_factory=ObjectiveMode)

    def __post_init__(self):
        object.__setattr__(self, "fleet", tuple(self.fleet))
        object.__setattr__(self, "locations", tuple(str(d) for d in self.locations))
        T = self.grid.horizon_steps
        ids = [v.id for v in self.fleet]
        if len(set(ids)) != len(ids):
            raise InstanceError("fleet", "duplicate vehicle ids")
        if not self.locations or len(set(self.locations)) != len(self.locations):
            raise InstanceError("locations", "need distinct, nonempty location ids")
        if len(self.prices.r_ch) != T or len(self.prices.r_dis) != T:
            raise InstanceError("prices", f"series length must equal horizon_steps={T}")
        self.limits.validate(T, len(self.locations))

    @property
    def T(self) -> int:
        return self.grid.horizon_steps

    @property
    def dt(self) -> float:
        return self.grid.step_hours

    def vehicle(self, vid: str) -> VehicleSpec:
        for v in self.fleet:
            if v.id == vid:
                return v
        raise KeyError(vid)

    def loc_index(self, d: str) -> int:
        return self.locations.index(d)


@dataclass(frozen=True)
class Edge:
    a: str
    b: str
    travel_time: int
    weight: float = 1.0

    def __post_init__(self):
        if self.travel_time < 1 or int(self.travel_time) != self.travel_time:
            raise InstanceError(f"graph.edges[{self.a}|{self.b}].travel_time",
                                "must be an integer >= 1")
        if self.weight < 0:
            raise InstanceError(f"graph.edges[{self.a}|{self.b}].weight", "must be >= 0")

    @property
    def key(self) -> str:
        return f"{self.a}|{self.b}"


@dataclass(frozen=True)
class TransportGraph:
    nodes: Tuple[str, ...]
    edges: Tuple[Edge, ...]
    directed: bool = False

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(str(n) for n in self.nodes))
        object.__setattr__(self, "edges", tuple(self.edges))
        known = set(self.nodes)
        seen = set()
        for e in self.edges:
            if e.a not in known or e.b not in known:
                raise InstanceError(f"graph.edges[{e.key}]", "endpoint is not a graph node")
            if e.a == e.b:
                raise InstanceError(f"graph.edges[{e.key}]", "self loops are not allowed")
            k = (e.a, e.b) if self.directed else tuple(sorted((e.a, e.b)))
            if k in seen:
                raise InstanceError(f"graph.edges[{e.key}]", "duplicate edge")
            seen.add(k)

    def edge(self, key: str) -> Edge:
        for e in self.edges:
            if e.key == key:
                return e
        raise KeyError(key)


@dataclass(frozen=True)
class CSPInstance:
    """V2G data plus the transport network.

    ``ev_cap`` maps location -> max connectable EVs; omitted locations are
    unbounded.  ``c_tran`` maps vehicle id -> $ per edge traversal.
    ``initial_location`` maps vehicle id -> graph node the vehicle starts at
    (just before t = 0).
    """

    v2g: V2GInstance
    graph: TransportGraph
    ev_cap: Tuple[Tuple[str, int], ...] = ()
    c_tran: Tuple[Tuple[str, float], ...] = ()
    initial_location: Tuple[Tuple[str, str], ...] = ()

    def __post_init__(self):
        for name in ("ev_cap", "c_tran", "initial_location"):
            v = getattr(self, name)
            if isinstance(v, dict):
                v = v.items()
            object.__setattr__(self, name, tuple(sorted((str(k), x) for k, x in v)))
        nodes = set(self.graph.nodes)
        for d in self.v2g.locations:
            if d not in nodes:
                raise InstanceError("locations", f"location {d!r} is not a graph node")
        for d, cap in self.ev_cap:
            if d not in self.v2g.locations:
                raise InstanceError(f"ev_cap[{d}]", "unknown location")
            if cap < 0 or int(cap) != cap:
                raise InstanceError(f"ev_cap[{d}]", "must be a nonnegative integer")
        ids = {v.id for v in self.v2g.fleet}
        init = dict(self.initial_location)
        for vid in ids:
            if vid not in init:
                raise InstanceError(f"initial_location[{vid}]", "missing")
        for vid, node in init.items():
            if vid not in ids:
                raise InstanceError(f"initial_location[{vid}]", "unknown vehicle")
            if node not in nodes:
                raise InstanceError(f"initial_location[{vid}]", f"{node!r} is not a graph node")
        for vid, c in self.c_tran:
            if vid not in ids:
                raise InstanceError(f"c_tran[{vid}]", "unknown vehicle")
            if c < 0:
                raise InstanceError(f"c_tran[{vid}]", "must be >= 0")

    def cap(self, d: str) -> Optional[int]:
        return dict(self.ev_cap).get(d)

    def transport_cost(self, vid: str) -> float:
        return float(dict(self.c_tran).get(vid, 0.0))

    def start(self, vid: str) -> str:
        return dict(self.initial_location)[vid]


def with_fleet(instance, fleet: Sequence[VehicleSpec]):
    """Copy of a V2G or CSP instance with the fleet replaced."""
    if isinstance(instance, CSPInstance):
        keep = {v.id for v in fleet}
        return replace(
            instance,
            v2g=replace(instance.v2g, fleet=tuple(fleet)),
            c_tran=tuple(kv for kv in instance.c_tran if kv[0] in keep),
            initial_location=tuple(kv for kv in instance.initial_location if kv[0] in keep),
        )
    return replace(instance, fleet=tuple(fleet))
