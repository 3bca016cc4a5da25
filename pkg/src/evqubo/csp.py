"""Mobile charging-asset placement: transport graph, mobility constraints, routes."""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import networkx as nx

from .instances import CSPInstance, InstanceError, TransportGraph
from .model import StructuredModel, merge_terms
from .v2g import (_Builder, _energy_part, _generation_part, _location_structure,
                  _unserved_part, var_name)

__all__ = [
    "shortest_travel_time",
    "travel_table",
    "build_csp_model",
    "add_mobility_constraints",
    "RoutePlan",
    "ValidationReport",
    "validate_route_plan",
    "plan_to_assignment",
]


@lru_cache(maxsize=256)
def _nx_graph(graph: TransportGraph):
    g = nx.DiGraph() if graph.directed else nx.Graph()
    g.add_nodes_from(graph.nodes)
    for e in graph.edges:
        g.add_edge(e.a, e.b, travel_time=e.travel_time, key=e.key)
    return g


@lru_cache(maxsize=256)
def travel_table(graph: TransportGraph) -> Dict[Tuple[str, str], int]:
    """All reachable (a, b) -> minimum total travel time in whole timesteps."""
    g = _nx_graph(graph)
    out = {}
    for a, lengths in nx.all_pairs_dijkstra_path_length(g, weight="travel_time"):
        for b, dist in lengths.items():
            out[(a, b)] = int(dist)
    return out


def shortest_travel_time(graph: TransportGraph, d1: str, d2: str, vehicle=None) -> Optional[int]:
    """Minimum travel time from ``d1`` to ``d2``; ``None`` when unreachable.

    All vehicles share the network, so ``vehicle`` does not change the result.
    """
    for d in (d1, d2):
        if d not in graph.nodes:
            raise KeyError(f"{d!r} is not a graph node")
    return travel_table(graph).get((d1, d2))


def _path_edges(graph: TransportGraph, a: str, b: str) -> List[str]:
    g = _nx_graph(graph)
    path = nx.dijkstra_path(g, a, b, weight="travel_time")
    return [g.edges[u, v]["key"] for u, v in zip(path, path[1:])]


def add_mobility_constraints(model: StructuredModel, instance: CSPInstance,
                             graph: Optional[TransportGraph] = None) -> StructuredModel:
    """Node EV capacity and pairwise travel-time exclusions on the z binaries.

    Besides the pairwise form between locations, a vehicle starting at node s
    cannot be connected at d before it could have driven there:
    z[i,t,d] <= 0 whenever t + 1 <= rt(s, d).
    """
    graph = graph or instance.graph
    inst = instance.v2g
    T = inst.T
    D = inst.locations
    b = _Builder(model)
    for d in D:
        cap = instance.cap(d)
        if cap is None:
            continue
        for t in range(T):
            terms = [(var_name("z", v.id, t, d), 1.0) for v in inst.fleet]
            if terms:
                b.con(terms, "<=", cap, "capacity", (d, t))
    rt = travel_table(graph)
    for v in inst.fleet:
        i = v.id
        start = instance.start(i)
        if start not in graph.nodes:
            raise InstanceError(f"initial_location[{i}]", f"{start!r} is not a graph node")
        for d in D:
            if d == start:
                continue
            r = rt.get((start, d))
            for t in range(T):
                if r is None or t + 1 <= r:
                    b.con([(var_name("z", i, t, d), 1.0)], "<=", 0.0, "travel_time",
                          (i, start, -1, d, t))
        for d1 in D:
            for d2 in D:
                if d1 == d2:
                    continue
                r = rt.get((d1, d2))
                for t in range(T):
                    top = T - 1 - t if r is None else min(r, T - 1 - t)
                    for tau in range(1, top + 1):
                        b.con([(var_name("z", i, t + tau, d2), 1.0), (var_name("z", i, t, d1), 1.0)],
                              "<=", 1.0, "travel_time", (i, d1, t, d2, t + tau))
    return b.freeze()


def _add_traversals(b: _Builder, instance: CSPInstance, graph: TransportGraph) -> List[Tuple[str, float]]:
    """Traversal binaries linked to location changes; returns transport cost terms.

    If vehicle i is connected at a at t1, next connected at b != a at t2, the
    edges of the shortest a->b path must be marked traversed at t2:
        trav[i,e,t2] - z[i,t1,a] - z[i,t2,b] + sum_{t1<s<t2, d} z[i,s,d] >= -1
    The start node acts as a connection at t1 = -1 that needs no binary.
    """
    inst = instance.v2g
    T = inst.T
    D = inst.locations
    rt = travel_table(graph)
    weight = {e.key: e.weight for e in graph.edges}
    cost_terms = []
    for v in inst.fleet:
        i = v.id
        c_tran = instance.transport_cost(i)
        start = instance.start(i)
        origins = [(start, -1)] + [(a, t) for t in range(T) for a in D]
        for a, t1 in origins:
            for b_ in D:
                if b_ == a:
                    continue
                r = rt.get((a, b_))
                if r is None:
                    continue
                edges = _path_edges(graph, a, b_)
                for t2 in range(t1 + r + 1, T):
                    between = [(var_name("z", i, s, d), 1.0) for s in range(max(t1 + 1, 0), t2) for d in D]
                    base = [(var_name("z", i, t2, b_), -1.0)] + between
                    rhs = 0.0
                    if t1 >= 0:
                        base.append((var_name("z", i, t1, a), -1.0))
                        rhs = -1.0
                    for ek in edges:
                        trav = b.var("trav", (i, ek, t2), "binary", owner=i, stage=t2)
                        b.con([(trav, 1.0)] + base, ">=", rhs, "traversal_link",
                              (i, a, t1, b_, t2, ek))
        for var in b.vars:
            if var.role == "trav" and var.owner == i:
                ek = var.name.split(",")[1]
                cost_terms.append((var.name, c_tran * weight[ek]))
    return cost_terms


def build_csp_model(instance: CSPInstance, graph: Optional[TransportGraph] = None) -> StructuredModel:
    """Restoration model: unserved critical load, generation, battery use, transport.

    Charging and discharging are per location and gated by z, so a vehicle in
    transit exchanges no power.
    """
    graph = graph or instance.graph
    inst = instance.v2g
    for v in inst.fleet:
        if instance.start(v.id) not in graph.nodes:
            raise InstanceError(f"initial_location[{v.id}]", "not a graph node")
    model = _location_structure(inst, charge_per_location=True)
    model = add_mobility_constraints(model, instance, graph)
    b = _Builder(model)
    transport = _add_traversals(b, instance, graph)
    model = b.freeze("csp")

    dt = inst.dt
    battery = []
    for v in inst.fleet:
        for var in model.variables:
            if var.owner == v.id and var.role in ("p_ch", "p_dis"):
                battery.append((var.name, v.battery_cost * dt))
    parts = [
        _energy_part(model, inst),
        _unserved_part(model, inst),
        _generation_part(model, inst),
        ("battery", merge_terms(battery), 0.0),
        ("transport", merge_terms(transport), 0.0),
    ]
    return model.with_objective(parts, {"energy": 0.0})


# -- route plans --------------------------------------------------------------

@dataclass(frozen=True)
class RoutePlan:
    """Per-vehicle presence records (t, location) and traversal records (t, edge key)."""

    presence: Tuple[Tuple[str, Tuple[Tuple[int, str], ...]], ...]
    traversals: Tuple[Tuple[str, Tuple[Tuple[int, str], ...]], ...] = ()

    @classmethod
    def from_dicts(cls, presence: Mapping[str, Sequence[Tuple[int, str]]],
                   traversals: Optional[Mapping[str, Sequence[Tuple[int, str]]]] = None) -> "RoutePlan":
        traversals = traversals or {}
        return cls(
            tuple((k, tuple(tuple(r) for r in sorted(v))) for k, v in sorted(presence.items())),
            tuple((k, tuple(tuple(r) for r in sorted(v))) for k, v in sorted(traversals.items())),
        )

    def presence_of(self, vid: str) -> Tuple[Tuple[int, str], ...]:
        return dict(self.presence).get(vid, ())

    def traversals_of(self, vid: str) -> Tuple[Tuple[int, str], ...]:
        return dict(self.traversals).get(vid, ())


@dataclass
class ValidationReport:
    capacity: List[Tuple[str, int, int, int]] = field(default_factory=list)
    travel_time: List[Tuple[str, str, int, str, int]] = field(default_factory=list)
    inconsistencies: List[Tuple[str, str, int, str]] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not (self.capacity or self.travel_time or self.inconsistencies)

    def labels(self) -> set:
        """Violations in the label format of the built model's constraints."""
        out = {var_name("capacity", d, t) for d, t, _, _ in self.capacity}
        out |= {var_name("travel_time", *rec) for rec in self.travel_time}
        return out


def _edge_key(graph: TransportGraph, key: str) -> Optional[str]:
    known = {e.key for e in graph.edges}
    if key in known:
        return key
    if not graph.directed and "|" in key:
        a, b = key.split("|", 1)
        if f"{b}|{a}" in known:
            return f"{b}|{a}"
    return None


def validate_route_plan(instance: CSPInstance, plan: RoutePlan,
                        graph: Optional[TransportGraph] = None) -> ValidationReport:
    """Check a plan against node capacities, travel times and traversal consistency.

    Coordinates follow the model labels: travel-time violations are
    ``(vehicle, d1, t1, d2, t2)`` with ``t1 = -1`` for the start node.
    """
    graph = graph or instance.graph
    inst = instance.v2g
    T = inst.T
    D = set(inst.locations)
    rt = travel_table(graph)
    rep = ValidationReport()

    at: Dict[Tuple[int, str], int] = {}
    for v in inst.fleet:
        i = v.id
        seen: Dict[int, List[str]] = {}
        for t, d in plan.presence_of(i):
            if not 0 <= t < T:
                rep.inconsistencies.append((i, "out_of_horizon", t, d))
                continue
            if d not in D:
                rep.inconsistencies.append((i, "unknown_location", t, d))
                continue
            if d in seen.get(t, []):
                continue
            seen.setdefault(t, []).append(d)
            at[(t, d)] = at.get((t, d), 0) + 1
        for t, ds in sorted(seen.items()):
            if len(ds) > 1:
                rep.inconsistencies.append((i, "multi_location", t, ",".join(sorted(ds))))

        start = instance.start(i)
        records = sorted((t, d) for t, ds in seen.items() for d in ds)
        for t, d in records:
            if d == start:
                continue
            r = rt.get((start, d))
            if r is None or t + 1 <= r:
                rep.travel_time.append((i, start, -1, d, t))
        for t1, d1 in records:
            for t2, d2 in records:
                if d1 == d2 or t2 <= t1:
                    continue
                r = rt.get((d1, d2))
                if r is None or t2 - t1 <= r:
                    rep.travel_time.append((i, d1, t1, d2, t2))

        # traversal consistency between consecutive connections
        trav: Dict[int, List[str]] = {}
        for t, key in plan.traversals_of(i):
            k = _edge_key(graph, key)
            if k is None or not 0 <= t < T:
                rep.inconsistencies.append((i, "unknown_traversal", t, key))
                continue
            trav.setdefault(t, []).append(k)
        used = set()
        chain = [(-1, start)] + [(t, ds[0]) for t, ds in sorted(seen.items()) if len(ds) == 1]
        for (t1, a), (t2, b_) in zip(chain, chain[1:]):
            window = [(t, k) for t in range(t1 + 1, t2 + 1) for k in trav.get(t, [])]
            used.update(window)
            if a == b_:
                continue
            g = nx.Graph()
            g.add_nodes_from([a, b_])
            for _, k in window:
                e = graph.edge(k)
                g.add_edge(e.a, e.b)
            if not nx.has_path(g, a, b_):
                rep.inconsistencies.append((i, "teleport", t2, f"{a}->{b_}"))
        for t, ks in sorted(trav.items()):
            for k in ks:
                if (t, k) not in used:
                    rep.inconsistencies.append((i, "stray_traversal", t, k))

    for (t, d), n in sorted(at.items()):
        cap = instance.cap(d)
        if cap is not None and n > cap:
            rep.capacity.append((d, t, n, cap))
    return rep


def plan_to_assignment(model: StructuredModel, instance: CSPInstance, plan: RoutePlan) -> Dict[str, float]:
    """Assignment with z/trav from the plan, zero power and SOC held at its start value."""
    values: Dict[str, float] = {}
    for var in model.variables:
        values[var.name] = var.lo if var.role == "soc" else 0.0
    socs = {v.id: v.soc_init for v in instance.v2g.fleet}
    for var in model.variables:
        if var.role == "soc" and var.owner in socs:
            values[var.name] = socs[var.owner]
    for vid, recs in plan.presence:
        for t, d in recs:
            name = var_name("z", vid, t, d)
            if name in values:
                values[name] = 1.0
    for vid, recs in plan.traversals:
        for t, key in recs:
            k = _edge_key(instance.graph, key) or key
            name = var_name("trav", vid, k, t)
            if name in values:
                values[name] = 1.0
    return values
