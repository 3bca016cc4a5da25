"""JSON instance files.

Layout (all units kW, kWh, hours, $)::

    {"schema_version": 1, "kind": "v2g" | "csp",
     "grid": {"horizon_steps": T, "step_hours": dt},
     "locations": [...],
     "fleet": [{"id", "p_ch_max", "p_dis_max", "eta_ch", "eta_dis",
                "soc_min", "soc_max", "soc_init", "q_dis_ratio"?, "battery_cost"?}],
     "prices": {"r_ch": [T], "r_dis": [T]},
     "limits": {"p_gen", "p_gen_max", "p_crit", "c_crit", "c_gen": [T][D],
                "p_demand", "sr_req": [T], "p_line_max"?, "q_line_max"?,
                "gen_dispatchable"?},
     "objective": {"kind", "w1", "w2"}?,
     # csp only
     "graph": {"nodes": [...], "edges": [{"a", "b", "travel_time", "weight"?}],
               "directed"?},
     "ev_cap": {loc: n}?, "c_tran": {vid: $}?, "initial_location": {vid: node},
     # optional
     "scenarios": {"w1", "w2", "first_stage": [...],
                   "items": [{"id", "probability", "p_crit": [[t, loc, v]], ...}]}}
"""
from __future__ import annotations

import json
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union

from ..instances import (CSPInstance, Edge, GridLimits, InstanceError, ObjectiveMode, PriceSeries,
                         TimeGrid, TransportGraph, V2GInstance, VehicleSpec)
from ..scenarios import Scenario, ScenarioSet

__all__ = [
    "SCHEMA_VERSION",
    "SchemaError",
    "InstanceBundle",
    "load_instance",
    "load_bundle",
    "save_instance",
    "instance_to_dict",
    "instance_from_dict",
    "loads_instance",
    "dumps_instance",
]

SCHEMA_VERSION = 1
Instance = Union[V2GInstance, CSPInstance]


class SchemaError(ValueError):
    """Malformed file: bad JSON, wrong version, or a missing/mistyped field."""

    def __init__(self, message: str, field: Optional[str] = None, line: Optional[int] = None):
        self.field = field
        self.line = line
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field {field!r}")
        super().__init__(f"{', '.join(where)}: {message}" if where else message)


class InstanceBundle:
    """An instance plus its optional scenario set and first-stage roles."""

    def __init__(self, instance: Instance, scenarios: Optional[ScenarioSet] = None,
                 first_stage: Tuple[str, ...] = ()):
        self.instance = instance
        self.scenarios = scenarios
        self.first_stage = tuple(first_stage)


def _need(obj: Dict[str, Any], key: str, path: str):
    if not isinstance(obj, dict):
        raise SchemaError("expected an object", field=path)
    if key not in obj:
        raise SchemaError("missing required field", field=f"{path}.{key}" if path else key)
    return obj[key]


def _typed(value, kind, path):
    if kind is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise SchemaError(f"expected a number, got {value!r}", field=path)
        return float(value)
    if kind is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise SchemaError(f"expected an integer, got {value!r}", field=path)
        return value
    if kind is str:
        if not isinstance(value, str):
            raise SchemaError(f"expected a string, got {value!r}", field=path)
        return value
    if kind is list:
        if not isinstance(value, list):
            raise SchemaError("expected an array", field=path)
        return value
    raise TypeError(kind)


def _series(value, path):
    return tuple(_typed(x, float, f"{path}[{i}]") for i, x in enumerate(_typed(value, list, path)))


def _grid(value, path):
    return tuple(_series(row, f"{path}[{t}]") for t, row in enumerate(_typed(value, list, path)))


def _vehicle(d, path) -> VehicleSpec:
    kw = {"id": _typed(_need(d, "id", path), str, f"{path}.id")}
    for name in ("p_ch_max", "p_dis_max", "eta_ch", "eta_dis", "soc_min", "soc_max", "soc_init"):
        kw[name] = _typed(_need(d, name, path), float, f"{path}.{name}")
    for name in ("q_dis_ratio", "battery_cost"):
        if name in d:
            kw[name] = _typed(d[name], float, f"{path}.{name}")
    return VehicleSpec(**kw)


def _v2g_from(d) -> V2GInstance:
    g = _need(d, "grid", "")
    grid = TimeGrid(_typed(_need(g, "horizon_steps", "grid"), int, "grid.horizon_steps"),
                    _typed(g.get("step_hours", 1.0), float, "grid.step_hours"))
    locations = tuple(_typed(x, str, f"locations[{i}]")
                      for i, x in enumerate(_typed(d.get("locations", ["site"]), list, "locations")))
    fleet = tuple(_vehicle(v, f"fleet[{i}]") for i, v in enumerate(_typed(_need(d, "fleet", ""), list, "fleet")))
    p = _need(d, "prices", "")
    prices = PriceSeries(_series(_need(p, "r_ch", "prices"), "prices.r_ch"),
                         _series(_need(p, "r_dis", "prices"), "prices.r_dis"))
    lm = _need(d, "limits", "")
    kw = {name: _grid(_need(lm, name, "limits"), f"limits.{name}")
          for name in ("p_gen", "p_gen_max", "p_crit", "c_crit", "c_gen")}
    for name in ("p_demand", "sr_req"):
        kw[name] = _series(_need(lm, name, "limits"), f"limits.{name}")
    for name in ("p_line_max", "q_line_max"):
        if lm.get(name) is not None:
            kw[name] = _typed(lm[name], float, f"limits.{name}")
    if "gen_dispatchable" in lm:
        if not isinstance(lm["gen_dispatchable"], bool):
            raise SchemaError("expected true or false", field="limits.gen_dispatchable")
        kw["gen_dispatchable"] = lm["gen_dispatchable"]
    limits = GridLimits(**kw)
    obj = d.get("objective", {})
    mode = ObjectiveMode(_typed(obj.get("kind", "cost"), str, "objective.kind"),
                         _typed(obj.get("w1", 1.0), float, "objective.w1"),
                         _typed(obj.get("w2", 0.0), float, "objective.w2"))
    return V2GInstance(grid, fleet, prices, limits, locations, mode)


def _csp_from(d, v2g: V2GInstance) -> CSPInstance:
    g = _need(d, "graph", "")
    nodes = tuple(_typed(x, str, f"graph.nodes[{i}]") for i, x in enumerate(_typed(_need(g, "nodes", "graph"), list, "graph.nodes")))
    edges = []
    for i, e in enumerate(_typed(_need(g, "edges", "graph"), list, "graph.edges")):
        path = f"graph.edges[{i}]"
        edges.append(Edge(_typed(_need(e, "a", path), str, f"{path}.a"),
                          _typed(_need(e, "b", path), str, f"{path}.b"),
                          _typed(_need(e, "travel_time", path), int, f"{path}.travel_time"),
                          _typed(e.get("weight", 1.0), float, f"{path}.weight")))
    graph = TransportGraph(nodes, tuple(edges), bool(g.get("directed", False)))
    ev_cap = {k: _typed(v, int, f"ev_cap.{k}") for k, v in d.get("ev_cap", {}).items()}
    c_tran = {k: _typed(v, float, f"c_tran.{k}") for k, v in d.get("c_tran", {}).items()}
    init = {k: _typed(v, str, f"initial_location.{k}")
            for k, v in _need(d, "initial_location", "").items()}
    return CSPInstance(v2g, graph, ev_cap, c_tran, init)


def _pairs_tl(rows, path):
    out = []
    for i, r in enumerate(_typed(rows, list, path)):
        if not isinstance(r, list) or len(r) != 3:
            raise SchemaError("expected [t, location, value]", field=f"{path}[{i}]")
        out.append(((_typed(r[0], int, f"{path}[{i}][0]"), _typed(r[1], str, f"{path}[{i}][1]")),
                    _typed(r[2], float, f"{path}[{i}][2]")))
    return tuple(out)


def _scenarios_from(d) -> Tuple[ScenarioSet, Tuple[str, ...]]:
    items = []
    for i, s in enumerate(_typed(_need(d, "items", "scenarios"), list, "scenarios.items")):
        path = f"scenarios.items[{i}]"
        demand = tuple((_typed(t, int, path), _typed(v, float, path)) for t, v in s.get("p_demand", []))
        travel = tuple((_typed(k, str, path), None if v is None else _typed(v, int, path))
                       for k, v in s.get("travel_time", []))
        items.append(Scenario(
            id=_typed(_need(s, "id", path), str, f"{path}.id"),
            probability=_typed(_need(s, "probability", path), float, f"{path}.probability"),
            p_crit=_pairs_tl(s.get("p_crit", []), f"{path}.p_crit"),
            p_gen=_pairs_tl(s.get("p_gen", []), f"{path}.p_gen"),
            p_gen_max=_pairs_tl(s.get("p_gen_max", []), f"{path}.p_gen_max"),
            p_demand=demand,
            travel_time=travel,
            unavailable=tuple(_typed(v, str, path) for v in s.get("unavailable", [])),
        ))
    sset = ScenarioSet(tuple(items), _typed(d.get("w1", 1.0), float, "scenarios.w1"),
                       _typed(d.get("w2", 0.0), float, "scenarios.w2"))
    first = tuple(_typed(r, str, "scenarios.first_stage") for r in d.get("first_stage", []))
    return sset, first


def bundle_from_dict(d: Dict[str, Any]) -> InstanceBundle:
    if not isinstance(d, dict):
        raise SchemaError("top level must be an object")
    version = _need(d, "schema_version", "")
    if version != SCHEMA_VERSION:
        raise SchemaError(f"unsupported schema_version {version!r} (expected {SCHEMA_VERSION})",
                          field="schema_version")
    kind = _need(d, "kind", "")
    if kind not in ("v2g", "csp"):
        raise SchemaError(f"kind must be 'v2g' or 'csp', got {kind!r}", field="kind")
    inst: Instance = _v2g_from(d)
    if kind == "csp":
        inst = _csp_from(d, inst)
    sset, first = (None, ())
    if d.get("scenarios") is not None:
        sset, first = _scenarios_from(d["scenarios"])
    return InstanceBundle(inst, sset, first)


def instance_from_dict(d: Dict[str, Any]) -> Instance:
    return bundle_from_dict(d).instance


def _vehicle_dict(v: VehicleSpec) -> Dict[str, Any]:
    return {"id": v.id, "p_ch_max": v.p_ch_max, "p_dis_max": v.p_dis_max, "eta_ch": v.eta_ch,
            "eta_dis": v.eta_dis, "soc_min": v.soc_min, "soc_max": v.soc_max, "soc_init": v.soc_init,
            "q_dis_ratio": v.q_dis_ratio, "battery_cost": v.battery_cost}


def instance_to_dict(instance: Instance, scenarios: Optional[ScenarioSet] = None,
                     first_stage: Tuple[str, ...] = ()) -> Dict[str, Any]:
    v2g = instance.v2g if isinstance(instance, CSPInstance) else instance
    lm = v2g.limits
    out: Dict[str, Any] = {
        "schema_version": SCHEMA_VERSION,
        "kind": "csp" if isinstance(instance, CSPInstance) else "v2g",
        "grid": {"horizon_steps": v2g.grid.horizon_steps, "step_hours": v2g.grid.step_hours},
        "locations": list(v2g.locations),
        "fleet": [_vehicle_dict(v) for v in v2g.fleet],
        "prices": {"r_ch": list(v2g.prices.r_ch), "r_dis": list(v2g.prices.r_dis)},
        "limits": {
            **{name: [list(r) for r in getattr(lm, name)]
               for name in ("p_gen", "p_gen_max", "p_crit", "c_crit", "c_gen")},
            "p_demand": list(lm.p_demand),
            "sr_req": list(lm.sr_req),
            "p_line_max": lm.p_line_max,
            "q_line_max": lm.q_line_max,
            "gen_dispatchable": lm.gen_dispatchable,
        },
        "objective": {"kind": v2g.objective.kind, "w1": v2g.objective.w1, "w2": v2g.objective.w2},
    }
    if isinstance(instance, CSPInstance):
        out["graph"] = {
            "nodes": list(instance.graph.nodes),
            "edges": [{"a": e.a, "b": e.b, "travel_time": e.travel_time, "weight": e.weight}
                      for e in instance.graph.edges],
            "directed": instance.graph.directed,
        }
        out["ev_cap"] = dict(instance.ev_cap)
        out["c_tran"] = dict(instance.c_tran)
        out["initial_location"] = dict(instance.initial_location)
    if scenarios is not None:
        out["scenarios"] = {
            "w1": scenarios.w1,
            "w2": scenarios.w2,
            "first_stage": list(first_stage),
            "items": [
                {"id": s.id, "probability": s.probability,
                 "p_crit": [[t, d, v] for (t, d), v in s.p_crit],
                 "p_gen": [[t, d, v] for (t, d), v in s.p_gen],
                 "p_gen_max": [[t, d, v] for (t, d), v in s.p_gen_max],
                 "p_demand": [[t, v] for t, v in s.p_demand],
                 "travel_time": [[k, v] for k, v in s.travel_time],
                 "unavailable": list(s.unavailable)}
                for s in scenarios.scenarios
            ],
        }
    return out


def dumps_instance(instance: Instance, scenarios: Optional[ScenarioSet] = None,
                   first_stage: Tuple[str, ...] = ()) -> str:
    return json.dumps(instance_to_dict(instance, scenarios, first_stage), indent=2) + "\n"


def loads_instance(text: str) -> InstanceBundle:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(exc.msg, line=exc.lineno) from exc
    return bundle_from_dict(data)


def load_bundle(path: Union[str, Path]) -> InstanceBundle:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise SchemaError(f"cannot read {p}: {exc.strerror}") from exc
    return loads_instance(text)


def load_instance(path: Union[str, Path]) -> Instance:
    """Parse and validate an instance file.

    Raises :class:`SchemaError` for syntax and field problems and
    :class:`~evqubo.instances.InstanceError` for violated invariants.
    """
    return load_bundle(path).instance


def save_instance(instance: Instance, path: Union[str, Path], scenarios: Optional[ScenarioSet] = None,
                  first_stage: Tuple[str, ...] = ()) -> None:
    Path(path).write_text(dumps_instance(instance, scenarios, first_stage))
