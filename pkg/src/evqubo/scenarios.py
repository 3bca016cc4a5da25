"""Weighted uncertainty scenarios and the stochastic V2G / CSP models built on them."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from .csp import build_csp_model
from .instances import CSPInstance, Edge, InstanceError, TransportGraph, V2GInstance
from .model import Constraint, ModelError, StructuredModel, Variable, merge_terms
from .v2g import build_weighted_model

__all__ = [
    "Scenario",
    "ScenarioSet",
    "PerturbationConfig",
    "sample_scenarios",
    "apply_scenario",
    "build_stochastic_v2g",
    "build_stochastic_csp",
    "scenario_slice",
]

PROB_TOL = 1e-9


@dataclass(frozen=True)
class Scenario:
    """One realisation.  Overrides are sparse: ``((t, location), value)`` for
    grids, ``(t, value)`` for demand, ``(edge key, steps or None)`` for travel
    times where ``None`` is an outage, and vehicle ids that are unavailable."""

    id: str
    probability: float
    p_crit: Tuple[Tuple[Tuple[int, str], float], ...] = ()
    p_gen: Tuple[Tuple[Tuple[int, str], float], ...] = ()
    p_gen_max: Tuple[Tuple[Tuple[int, str], float], ...] = ()
    p_demand: Tuple[Tuple[int, float], ...] = ()
    travel_time: Tuple[Tuple[str, Optional[int]], ...] = ()
    unavailable: Tuple[str, ...] = ()

    def __post_init__(self):
        if not self.probability >= 0:
            raise InstanceError(f"scenarios[{self.id}].probability", "must be >= 0")

    @property
    def is_empty(self) -> bool:
        return not (self.p_crit or self.p_gen or self.p_gen_max or self.p_demand
                    or self.travel_time or self.unavailable)


@dataclass(frozen=True)
class ScenarioSet:
    scenarios: Tuple[Scenario, ...]
    w1: float = 1.0
    w2: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "scenarios", tuple(self.scenarios))
        total = sum(s.probability for s in self.scenarios)
        if abs(total - 1.0) > PROB_TOL:
            raise InstanceError("scenarios", f"probabilities sum to {total!r}, expected 1")
        ids = [s.id for s in self.scenarios]
        if len(set(ids)) != len(ids):
            raise InstanceError("scenarios", "duplicate scenario ids")
        if not (0 <= self.w1 <= 1 and 0 <= self.w2 <= 1) or abs(self.w1 + self.w2 - 1) > PROB_TOL:
            raise InstanceError("scenarios.weights", "need w1, w2 in [0,1] with w1 + w2 = 1")


@dataclass(frozen=True)
class PerturbationConfig:
    """Log-normal (mean one) multiplicative noise and Bernoulli outages."""

    load_sigma: float = 0.0
    gen_sigma: float = 0.0
    demand_sigma: float = 0.0
    edge_outage_prob: float = 0.0
    vehicle_outage_prob: float = 0.0
    w1: Optional[float] = None
    w2: Optional[float] = None

    def __post_init__(self):
        for name in ("load_sigma", "gen_sigma", "demand_sigma"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        for name in ("edge_outage_prob", "vehicle_outage_prob"):
            if not 0 <= getattr(self, name) <= 1:
                raise ValueError(f"{name} must lie in [0, 1]")


def _v2g_of(base) -> V2GInstance:
    return base.v2g if isinstance(base, CSPInstance) else base


def _factor(rng: np.random.Generator, sigma: float) -> float:
    return math.exp(sigma * rng.standard_normal() - 0.5 * sigma * sigma)


def sample_scenarios(base: Union[V2GInstance, CSPInstance], config: PerturbationConfig,
                     seed: int, count: int) -> ScenarioSet:
    """``count`` equiprobable scenarios; a pure function of its arguments."""
    if count < 1:
        raise ValueError("count must be >= 1")
    inst = _v2g_of(base)
    rng = np.random.default_rng(seed)
    lim = inst.limits
    scen = []
    for k in range(count):
        crit, gen, genmax, dem, trav, unavail = [], [], [], [], [], []
        for t in range(inst.T):
            for j, d in enumerate(inst.locations):
                f = _factor(rng, config.load_sigma)
                if lim.p_crit[t][j] * f != lim.p_crit[t][j]:
                    crit.append(((t, d), lim.p_crit[t][j] * f))
                g = _factor(rng, config.gen_sigma)
                if lim.p_gen[t][j] * g != lim.p_gen[t][j]:
                    gen.append(((t, d), lim.p_gen[t][j] * g))
                if lim.p_gen_max[t][j] * g != lim.p_gen_max[t][j]:
                    genmax.append(((t, d), lim.p_gen_max[t][j] * g))
            f = _factor(rng, config.demand_sigma)
            if lim.p_demand[t] * f != lim.p_demand[t]:
                dem.append((t, lim.p_demand[t] * f))
        if isinstance(base, CSPInstance):
            for e in base.graph.edges:
                if rng.random() < config.edge_outage_prob:
                    trav.append((e.key, None))
        for v in inst.fleet:
            if rng.random() < config.vehicle_outage_prob:
                unavail.append(v.id)
        scen.append(Scenario(f"s{k}", 1.0 / count, tuple(crit), tuple(gen), tuple(genmax),
                             tuple(dem), tuple(trav), tuple(unavail)))
    w1, w2 = config.w1, config.w2
    if w1 is None or w2 is None:
        mode = inst.objective
        w1, w2 = (mode.w1, mode.w2) if mode.kind == "weighted" else (1.0, 0.0)
    # equiprobable weights can miss 1 by an ulp for awkward counts
    probs = [1.0 / count] * count
    probs[-1] = 1.0 - sum(probs[:-1])
    scen = [replace(s, probability=p) for s, p in zip(scen, probs)]
    return ScenarioSet(tuple(scen), w1, w2)


def _set_grid(grid, locations, updates):
    rows = [list(r) for r in grid]
    for (t, d), val in updates:
        if not 0 <= t < len(rows) or d not in locations:
            raise InstanceError("scenario override", f"no index ({t}, {d!r})")
        rows[t][locations.index(d)] = float(val)
    return tuple(tuple(r) for r in rows)


def _scenario_graph(graph: TransportGraph, scenario: Scenario) -> TransportGraph:
    changes = dict(scenario.travel_time)
    known = {e.key for e in graph.edges}
    for key in changes:
        if key not in known:
            raise InstanceError(f"scenarios[{scenario.id}].travel_time",
                                f"edge {key!r} does not exist")
    edges = []
    for e in graph.edges:
        if e.key not in changes:
            edges.append(e)
        elif changes[e.key] is not None:
            edges.append(replace(e, travel_time=int(math.ceil(changes[e.key]))))
    return replace(graph, edges=tuple(edges))


def apply_scenario(base, scenario: Scenario):
    """The deterministic instance seen under ``scenario``."""
    inst = _v2g_of(base)
    lim = inst.limits
    loc = list(inst.locations)
    dem = list(lim.p_demand)
    for t, val in scenario.p_demand:
        if not 0 <= t < inst.T:
            raise InstanceError("scenario override", f"no timestep {t}")
        dem[t] = float(val)
    gen_max = _set_grid(lim.p_gen_max, loc, scenario.p_gen_max)
    gen = _set_grid(lim.p_gen, loc, scenario.p_gen)
    # noisy generation stays within its (possibly perturbed) cap
    gen = tuple(tuple(min(g, m) for g, m in zip(gr, mr)) for gr, mr in zip(gen, gen_max))
    new_lim = replace(lim, p_crit=_set_grid(lim.p_crit, loc, scenario.p_crit), p_gen=gen,
                      p_gen_max=gen_max, p_demand=tuple(dem))
    ids = {v.id for v in inst.fleet}
    for vid in scenario.unavailable:
        if vid not in ids:
            raise InstanceError(f"scenarios[{scenario.id}].unavailable", f"unknown vehicle {vid!r}")
    new_inst = replace(inst, limits=new_lim)
    if isinstance(base, CSPInstance):
        return replace(base, v2g=new_inst, graph=_scenario_graph(base.graph, scenario))
    return new_inst


def _disable(model: StructuredModel, vehicles: Iterable[str]) -> StructuredModel:
    off = set(vehicles)
    if not off:
        return model
    vs = tuple(replace(v, hi=0.0) if v.owner in off and v.role in ("x", "y", "z") else v
               for v in model.variables)
    return replace(model, variables=vs)


def _suffix(model: StructuredModel, sid: str, shared: frozenset) -> StructuredModel:
    def rn(name: str) -> str:
        return name if name in shared else f"{name}@{sid}"

    variables = tuple(
        v if v.name in shared else replace(v, name=rn(v.name),
                                           owner=None if v.owner is None else f"{v.owner}@{sid}")
        for v in model.variables
    )
    constraints = tuple(Constraint(tuple((rn(n), c) for n, c in con.terms), con.sense, con.rhs,
                                   f"{con.label}@{sid}", con.cls) for con in model.constraints)
    parts = tuple((p, tuple((rn(n), c) for n, c in terms), c0) for p, terms, c0 in model.parts)
    return StructuredModel(variables, constraints,
                           tuple((rn(n), c) for n, c in model.objective), model.objective_constant,
                           tuple((rn(a), rn(b)) for a, b in model.bilinear_exclusions),
                           parts, model.weights, f"{model.name}@{sid}")


def _combine(copies: Sequence[Tuple[Scenario, StructuredModel]], name: str) -> StructuredModel:
    variables: List[Variable] = []
    seen = set()
    constraints: List[Constraint] = []
    excl: List[Tuple[str, str]] = []
    parts = []
    for sc, m in copies:
        for v in m.variables:
            if v.name not in seen:
                seen.add(v.name)
                variables.append(v)
        constraints.extend(m.constraints)
        for pair in m.bilinear_exclusions:
            if pair not in excl:
                excl.append(pair)
        parts.append((f"scenario:{sc.id}", m.objective, m.objective_constant))
    model = StructuredModel(tuple(variables), tuple(constraints), bilinear_exclusions=tuple(excl),
                            name=name)
    return model.with_objective(parts, {f"scenario:{sc.id}": sc.probability for sc, _ in copies})


def _shared_names(model: StructuredModel, first_stage: Sequence[str]) -> frozenset:
    roles = set(first_stage)
    return frozenset(v.name for v in model.variables if v.role in roles)


def build_stochastic_v2g(instance: V2GInstance, scenarios: ScenarioSet,
                         first_stage: Sequence[str] = ()) -> StructuredModel:
    """Expected weighted cost sum_w pi_w (w1 * energy_w + w2 * unserved_w).

    Every scenario gets its own copy of the location model; variables whose
    role is listed in ``first_stage`` (e.g. ``("z",)``) are shared.
    """
    if not scenarios.scenarios:
        raise ModelError("empty scenario set")
    copies = []
    for sc in scenarios.scenarios:
        inst = apply_scenario(instance, sc)
        m = _disable(build_weighted_model(inst, scenarios.w1, scenarios.w2), sc.unavailable)
        copies.append((sc, _suffix(m, sc.id, _shared_names(m, first_stage))))
    return _combine(copies, "v2g-stochastic")


def build_stochastic_csp(instance: CSPInstance, scenarios: ScenarioSet,
                         first_stage: Sequence[str] = ()) -> StructuredModel:
    """Expected restoration cost over scenarios, each with its own road network."""
    if not scenarios.scenarios:
        raise ModelError("empty scenario set")
    copies = []
    for sc in scenarios.scenarios:
        inst = apply_scenario(instance, sc)
        m = _disable(build_csp_model(inst), sc.unavailable)
        copies.append((sc, _suffix(m, sc.id, _shared_names(m, first_stage))))
    return _combine(copies, "csp-stochastic")


def scenario_slice(values: Dict[str, float], sid: str, shared: Iterable[str] = ()) -> Dict[str, float]:
    """Per-scenario view of a stochastic assignment, with suffixes removed."""
    tail = f"@{sid}"
    out = {n[: -len(tail)]: v for n, v in values.items() if n.endswith(tail)}
    for n in shared:
        out[n] = values[n]
    return out
