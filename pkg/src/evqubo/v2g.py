"""Vehicle-to-grid scheduling models: cost dispatch, resilience limits, contingency."""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import List, Optional, Sequence, Tuple

from .instances import InstanceError, TimeGrid, V2GInstance, VehicleSpec
from .model import Constraint, ModelError, StructuredModel, Variable, merge_terms

__all__ = [
    "build_v2g_model",
    "add_resilience_constraints",
    "build_contingency_model",
    "build_weighted_model",
    "simulate_soc",
    "SocTrace",
    "var_name",
]


def var_name(role: str, *index) -> str:
    return f"{role}[{','.join(str(i) for i in index)}]"


class _Builder:
    """Accumulates variables/constraints before freezing into a model."""

    def __init__(self, base: Optional[StructuredModel] = None):
        self.base = base
        self.vars: List[Variable] = list(base.variables) if base else []
        self.cons: List[Constraint] = list(base.constraints) if base else []
        self.excl: List[Tuple[str, str]] = list(base.bilinear_exclusions) if base else []
        self.names = {v.name for v in self.vars}

    def var(self, role, index, kind="continuous", lo=0.0, hi=1.0, owner=None, stage=0) -> str:
        name = var_name(role, *index)
        if name not in self.names:
            self.vars.append(Variable(name, kind, float(lo), float(hi), role, owner, stage))
            self.names.add(name)
        return name

    def con(self, terms, sense, rhs, cls, index) -> None:
        label = var_name(cls, *index)
        self.cons.append(Constraint(merge_terms(terms), sense, float(rhs), label, cls))

    def freeze(self, name: Optional[str] = None) -> StructuredModel:
        base = self.base or StructuredModel()
        return StructuredModel(tuple(self.vars), tuple(self.cons), base.objective,
                               base.objective_constant, tuple(self.excl), base.parts,
                               base.weights, name or base.name)


def _check_series(instance: V2GInstance) -> None:
    T = instance.T
    if len(instance.prices.r_ch) != T or len(instance.prices.r_dis) != T:
        raise InstanceError("prices", f"series length must equal horizon_steps={T}")
    instance.limits.validate(T, len(instance.locations))


def _vehicle_core(b: _Builder, instance: V2GInstance, v: VehicleSpec, *,
                  per_location: bool, charge_per_location: bool) -> None:
    """Variables, gates and SOC recursion of one vehicle."""
    T, dt = instance.T, instance.dt
    owner = v.id
    i = owner
    b.var("soc", (i, 0), lo=v.soc_init, hi=v.soc_init, owner=owner, stage=-1)
    for t in range(T):
        x = b.var("x", (i, t), "binary", owner=owner, stage=t)
        y = b.var("y", (i, t), "binary", owner=owner, stage=t)
        if per_location:
            zs = [b.var("z", (i, t, d), "binary", owner=owner, stage=t) for d in instance.locations]
        if charge_per_location:
            chs = [b.var("p_ch", (i, t, d), hi=v.p_ch_max, owner=owner, stage=t)
                   for d in instance.locations]
        else:
            chs = [b.var("p_ch", (i, t), hi=v.p_ch_max, owner=owner, stage=t)]
        if per_location:
            dss = [b.var("p_dis", (i, t, d), hi=v.p_dis_max, owner=owner, stage=t)
                   for d in instance.locations]
        else:
            dss = [b.var("p_dis", (i, t), hi=v.p_dis_max, owner=owner, stage=t)]
        nxt = b.var("soc", (i, t + 1), lo=v.soc_min, hi=v.soc_max, owner=owner, stage=t)

        for k, p in enumerate(chs):
            idx = (i, t, instance.locations[k]) if charge_per_location else (i, t)
            b.con([(p, 1.0), (x, -v.p_ch_max)], "<=", 0.0, "charge_gate", idx)
            if charge_per_location:
                b.con([(p, 1.0), (zs[k], -v.p_ch_max)], "<=", 0.0, "location_gate",
                      ("ch", i, t, instance.locations[k]))
        for k, p in enumerate(dss):
            idx = (i, t, instance.locations[k]) if per_location else (i, t)
            b.con([(p, 1.0), (y, -v.p_dis_max)], "<=", 0.0, "discharge_gate", idx)
            if per_location:
                b.con([(p, 1.0), (zs[k], -v.p_dis_max)], "<=", 0.0, "location_gate",
                      ("dis", i, t, instance.locations[k]))
        prev = var_name("soc", i, t)
        terms = [(nxt, 1.0), (prev, -1.0)]
        terms += [(p, -v.eta_ch * dt) for p in chs]
        terms += [(p, dt / v.eta_dis) for p in dss]
        b.con(terms, "==", 0.0, "soc_dynamics", (i, t))
        b.excl.append((x, y))


def _discharge_names(model: StructuredModel, vid: str, t: int, locations) -> List[str]:
    agg = var_name("p_dis", vid, t)
    if model.has(agg):
        return [agg]
    return [var_name("p_dis", vid, t, d) for d in locations if model.has(var_name("p_dis", vid, t, d))]


def _charge_names(model: StructuredModel, vid: str, t: int, locations) -> List[str]:
    agg = var_name("p_ch", vid, t)
    if model.has(agg):
        return [agg]
    return [var_name("p_ch", vid, t, d) for d in locations if model.has(var_name("p_ch", vid, t, d))]


def _energy_part(model: StructuredModel, instance: V2GInstance):
    dt = instance.dt
    terms = []
    for v in instance.fleet:
        for t in range(instance.T):
            terms += [(n, instance.prices.r_ch[t] * dt)
                      for n in _charge_names(model, v.id, t, instance.locations)]
            terms += [(n, -instance.prices.r_dis[t] * dt)
                      for n in _discharge_names(model, v.id, t, instance.locations)]
    return ("energy", merge_terms(terms), 0.0)


def build_v2g_model(instance: V2GInstance) -> StructuredModel:
    """Deterministic cost-minimising dispatch: gated powers, SOC recursion, x*y = 0.

    Objective: sum_t sum_i (R_ch[t] * P_ch - R_dis[t] * P_dis) * dt.
    """
    if not instance.fleet:
        raise InstanceError("fleet", "build_v2g_model needs at least one vehicle")
    _check_series(instance)
    b = _Builder()
    for v in instance.fleet:
        _vehicle_core(b, instance, v, per_location=False, charge_per_location=False)
    model = b.freeze("v2g")
    return model.with_objective([_energy_part(model, instance)])


def _gen_terms(model: StructuredModel, instance: V2GInstance, t: int):
    """(variable terms, fixed generation) for total local generation at t."""
    terms = []
    fixed = 0.0
    for k, d in enumerate(instance.locations):
        name = var_name("p_gen", t, d)
        if model.has(name):
            terms.append((name, 1.0))
        else:
            fixed += instance.limits.p_gen[t][k]
    return terms, fixed


def add_resilience_constraints(model: StructuredModel, instance: V2GInstance) -> StructuredModel:
    """Load balance with spinning reserve, single-location connection, line limits.

    Reactive discharge is tied to active discharge by each vehicle's fixed
    ``q_dis_ratio``, so the reactive limit is expressed over ``p_dis``.
    """
    _check_series(instance)
    T = instance.T
    lim = instance.limits
    b = _Builder(model)
    for v in instance.fleet:
        owner = v.id
        for t in range(T):
            zs = [b.var("z", (owner, t, d), "binary", owner=owner, stage=t) for d in instance.locations]
            b.con([(z, 1.0) for z in zs], "<=", 1.0, "single_location", (owner, t))
    staged = b.freeze(model.name)
    for t in range(T):
        dis = []
        reactive = []
        for v in instance.fleet:
            names = _discharge_names(staged, v.id, t, instance.locations)
            dis += [(n, 1.0) for n in names]
            reactive += [(n, v.q_dis_ratio) for n in names]
        gen_terms, gen_fixed = _gen_terms(staged, instance, t)
        b.con(dis + gen_terms, ">=", lim.p_demand[t] + lim.sr_req[t] - gen_fixed,
              "load_balance", (t,))
        if lim.p_line_max is not None and dis:
            b.con(dis, "<=", lim.p_line_max, "line_p", (t,))
        reactive = [(n, c) for n, c in reactive if c != 0.0]
        if lim.q_line_max is not None and reactive:
            b.con(reactive, "<=", lim.q_line_max, "line_q", (t,))
    return b.freeze()


def _location_structure(instance: V2GInstance, *, charge_per_location: bool) -> StructuredModel:
    """Per-location discharge gated by z, plus all resilience constraints."""
    _check_series(instance)
    lim = instance.limits
    b = _Builder()
    for v in instance.fleet:
        _vehicle_core(b, instance, v, per_location=True,
                      charge_per_location=charge_per_location)
    if lim.gen_dispatchable:
        for t in range(instance.T):
            for k, d in enumerate(instance.locations):
                name = var_name("p_gen", t, d)
                b.vars.append(Variable(name, "continuous", 0.0, lim.p_gen_max[t][k], "p_gen", None, t))
                b.names.add(name)
    if instance.fleet:
        for t in range(instance.T):
            for k, d in enumerate(instance.locations):
                terms = [(var_name("p_dis", v.id, t, d), 1.0) for v in instance.fleet]
                b.con(terms, "<=", lim.p_crit[t][k], "unserved_nonneg", (t, d))
    model = b.freeze("v2g-location")
    return add_resilience_constraints(model, instance)


def _unserved_part(model: StructuredModel, instance: V2GInstance):
    dt = instance.dt
    lim = instance.limits
    const = 0.0
    terms = []
    for t in range(instance.T):
        for k, d in enumerate(instance.locations):
            c = lim.c_crit[t][k] * dt
            const += lim.p_crit[t][k] * c
            terms += [(var_name("p_dis", v.id, t, d), -c) for v in instance.fleet]
    return ("unserved", merge_terms(terms), const)


def _generation_part(model: StructuredModel, instance: V2GInstance):
    dt = instance.dt
    lim = instance.limits
    const = 0.0
    terms = []
    for t in range(instance.T):
        for k, d in enumerate(instance.locations):
            c = lim.c_gen[t][k] * dt
            name = var_name("p_gen", t, d)
            if model.has(name):
                terms.append((name, c))
            else:
                const += lim.p_gen[t][k] * c
    return ("generation", merge_terms(terms), const)


def build_contingency_model(instance: V2GInstance) -> StructuredModel:
    """Interruption-cost model: unserved critical load plus local generation cost.

    Discharge is split per location (gated by z) and capped by the critical
    load there, so unserved load never goes negative.
    """
    model = _location_structure(instance, charge_per_location=False)
    parts = [_energy_part(model, instance), _unserved_part(model, instance),
             _generation_part(model, instance)]
    model = model.with_objective(parts, {"energy": 0.0, "unserved": 1.0, "generation": 1.0})
    return replace(model, name="v2g-contingency")


def build_weighted_model(instance: V2GInstance, w1: Optional[float] = None,
                         w2: Optional[float] = None) -> StructuredModel:
    """w1 * energy cost + w2 * unserved critical-load cost on the location model."""
    mode = instance.objective
    if w1 is None or w2 is None:
        if mode.kind != "weighted":
            raise ModelError("weighted model needs weights or objective mode 'weighted'")
        w1, w2 = mode.w1, mode.w2
    model = _location_structure(instance, charge_per_location=False)
    parts = [_energy_part(model, instance), _unserved_part(model, instance),
             _generation_part(model, instance)]
    model = model.with_objective(parts, {"energy": w1, "unserved": w2, "generation": 0.0})
    return replace(model, name="v2g-weighted")


@dataclass(frozen=True)
class SocTrace:
    values: Tuple[float, ...]
    violations: Tuple[Tuple[int, float], ...]

    @property
    def ok(self) -> bool:
        return not self.violations


def simulate_soc(vehicle: VehicleSpec, grid: TimeGrid,
                 schedule: Sequence[Tuple[float, float]], tol: float = 1e-9) -> SocTrace:
    """Roll the SOC recursion forward; bound violations are flagged, not raised."""
    if len(schedule) != grid.horizon_steps:
        raise ValueError(f"schedule has {len(schedule)} steps, horizon is {grid.horizon_steps}")
    dt = grid.step_hours
    soc = vehicle.soc_init
    values = [soc]
    bad = []
    for t, (p_ch, p_dis) in enumerate(schedule):
        soc = soc + (vehicle.eta_ch * p_ch - p_dis / vehicle.eta_dis) * dt
        values.append(soc)
        if soc < vehicle.soc_min - tol or soc > vehicle.soc_max + tol:
            bad.append((t + 1, soc))
    return SocTrace(tuple(values), tuple(bad))
