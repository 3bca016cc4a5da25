"""Hybrid split: anneal placement/routing binaries, recover dispatch classically.

The outer loop anneals ``f(b) = E_bin(b) + inner(b)`` where ``E_bin`` is the
QUBO of the binary-only part of the model (binary objective terms, constraints
among binaries, exclusions between them) and ``inner(b)`` is the best
completion of everything else for the decoded binaries.

Gate binaries, i.e. owned binaries whose constraints only involve continuous
variables (the charge/discharge switches), belong to the inner step together
with the continuous variables; exclusions between two gates of the same owner
and stage are enforced exactly there.

The inner step runs, for each owner (vehicle) in id order, a forward dynamic
program over its stages: the state is the owner's previous-stage values, so
the SOC recursion is carried exactly.  Constraints that mix several owners'
inner variables (load balance, line limits) are handled by coordinate
passes: while one owner is optimized the others stay fixed and the coupling
constraint is charged as a large penalty per unit of violation.  Inner
variables without an owner are improved by a coordinate scan over levels.
"""
from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass, field, replace
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from ..model import FEAS_TOL, StructuredModel, evaluate, merge_terms
from ..qubo.encoding import default_encodings
from ..qubo.problem import qubo_energy
from ..qubo.transpile import Assignment, PenaltyConfig, decode, dominance_bound, transpile

__all__ = ["HybridConfig", "HybridResult", "NonSeparableError", "hybrid_solve"]

_INFEASIBLE = 1e12


class NonSeparableError(ValueError):
    def __init__(self, label: str, reason: str):
        self.label = label
        super().__init__(f"constraint {label} is not separable: {reason}")


@dataclass(frozen=True)
class HybridConfig:
    seed: int = 0
    sweeps: int = 60
    restarts: int = 2
    max_rounds: int = 5
    max_passes: int = 20
    K: int = 2
    K_soc: int = 3
    J: int = 2
    penalty: PenaltyConfig = PenaltyConfig()
    encodings: Optional[Mapping[str, object]] = None


@dataclass(frozen=True)
class HybridResult:
    assignment: Assignment
    objective: float
    feasible: bool
    rounds: int
    evaluations: int
    wall_time: float = field(default=0.0, compare=False)


def _gate_binaries(model: StructuredModel) -> set:
    """Owned binaries whose every constraint partner is continuous."""
    kind = {v.name: v.kind for v in model.variables}
    partners: Dict[str, set] = {}
    for con in model.constraints:
        for n in con.names:
            partners.setdefault(n, set()).update(m for m in con.names if m != n)
    gates = {v.name for v in model.variables
             if v.kind == "binary" and v.owner is not None and partners.get(v.name)
             and all(kind[m] == "continuous" for m in partners[v.name])}
    # an exclusion keeps both ends on the same side of the split
    changed = True
    while changed:
        changed = False
        for a, b in model.bilinear_exclusions:
            if (a in gates) != (b in gates):
                gates.discard(a)
                gates.discard(b)
                changed = True
    return gates


class _Inner:
    """Completion of gate binaries and continuous variables for fixed outer binaries."""

    def __init__(self, model: StructuredModel, encodings: Mapping[str, object], gates: set):
        self.model = model
        self.cont = [v for v in model.variables if v.kind == "continuous" or v.name in gates]
        self.domain: Dict[str, np.ndarray] = {}
        for v in self.cont:
            vals = np.asarray(encodings[v.name].values, dtype=float)
            self.domain[v.name] = vals[(vals >= v.lo - FEAS_TOL) & (vals <= v.hi + FEAS_TOL)]
        self.obj = {n: 0.0 for n in (v.name for v in self.cont)}
        for n, c in model.objective:
            if n in self.obj:
                self.obj[n] += c
        self.penalty = 10.0 * dominance_bound(model, encodings)
        free = [v for v in self.cont if self.domain[v.name].size > 1]
        self.owners = sorted({v.owner for v in free if v.owner is not None})
        self.loose = [v.name for v in free if v.owner is None]
        self.stage_vars: Dict[str, Dict[int, List[str]]] = {o: {} for o in self.owners}
        var_of = {v.name: v for v in model.variables}
        for v in free:
            if v.owner is not None:
                self.stage_vars[v.owner].setdefault(v.stage, []).append(v.name)
        free_names = {v.name for v in free}
        self._plans: Dict[str, list] = {}
        # per owner: stage -> list of (terms, sense, rhs, label, soft)
        self.owner_cons: Dict[str, Dict[int, list]] = {o: {} for o in self.owners}
        self.loose_cons: Dict[str, list] = {n: [] for n in self.loose}
        self.cont_cons = []
        for con in model.constraints:
            mine = [n for n in con.names if n in free_names]
            if not mine:
                continue
            self.cont_cons.append(con)
            owners = {var_of[n].owner for n in mine}
            soft = len(owners) > 1 or None in owners
            for o in owners:
                if o is None:
                    continue
                stages = sorted({var_of[n].stage for n in mine if var_of[n].owner == o})
                if stages[-1] - stages[0] > 1:
                    raise NonSeparableError(con.label, f"spans stages {stages[0]}..{stages[-1]} of {o}")
                self.owner_cons[o].setdefault(stages[-1], []).append((con, soft))
            for n in mine:
                if var_of[n].owner is None:
                    self.loose_cons[n].append(con)
        # exclusions among inner variables, filtered out of the stage tables
        self.stage_excl: Dict[Tuple[str, int], List[Tuple[str, str]]] = {}
        inner_names = {v.name for v in self.cont}
        for a, b in model.bilinear_exclusions:
            if a not in inner_names:
                continue
            va, vb = var_of[a], var_of[b]
            if va.owner is None or va.owner != vb.owner or va.stage != vb.stage:
                raise NonSeparableError(f"exclusion[{a},{b}]",
                                        "exclusion outside a single owner stage")
            if a in free_names and b in free_names:
                self.stage_excl.setdefault((va.owner, va.stage), []).append((a, b))

    def start(self) -> Dict[str, float]:
        return {v.name: float(self.domain[v.name][0]) if self.domain[v.name].size else v.lo
                for v in self.cont}

    def _violation(self, con, values) -> float:
        return abs(con.residual(values))

    def _compile(self, o: str):
        """Per-stage level tables and constraint coefficient rows for owner ``o``."""
        plan = []
        prev_names: List[str] = []
        prev_combos = np.zeros((1, 0))
        for t in sorted(self.stage_vars[o]):
            names = self.stage_vars[o][t]
            combos = np.array(list(itertools.product(*(self.domain[n] for n in names))), dtype=float)
            for a, b in self.stage_excl.get((o, t), []):
                ia, ib = names.index(a), names.index(b)
                combos = combos[np.abs(combos[:, ia] * combos[:, ib]) <= FEAS_TOL]
            cost = combos @ np.array([self.obj[n] for n in names])
            rows = []
            for con, soft in self.owner_cons[o].get(t, []):
                a_cur = np.zeros(len(names))
                a_prev = np.zeros(len(prev_names))
                other = []
                for n, c in con.terms:
                    if n in names:
                        a_cur[names.index(n)] += c
                    elif n in prev_names:
                        a_prev[prev_names.index(n)] += c
                    else:
                        other.append((n, c))
                base = (prev_combos @ a_prev)[:, None] + (combos @ a_cur)[None, :] - con.rhs
                rows.append((base, other, con.sense, soft))
            plan.append((names, combos, cost, rows))
            prev_names, prev_combos = names, combos
        return plan

    def owner_dp(self, o: str, values: Dict[str, float]) -> Optional[Dict[str, float]]:
        plan = self._plans.get(o)
        if plan is None:
            plan = self._plans[o] = self._compile(o)
        if not plan:
            return values
        prev_cost = np.zeros(1)
        parents = []
        for names, combos, cost, rows in plan:
            total = prev_cost[:, None] + cost[None, :]
            for base, other, sense, soft in rows:
                diff = base + sum(c * values[n] for n, c in other)
                if sense == "==":
                    viol = np.abs(diff)
                elif sense == "<=":
                    viol = np.maximum(diff, 0.0)
                else:
                    viol = np.maximum(-diff, 0.0)
                bad = viol > FEAS_TOL
                if soft:
                    total = total + self.penalty * np.where(bad, viol, 0.0)
                else:
                    total = np.where(bad, np.inf, total)
            parent = np.argmin(total, axis=0)
            prev_cost = total[parent, np.arange(combos.shape[0])]
            parents.append(parent)
        j = int(np.argmin(prev_cost))
        if not np.isfinite(prev_cost[j]):
            return None
        out = dict(values)
        for (names, combos, _, _), parent in zip(reversed(plan), reversed(parents)):
            for k, n in enumerate(names):
                out[n] = float(combos[j, k])
            j = int(parent[j])
        return out

    def loose_scan(self, values: Dict[str, float]) -> Dict[str, float]:
        out = dict(values)
        for n in self.loose:
            best_cost, best_val = math.inf, out[n]
            for val in self.domain[n]:
                out[n] = float(val)
                cost = self.obj[n] * val + self.penalty * sum(self._violation(c, out) for c in self.loose_cons[n])
                if cost < best_cost - 1e-12:
                    best_cost, best_val = cost, float(val)
            out[n] = best_val
        return out

    def score(self, values: Dict[str, float]) -> float:
        total = sum(self.obj[n] * values[n] for n in self.obj)
        for con in self.cont_cons:
            v = self._violation(con, values)
            if v > FEAS_TOL:
                total += self.penalty * v
        return total

    def solve(self, binaries: Mapping[str, float], max_passes: int) -> Tuple[float, Optional[Dict[str, float]]]:
        values = dict(binaries)
        values.update(self.start())
        best = math.inf
        for _ in range(max_passes):
            for o in self.owners:
                nxt = self.owner_dp(o, values)
                if nxt is None:
                    return _INFEASIBLE, None
                values = nxt
            values = self.loose_scan(values)
            s = self.score(values)
            if s >= best - 1e-12:
                break
            best = s
            if len(self.owners) <= 1 and not self.loose:
                break
        return best, values


def _binary_model(model: StructuredModel, gates: set) -> StructuredModel:
    binaries = {v.name for v in model.variables if v.kind == "binary" and v.name not in gates}
    cons = tuple(c for c in model.constraints if all(n in binaries for n in c.names))
    objective = merge_terms((n, c) for n, c in model.objective if n in binaries)
    excl = tuple(p for p in model.bilinear_exclusions if p[0] in binaries and p[1] in binaries)
    return StructuredModel(
        variables=tuple(v for v in model.variables if v.name in binaries),
        constraints=cons, objective=objective, objective_constant=0.0,
        bilinear_exclusions=excl, name=model.name + "-binary")


def hybrid_solve(model: StructuredModel, config: Optional[HybridConfig] = None) -> HybridResult:
    config = config or HybridConfig()
    t0 = time.perf_counter()
    gates = _gate_binaries(model)
    for a, b in model.bilinear_exclusions:
        if a not in gates and (model.var(a).kind != "binary" or model.var(b).kind != "binary"):
            raise NonSeparableError(f"exclusion[{a},{b}]", "exclusion between continuous variables")
    enc = dict(config.encodings) if config.encodings else default_encodings(
        model, K=config.K, K_soc=config.K_soc, J=config.J)
    inner = _Inner(model, enc, gates)
    bmodel = _binary_model(model, gates)
    q, vmap = transpile(bmodel, replace(config.penalty, inequality_mode="slack_bits"),
                        {v.name: enc[v.name] for v in bmodel.variables})
    upper = q.upper()
    slack_groups = [list(e.bits) for e in vmap.slacks if e.bits]
    in_slack = {i for g in slack_groups for i in g}
    free_bits = [i for i in range(q.num_bits) if i not in in_slack]
    n = len(free_bits)
    cache: Dict[Tuple[float, ...], Tuple[float, Optional[Dict[str, float]]]] = {}

    def full_bits(bits: Tuple[int, ...]) -> np.ndarray:
        """Model bits plus the energy-minimizing level of every slack group."""
        x = np.zeros(q.num_bits)
        x[free_bits] = bits
        for g in slack_groups:
            best_k, best_e = 0, math.inf
            for k in range(len(g) + 1):
                x[g] = 0.0
                if k:
                    x[g[k - 1]] = 1.0
                e = float(x @ upper @ x)
                if e < best_e - 1e-12:
                    best_k, best_e = k, e
            x[g] = 0.0
            if best_k:
                x[g[best_k - 1]] = 1.0
        return x

    def completion(bits: Tuple[int, ...]):
        binaries = decode([int(b) for b in full_bits(bits)], vmap)
        key = tuple(binaries[v.name] for v in bmodel.variables)
        hit = cache.get(key)
        if hit is None:
            hit = cache[key] = inner.solve(binaries, config.max_passes)
        return hit

    def f(bits: Tuple[int, ...]) -> float:
        x = full_bits(bits)
        return float(x @ upper @ x) + q.constant_offset + completion(bits)[0]

    def polish(bits: Tuple[int, ...], e: float) -> Tuple[float, Tuple[int, ...]]:
        improved = True
        while improved:
            improved = False
            for i in range(n):
                cand = bits[:i] + (1 - bits[i],) + bits[i + 1:]
                ce = f(cand)
                if ce < e - 1e-12:
                    bits, e, improved = cand, ce, True
        return e, bits

    zero = (0,) * n
    best_e, best_bits = polish(zero, f(zero))
    rounds = 0
    scale = max(1.0, max((abs(c) for c in q.coefficients.values()), default=1.0))
    temps = scale * np.geomspace(1.0, 1e-3, config.sweeps) if n else np.zeros(0)
    for rounds in range(1, config.max_rounds + 1):
        improved = False
        for r in range(config.restarts):
            rng = np.random.default_rng([config.seed, rounds, r])
            cur = tuple(int(b) for b in rng.integers(0, 2, n)) if r else best_bits
            cur_e = f(cur)
            for t in temps:
                u = rng.random(n)
                for i in range(n):
                    cand = cur[:i] + (1 - cur[i],) + cur[i + 1:]
                    ce = f(cand)
                    d = ce - cur_e
                    if d <= 0 or u[i] < math.exp(-d / t):
                        cur, cur_e = cand, ce
            e, bits = polish(cur, cur_e)
            if e < best_e - 1e-12 or (abs(e - best_e) <= 1e-12 and bits < best_bits):
                improved = improved or e < best_e - 1e-12
                best_e, best_bits = e, bits
        if not improved:
            break

    _, cont = completion(best_bits)
    if cont is None:
        cont = dict(decode([int(b) for b in full_bits(best_bits)], vmap))
        cont.update(inner.start())
    assignment = Assignment({v.name: float(cont[v.name]) for v in model.variables})
    report = evaluate(model, assignment)
    if not report.feasible:
        # fall back to the all-zero binary configuration when that completes feasibly
        _, fallback = completion(zero)
        if fallback is not None:
            alt = Assignment({v.name: float(fallback[v.name]) for v in model.variables})
            alt_report = evaluate(model, alt)
            if alt_report.feasible:
                assignment, report = alt, alt_report
    return HybridResult(assignment, report.objective, report.feasible, rounds, len(cache),
                        time.perf_counter() - t0)
