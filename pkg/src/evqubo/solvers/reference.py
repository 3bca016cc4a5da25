"""Exact minimization of a discretized model over encoding levels.

Depth-first search over level combinations with variables ordered by
(stage, declaration order).  Constraints are checked directly: after each
assignment every constraint touching the variable must still be satisfiable
given the value intervals of its unassigned variables.  A lower bound on the
objective prunes branches that cannot beat the incumbent.  Levels are tried in
ascending order and only strict improvements replace the incumbent, so among
equal optima the lexicographically smallest level vector wins.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional

import numpy as np

from ..model import FEAS_TOL, StructuredModel
from ..qubo.encoding import default_encodings
from ..qubo.transpile import Assignment
from .common import DEFAULT_MAX_BITS, GuardError

__all__ = ["ReferenceResult", "exact_discrete_reference", "encoded_bits"]


@dataclass(frozen=True)
class ReferenceResult:
    assignment: Optional[Assignment]
    objective: Optional[float]
    feasible: bool
    nodes: int = 0
    wall_time: float = field(default=0.0, compare=False)


def encoded_bits(model: StructuredModel, encodings: Mapping[str, object]) -> int:
    return sum(encodings[v.name].n_bits for v in model.variables)


def exact_discrete_reference(model: StructuredModel, encodings: Optional[Mapping[str, object]] = None,
                             max_bits: int = DEFAULT_MAX_BITS) -> ReferenceResult:
    """Minimum-objective feasible assignment over the encoded levels."""
    if encodings is None:
        encodings = default_encodings(model)
    nbits = encoded_bits(model, encodings)
    if nbits > max_bits:
        raise GuardError(f"reference search refused: {nbits} encoded bits exceeds the guard of {max_bits}")
    t0 = time.perf_counter()

    order = sorted(range(len(model.variables)),
                   key=lambda k: (model.variables[k].stage, k))
    variables = [model.variables[k] for k in order]
    pos = {v.name: p for p, v in enumerate(variables)}
    n = len(variables)
    domains: List[np.ndarray] = []
    for v in variables:
        vals = np.asarray(encodings[v.name].values, dtype=float)
        domains.append(vals[(vals >= v.lo - FEAS_TOL) & (vals <= v.hi + FEAS_TOL)])
    if any(d.size == 0 for d in domains):
        return ReferenceResult(None, None, False, 0, time.perf_counter() - t0)

    # constraints normalized to <= or ==; with per-depth remaining intervals
    cons = []
    touching: List[List[int]] = [[] for _ in range(n)]
    for con in model.constraints:
        sign = -1.0 if con.sense == ">=" else 1.0
        coef = np.zeros(n)
        for name, c in con.terms:
            coef[pos[name]] += sign * c
        lo_each = np.minimum(coef * np.array([d.min() for d in domains]),
                             coef * np.array([d.max() for d in domains]))
        hi_each = np.maximum(coef * np.array([d.min() for d in domains]),
                             coef * np.array([d.max() for d in domains]))
        # remaining bounds after depth p covers positions p+1..n-1
        rem_lo = np.append(np.cumsum(lo_each[::-1])[::-1][1:], 0.0)
        rem_hi = np.append(np.cumsum(hi_each[::-1])[::-1][1:], 0.0)
        ci = len(cons)
        cons.append((coef, sign * con.rhs, con.sense == "==", rem_lo, rem_hi))
        for p in np.flatnonzero(coef):
            touching[p].append(ci)
    excl: List[List[int]] = [[] for _ in range(n)]
    for a, b in model.bilinear_exclusions:
        pa, pb = pos[a], pos[b]
        excl[max(pa, pb)].append(min(pa, pb))

    obj = np.zeros(n)
    for name, c in model.objective:
        obj[pos[name]] += c
    obj_lo_each = np.array([min(obj[p] * d.min(), obj[p] * d.max()) for p, d in enumerate(domains)])
    obj_rem = np.append(np.cumsum(obj_lo_each[::-1])[::-1][1:], 0.0)

    partial = np.zeros(len(cons))
    values = np.zeros(n)
    best = {"obj": np.inf, "values": None}
    nodes = 0

    def feasible_at(p: int) -> bool:
        for ci in touching[p]:
            coef, rhs, eq, rem_lo, rem_hi = cons[ci]
            lo = partial[ci] + rem_lo[p]
            if lo > rhs + FEAS_TOL:
                return False
            if eq and partial[ci] + rem_hi[p] < rhs - FEAS_TOL:
                return False
        for q in excl[p]:
            if abs(values[p] * values[q]) > FEAS_TOL:
                return False
        return True

    def dfs(p: int, obj_val: float) -> None:
        nonlocal nodes
        if p == n:
            if obj_val < best["obj"] - 1e-9 * max(1.0, abs(obj_val)):
                best["obj"] = obj_val
                best["values"] = values.copy()
            return
        for val in domains[p]:
            nodes += 1
            values[p] = val
            for ci in touching[p]:
                partial[ci] += cons[ci][0][p] * val
            new_obj = obj_val + obj[p] * val
            bounded = (best["values"] is not None
                       and new_obj + obj_rem[p] >= best["obj"] - 1e-9 * max(1.0, abs(best["obj"])))
            if not bounded and feasible_at(p):
                dfs(p + 1, new_obj)
            for ci in touching[p]:
                partial[ci] -= cons[ci][0][p] * val

    dfs(0, 0.0)
    if best["values"] is None:
        return ReferenceResult(None, None, False, nodes, time.perf_counter() - t0)
    assignment = Assignment({v.name: float(best["values"][pos[v.name]]) for v in model.variables})
    objective = model.objective_value(assignment)
    return ReferenceResult(assignment, objective, True, nodes, time.perf_counter() - t0)
