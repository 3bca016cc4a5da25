"""Instance -> model -> QUBO -> solve -> decode, shared by the CLI and the benchmark."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Optional, Sequence, Union

import numpy as np

from ..csp import build_csp_model
from ..instances import CSPInstance, V2GInstance
from ..model import StructuredModel, evaluate
from ..qubo import PenaltyConfig, decode, default_encodings, transpile
from ..scenarios import ScenarioSet, build_stochastic_csp, build_stochastic_v2g
from ..solvers import (AnnealSchedule, HybridConfig, brute_force, default_schedule, greedy_descent,
                       hybrid_solve, simulated_anneal)
from ..v2g import build_contingency_model, build_v2g_model, build_weighted_model

__all__ = ["METHODS", "build_model", "SolveOutcome", "run_method"]

METHODS = ("bruteforce", "sa", "greedy", "hybrid")


def build_model(instance: Union[V2GInstance, CSPInstance], scenarios: Optional[ScenarioSet] = None,
                first_stage: Sequence[str] = ()) -> StructuredModel:
    """The model an instance asks for: its objective mode, CSP routing, or the scenario expectation."""
    if scenarios is not None:
        if isinstance(instance, CSPInstance):
            return build_stochastic_csp(instance, scenarios, first_stage)
        return build_stochastic_v2g(instance, scenarios, first_stage)
    if isinstance(instance, CSPInstance):
        return build_csp_model(instance)
    kind = instance.objective.kind
    if kind == "contingency":
        return build_contingency_model(instance)
    if kind == "weighted":
        return build_weighted_model(instance)
    return build_v2g_model(instance)


@dataclass(frozen=True)
class SolveOutcome:
    method: str
    assignment: Dict[str, float]
    objective: float
    feasible: bool
    qubo_energy: Optional[float]
    num_bits: Optional[int]
    wall_time: float


def run_method(model: StructuredModel, method: str, *, seed: int = 0, K: int = 2, K_soc: int = 3,
               J: int = 2, penalty: Optional[PenaltyConfig] = None, sweeps: Optional[int] = None,
               restarts: Optional[int] = None, max_bits: int = 26) -> SolveOutcome:
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; choose from {', '.join(METHODS)}")
    penalty = penalty or PenaltyConfig()
    enc = default_encodings(model, K=K, K_soc=K_soc, J=J)
    if method == "hybrid":
        res = hybrid_solve(model, HybridConfig(seed=seed, K=K, K_soc=K_soc, J=J, penalty=penalty,
                                               encodings=enc))
        return SolveOutcome(method, dict(res.assignment), res.objective, res.feasible, None,
                            None, res.wall_time)
    q, vmap = transpile(model, penalty, enc)
    if method == "bruteforce":
        res = brute_force(q, max_bits=max_bits)
    elif method == "sa":
        base = default_schedule(q, seed=seed)
        sched = AnnealSchedule(base.initial_temperature, base.final_temperature,
                               sweeps or base.sweeps, restarts or base.restarts, seed)
        res = simulated_anneal(q, sched)
    else:
        start = np.random.default_rng(seed).integers(0, 2, q.num_bits)
        res = greedy_descent(q, [int(b) for b in start])
    assignment = decode(res.best_bits, vmap)
    report = evaluate(model, assignment)
    return SolveOutcome(method, dict(assignment), report.objective, report.feasible,
                        res.best_energy, q.num_bits, res.wall_time)
