"""Deterministic synthetic instances.

Vehicle data is chosen so that every encoded charge or discharge level moves
the SOC by a whole number of SOC grid steps; otherwise most schedules of a
coarse encoding would be infeasible and the benchmarks would only measure
the zero schedule.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Union

import networkx as nx
import numpy as np

from ..instances import (CSPInstance, Edge, GridLimits, ObjectiveMode, PriceSeries, TimeGrid,
                         TransportGraph, V2GInstance, VehicleSpec)

__all__ = ["GeneratorParams", "generate_instance"]

_ETAS = (0.8, 0.9, 0.95, 1.0)


@dataclass(frozen=True)
class GeneratorParams:
    kind: str = "v2g"
    vehicles: int = 1
    horizon: int = 2
    nodes: int = 1
    seed: int = 0
    K: int = 2
    K_soc: int = 3
    step_hours: float = 1.0
    crit_fraction: float = 0.5
    objective: str = "cost"
    tight_capacity: bool = False
    radius: float = 0.6
    speed: float = 0.5

    def __post_init__(self):
        if self.kind not in ("v2g", "csp"):
            raise ValueError(f"kind must be 'v2g' or 'csp', got {self.kind!r}")
        for name in ("vehicles", "horizon", "nodes"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.kind == "csp" and self.nodes < 2:
            raise ValueError("csp instances need at least 2 nodes")
        if self.K < 2 or self.K_soc < 2:
            raise ValueError("K and K_soc must be >= 2")
        if not 0 <= self.crit_fraction <= 1:
            raise ValueError("crit_fraction must lie in [0, 1]")


def _r2(x: float) -> float:
    return float(round(x, 2))


def _vehicle(rng: np.random.Generator, vid: str, p: GeneratorParams) -> VehicleSpec:
    h_soc = float(rng.choice((1.0, 2.0)))
    soc_min = float(rng.integers(1, 4))
    soc_max = soc_min + h_soc * (p.K_soc - 1)
    soc_init = soc_min + h_soc * int(rng.integers(0, p.K_soc))
    eta_ch = float(rng.choice(_ETAS))
    eta_dis = float(rng.choice(_ETAS))
    m_ch = int(rng.integers(1, p.K_soc))
    m_dis = int(rng.integers(1, p.K_soc))
    # one power level moves the SOC by exactly m grid steps
    p_ch_max = p.K * m_ch * h_soc / (eta_ch * p.step_hours)
    p_dis_max = p.K * m_dis * h_soc * eta_dis / p.step_hours
    return VehicleSpec(vid, p_ch_max, p_dis_max, eta_ch, eta_dis, soc_min, soc_max, soc_init,
                       q_dis_ratio=_r2(rng.uniform(0.0, 0.3)),
                       battery_cost=_r2(rng.uniform(0.0, 0.05)))


def _prices(rng: np.random.Generator, T: int):
    peak_start = int(rng.integers(0, T))
    peak_len = max(1, T // 2)
    peak = [(t - peak_start) % T < peak_len for t in range(T)]
    r_ch = [_r2(rng.uniform(0.30, 0.45) if pk else rng.uniform(0.08, 0.15)) for pk in peak]
    r_dis = [_r2(c * rng.uniform(0.8, 1.3)) for c in r_ch]
    return PriceSeries(tuple(r_ch), tuple(r_dis))


def _graph(rng: np.random.Generator, p: GeneratorParams) -> TransportGraph:
    n = p.nodes
    names = [f"n{k}" for k in range(n)]
    pos = rng.uniform(0.0, 1.0, size=(n, 2))
    g = nx.Graph()
    g.add_nodes_from(range(n))
    for i in range(n):
        for j in range(i + 1, n):
            if np.linalg.norm(pos[i] - pos[j]) <= p.radius:
                g.add_edge(i, j)
    # join components through their closest node pair
    comps = sorted((sorted(c) for c in nx.connected_components(g)), key=lambda c: c[0])
    while len(comps) > 1:
        a, b = comps[0], comps[1]
        i, j = min(((i, j) for i in a for j in b), key=lambda ij: (np.linalg.norm(pos[ij[0]] - pos[ij[1]]), ij))
        g.add_edge(i, j)
        comps = sorted((sorted(c) for c in nx.connected_components(g)), key=lambda c: c[0])
    edges = []
    for i, j in sorted(g.edges()):
        i, j = min(i, j), max(i, j)
        dist = float(np.linalg.norm(pos[i] - pos[j]))
        edges.append(Edge(names[i], names[j], max(1, math.ceil(dist / p.speed)), round(dist, 3)))
    return TransportGraph(tuple(names), tuple(edges))


def generate_instance(kind: Union[str, GeneratorParams] = "v2g", vehicles: int = 1, horizon: int = 2,
                      nodes: Optional[int] = None, seed: int = 0, **kw) -> Union[V2GInstance, CSPInstance]:
    """Synthetic instance; identical arguments give identical instances."""
    if isinstance(kind, GeneratorParams):
        p = kind
    else:
        if nodes is None:
            nodes = 2 if kind == "csp" else 1
        p = GeneratorParams(kind, vehicles, horizon, nodes, seed, **kw)
    rng = np.random.default_rng(p.seed)
    T = p.horizon
    fleet = tuple(_vehicle(rng, f"v{k + 1}", p) for k in range(p.vehicles))
    prices = _prices(rng, T)
    locations = tuple(f"n{k}" for k in range(p.nodes)) if p.kind == "csp" or p.nodes > 1 else ("site",)
    D = len(locations)
    n_crit = max(1, round(p.crit_fraction * D)) if p.crit_fraction > 0 else 0
    crit_nodes = set(int(k) for k in rng.choice(D, size=n_crit, replace=False)) if n_crit else set()
    # critical loads are multiples of the smallest discharge level, so they can be met exactly
    unit = min(v.p_dis_max / p.K for v in fleet)
    p_crit = tuple(tuple(float(unit * rng.integers(1, p.K + 1)) if k in crit_nodes else 0.0
                         for k in range(D)) for _ in range(T))
    c_crit = tuple(tuple(_r2(rng.uniform(0.5, 2.0)) if k in crit_nodes else 0.0
                         for k in range(D)) for _ in range(T))
    limits = GridLimits.zeros(T, D, p_crit=p_crit, c_crit=c_crit)
    mode = ObjectiveMode(p.objective) if p.objective != "weighted" else ObjectiveMode.weighted(0.5, 0.5)
    v2g = V2GInstance(TimeGrid(T, p.step_hours), fleet, prices, limits, locations, mode)
    if p.kind == "v2g":
        return v2g
    graph = _graph(rng, p)
    cap = {d: (1 if p.tight_capacity else int(rng.integers(1, p.vehicles + 1))) for d in locations}
    c_tran = {v.id: _r2(rng.uniform(0.05, 0.3)) for v in fleet}
    init = {v.id: locations[int(rng.integers(0, D))] for v in fleet}
    return CSPInstance(v2g, graph, cap, c_tran, init)
