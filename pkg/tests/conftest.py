from __future__ import annotations

import pytest
from hypothesis import HealthCheck, settings

from evqubo.instances import (CSPInstance, Edge, GridLimits, PriceSeries, TimeGrid, TransportGraph,
                              V2GInstance, VehicleSpec)

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def vehicle(vid="v1", p_ch=4.0, p_dis=4.0, eta_ch=1.0, eta_dis=1.0, soc_min=1.0, soc_max=9.0,
            soc_init=5.0, **kw) -> VehicleSpec:
    return VehicleSpec(vid, p_ch, p_dis, eta_ch, eta_dis, soc_min, soc_max, soc_init, **kw)


def v2g_instance(fleet=None, T=2, r_ch=None, r_dis=None, locations=("site",), dt=1.0, **limits):
    fleet = [vehicle()] if fleet is None else fleet
    r_ch = r_ch if r_ch is not None else [0.1] * T
    r_dis = r_dis if r_dis is not None else [0.2] * T
    return V2GInstance(TimeGrid(T, dt), tuple(fleet), PriceSeries(r_ch, r_dis),
                       GridLimits.zeros(T, len(locations), **limits), locations)


def line_graph(*edges, nodes=None) -> TransportGraph:
    names = nodes or sorted({n for a, b, _ in edges for n in (a, b)})
    return TransportGraph(tuple(names), tuple(Edge(a, b, t) for a, b, t in edges))


def csp_instance(v2g: V2GInstance, graph: TransportGraph, start=None, cap=None, c_tran=None):
    start = start or {v.id: v2g.locations[0] for v in v2g.fleet}
    return CSPInstance(v2g, graph, cap or {}, c_tran or {}, start)


@pytest.fixture
def tiny_v2g():
    return v2g_instance()


# one line per acceptance criterion, printed after the run
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
