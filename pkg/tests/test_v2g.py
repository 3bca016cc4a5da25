from __future__ import annotations

import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import v2g_instance, vehicle
from evqubo.instances import InstanceError, ObjectiveMode, PriceSeries, TimeGrid, VehicleSpec
from evqubo.model import MissingVariableError, evaluate
from evqubo.v2g import (add_resilience_constraints, build_contingency_model, build_v2g_model,
                        simulate_soc)


def zero_assignment(model):
    return {v.name: (v.lo if v.role == "soc" and v.lo == v.hi else 0.0) for v in model.variables}


def soc_filled(model, inst, values):
    """Complete SOC variables by rolling the recursion forward."""
    out = dict(values)
    for v in inst.fleet:
        soc = v.soc_init
        for t in range(inst.T):
            ch = sum(val for n, val in values.items() if n.startswith(f"p_ch[{v.id},{t}"))
            dis = sum(val for n, val in values.items() if n.startswith(f"p_dis[{v.id},{t}"))
            soc += (v.eta_ch * ch - dis / v.eta_dis) * inst.dt
            out[f"soc[{v.id},{t + 1}]"] = soc
    return out


def base_values(model):
    out = zero_assignment(model)
    for v in model.variables:
        if v.role == "soc":
            out[v.name] = model.var(f"soc[{v.owner},0]").lo
    return out


class TestInstanceTypes:
    def test_rejects_soc_order(self):
        with pytest.raises(InstanceError, match="soc_min"):
            vehicle(soc_min=5.0, soc_max=4.0, soc_init=4.5)

    def test_rejects_bad_efficiency(self):
        with pytest.raises(InstanceError, match="eta_ch"):
            vehicle(eta_ch=1.2)

    def test_rejects_zero_horizon(self):
        with pytest.raises(InstanceError):
            TimeGrid(0)

    def test_weighted_mode_needs_unit_sum(self):
        with pytest.raises(InstanceError):
            ObjectiveMode.weighted(0.6, 0.6)

    def test_price_length_mismatch(self):
        with pytest.raises(InstanceError, match="prices"):
            v2g_instance(T=2, r_ch=[0.1], r_dis=[0.1])

    def test_negative_price(self):
        with pytest.raises(InstanceError):
            PriceSeries((-1.0,), (0.0,))


class TestBuildV2G:
    def test_cost_example(self):
        inst = v2g_instance(r_ch=[0.2, 0.1], r_dis=[0.3, 0.4])
        m = build_v2g_model(inst)
        a = base_values(m)
        a.update({"x[v1,0]": 1, "p_ch[v1,0]": 2.0, "y[v1,1]": 1, "p_dis[v1,1]": 2.0})
        a = soc_filled(m, inst, a)
        rep = evaluate(m, a)
        assert rep.objective == pytest.approx(-0.4, abs=1e-12)
        assert rep.feasible

    def test_zero_assignment_feasible(self):
        inst = v2g_instance(T=3)
        m = build_v2g_model(inst)
        a = soc_filled(m, inst, base_values(m))
        rep = evaluate(m, a)
        assert rep.objective == 0.0 and rep.feasible
        assert all(a[f"soc[v1,{t}]"] == 5.0 for t in range(4))

    def test_counts(self):
        inst = v2g_instance(fleet=[vehicle("a"), vehicle("b")], T=3)
        m = build_v2g_model(inst)
        c = m.counts()
        assert (c["p_ch"], c["p_dis"], c["x"], c["y"], c["soc"]) == (6, 6, 6, 6, 8)
        assert len(m.bilinear_exclusions) == 6

    def test_empty_fleet_rejected(self):
        with pytest.raises(InstanceError, match="fleet"):
            build_v2g_model(v2g_instance(fleet=[]))

    def test_deterministic_naming(self):
        inst = v2g_instance(fleet=[vehicle("a"), vehicle("b")], T=2)
        assert build_v2g_model(inst) == build_v2g_model(inst)


class TestResilience:
    def test_load_balance_boundary(self):
        inst = v2g_instance(fleet=[vehicle(p_dis=4.0)], T=1, p_gen=((5.0,),), p_gen_max=((5.0,),),
                            p_demand=(7.0,), sr_req=(1.0,))
        m = add_resilience_constraints(build_v2g_model(inst), inst)
        a = base_values(m)
        a.update({"y[v1,0]": 1, "p_dis[v1,0]": 3.0})
        a = soc_filled(m, inst, a)
        rep = evaluate(m, a)
        assert rep.residuals["load_balance[0]"] == 0.0
        assert "load_balance[0]" not in rep.violated

    def test_single_location(self):
        inst = v2g_instance(T=1, locations=("a", "b"))
        m = add_resilience_constraints(build_v2g_model(inst), inst)
        a = soc_filled(m, inst, base_values(m))
        a.update({"z[v1,0,a]": 1, "z[v1,0,b]": 1})
        assert "single_location[v1,0]" in evaluate(m, a).violated

    def test_reactive_limit(self):
        fleet = [vehicle("a", q_dis_ratio=0.5, soc_init=9.0), vehicle("b", q_dis_ratio=0.5, soc_init=9.0)]
        inst = v2g_instance(fleet=fleet, T=1, q_line_max=1.9)
        m = add_resilience_constraints(build_v2g_model(inst), inst)
        a = base_values(m)
        a.update({"y[a,0]": 1, "p_dis[a,0]": 2.0, "y[b,0]": 1, "p_dis[b,0]": 2.0})
        rep = evaluate(m, soc_filled(m, inst, a))
        assert rep.residuals["line_q[0]"] == pytest.approx(0.1)
        assert "line_q[0]" in rep.violated


class TestContingency:
    def _inst(self, fleet, p_crit=5.0, c_crit=10.0, p_gen=0.0, c_gen=0.0):
        return v2g_instance(fleet=fleet, T=1, p_crit=((p_crit,),), c_crit=((c_crit,),),
                            p_gen=((p_gen,),), p_gen_max=((p_gen,),), c_gen=((c_gen,),))

    def test_partial_service(self):
        inst = self._inst([vehicle(soc_init=9.0)])
        m = build_contingency_model(inst)
        a = base_values(m)
        a.update({"y[v1,0]": 1, "z[v1,0,site]": 1, "p_dis[v1,0,site]": 3.0})
        rep = evaluate(m, soc_filled(m, inst, a))
        assert rep.objective == pytest.approx(20.0)
        assert rep.feasible

    def test_zero_fleet(self):
        inst = self._inst([], p_gen=2.0, c_gen=1.5)
        m = build_contingency_model(inst)
        assert evaluate(m, {}).objective == pytest.approx(5 * 10 + 2 * 1.5)

    def test_full_coverage(self):
        inst = self._inst([vehicle(p_dis=8.0, soc_init=9.0)], p_crit=4.0)
        m = build_contingency_model(inst)
        a = base_values(m)
        a.update({"y[v1,0]": 1, "z[v1,0,site]": 1, "p_dis[v1,0,site]": 4.0})
        rep = evaluate(m, soc_filled(m, inst, a))
        assert rep.objective == 0.0 and rep.feasible

    def test_over_discharge_is_infeasible(self):
        inst = self._inst([vehicle(p_dis=8.0, soc_init=9.0)], p_crit=4.0)
        m = build_contingency_model(inst)
        a = base_values(m)
        a.update({"y[v1,0]": 1, "z[v1,0,site]": 1, "p_dis[v1,0,site]": 6.0})
        assert "unserved_nonneg[0,site]" in evaluate(m, soc_filled(m, inst, a)).violated


class TestEvaluate:
    def test_exclusion_reported(self):
        inst = v2g_instance()
        m = build_v2g_model(inst)
        a = soc_filled(m, inst, base_values(m))
        a.update({"x[v1,0]": 1, "y[v1,0]": 1})
        rep = evaluate(m, a)
        assert rep.exclusion_violations == [("x[v1,0]", "y[v1,0]")]
        assert not rep.feasible

    def test_broken_recursion(self):
        inst = v2g_instance()
        m = build_v2g_model(inst)
        a = soc_filled(m, inst, base_values(m))
        a["soc[v1,1]"] += 0.5
        rep = evaluate(m, a)
        assert rep.residuals["soc_dynamics[v1,0]"] == pytest.approx(0.5)
        assert not rep.feasible

    def test_missing_variable_named(self):
        m = build_v2g_model(v2g_instance())
        a = base_values(m)
        del a["p_ch[v1,1]"]
        with pytest.raises(MissingVariableError, match=r"p_ch\[v1,1\]"):
            evaluate(m, a)


class TestSimulateSoc:
    def test_charge(self):
        v = vehicle(eta_ch=0.9, soc_init=5.0)
        assert simulate_soc(v, TimeGrid(1), [(2.0, 0.0)]).values[1] == pytest.approx(6.8)

    def test_discharge(self):
        v = vehicle(eta_dis=0.9, soc_init=6.8)
        assert simulate_soc(v, TimeGrid(1), [(0.0, 1.8)]).values[1] == pytest.approx(4.8)

    def test_idle(self):
        tr = simulate_soc(vehicle(), TimeGrid(3), [(0.0, 0.0)] * 3)
        assert tr.values == (5.0,) * 4 and tr.ok

    def test_violation_flagged(self):
        tr = simulate_soc(vehicle(soc_init=8.0), TimeGrid(1), [(4.0, 0.0)])
        assert not tr.ok and tr.violations[0][0] == 1

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            simulate_soc(vehicle(), TimeGrid(2), [(0.0, 0.0)])


@given(st.floats(0.05, 1.0), st.floats(0.05, 1.0), st.floats(0.1, 10.0))
def test_round_trip_never_gains(eta_ch, eta_dis, energy):
    v = VehicleSpec("v", 100.0, 100.0, eta_ch, eta_dis, 1.0, 1000.0, 1.0)
    stored = simulate_soc(v, TimeGrid(1), [(energy, 0.0)]).values[1] - v.soc_init
    # discharge everything that was stored
    delivered = stored * eta_dis
    back = simulate_soc(v, TimeGrid(2), [(energy, 0.0), (0.0, delivered)]).values[2]
    assert back == pytest.approx(v.soc_init, abs=1e-9)
    assert delivered <= energy + 1e-12
    if eta_ch * eta_dis < 1:
        assert delivered < energy


@given(st.lists(st.tuples(st.floats(0, 4), st.floats(0, 4)), min_size=2, max_size=2),
       st.lists(st.tuples(st.floats(0, 4), st.floats(0, 4)), min_size=2, max_size=2))
def test_objective_additive_over_vehicles(s1, s2):
    inst = v2g_instance(fleet=[vehicle("a"), vehicle("b")], r_ch=[0.3, 0.1], r_dis=[0.2, 0.5])
    m = build_v2g_model(inst)
    zero = base_values(m)

    def put(values, vid, sched):
        out = dict(values)
        for t, (c, d) in enumerate(sched):
            out[f"p_ch[{vid},{t}]"] = c
            out[f"p_dis[{vid},{t}]"] = d
        return out

    a1 = put(zero, "a", s1)
    a2 = put(zero, "b", s2)
    both = put(a1, "b", s2)
    o = lambda a: evaluate(m, a).objective
    assert o(both) == pytest.approx(o(a1) + o(a2), abs=1e-12)
