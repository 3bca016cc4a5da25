from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import csp_instance, line_graph, v2g_instance, vehicle
from evqubo.csp import RoutePlan, build_csp_model, plan_to_assignment, validate_route_plan
from evqubo.harness.generate import generate_instance
from evqubo.instances import InstanceError, TransportGraph
from evqubo.model import evaluate
from evqubo.qubo import default_encodings
from evqubo.scenarios import (PerturbationConfig, Scenario, ScenarioSet, apply_scenario,
                              build_stochastic_csp, build_stochastic_v2g, sample_scenarios,
                              scenario_slice)
from evqubo.solvers import exact_discrete_reference
from evqubo.v2g import build_weighted_model


def random_values(model, rng):
    return {v.name: float(rng.uniform(-5, 5)) for v in model.variables}


class TestScenarioSet:
    def test_probabilities_must_sum_to_one(self):
        with pytest.raises(InstanceError, match="sum"):
            ScenarioSet((Scenario("a", 0.5), Scenario("b", 0.4)))

    def test_weights_must_sum_to_one(self):
        with pytest.raises(InstanceError):
            ScenarioSet((Scenario("a", 1.0),), 0.7, 0.7)

    def test_negative_probability(self):
        with pytest.raises(InstanceError):
            Scenario("a", -0.1)


class TestSampling:
    base = generate_instance("csp", vehicles=2, horizon=3, nodes=4, seed=2)

    def test_equiprobable(self):
        s = sample_scenarios(self.base, PerturbationConfig(load_sigma=0.3), seed=1, count=4)
        assert [sc.probability for sc in s.scenarios] == [0.25] * 4

    def test_zero_noise_is_identity(self):
        s = sample_scenarios(self.base, PerturbationConfig(), seed=5, count=3)
        for sc in s.scenarios:
            assert sc.is_empty
            assert apply_scenario(self.base, sc) == self.base

    @given(st.integers(0, 2**31), st.integers(1, 6))
    def test_deterministic(self, seed, count):
        cfg = PerturbationConfig(load_sigma=0.2, gen_sigma=0.1, edge_outage_prob=0.3)
        assert sample_scenarios(self.base, cfg, seed, count) == sample_scenarios(self.base, cfg, seed, count)

    def test_outages_drop_edges(self):
        cfg = PerturbationConfig(edge_outage_prob=1.0)
        sc = sample_scenarios(self.base, cfg, seed=0, count=1).scenarios[0]
        assert apply_scenario(self.base, sc).graph.edges == ()

    def test_count_zero_rejected(self):
        with pytest.raises(ValueError):
            sample_scenarios(self.base, PerturbationConfig(), seed=0, count=0)


def _unserved_instance():
    inst = v2g_instance(fleet=[], T=1, p_crit=((1.0,),), c_crit=((1.0,),))
    return inst


class TestStochasticV2G:
    def test_expected_objective(self):
        inst = _unserved_instance()
        s = ScenarioSet((Scenario("lo", 0.5, p_crit=(((0, "site"), 10.0),)),
                         Scenario("hi", 0.5, p_crit=(((0, "site"), 20.0),))), 0.0, 1.0)
        m = build_stochastic_v2g(inst, s)
        assert evaluate(m, {}).objective == pytest.approx(15.0)

    def test_energy_only_weights(self):
        inst = v2g_instance(fleet=[vehicle()], T=2, r_ch=[0.2, 0.3], r_dis=[0.1, 0.5],
                            p_crit=((3.0,), (3.0,)), c_crit=((9.0,), (9.0,)))
        s = ScenarioSet((Scenario("a", 0.25), Scenario("b", 0.75, p_crit=(((1, "site"), 1.0),))), 1.0, 0.0)
        m = build_stochastic_v2g(inst, s)
        rng = np.random.default_rng(0)
        vals = random_values(m, rng)
        expected = 0.0
        for sc in s.scenarios:
            sl = scenario_slice(vals, sc.id)
            energy = sum(inst.prices.r_ch[t] * sl[f"p_ch[v1,{t}]"] - inst.prices.r_dis[t] * sl[f"p_dis[v1,{t},site]"]
                         for t in range(2))
            expected += sc.probability * energy
        assert evaluate(m, vals).objective == pytest.approx(expected, abs=1e-12)

    def test_single_scenario_matches_deterministic(self):
        inst = generate_instance("v2g", vehicles=2, horizon=2, nodes=2, seed=4, objective="weighted")
        s = ScenarioSet((Scenario("only", 1.0),), 0.5, 0.5)
        m = build_stochastic_v2g(inst, s)
        det = build_weighted_model(inst)
        assert len(m.variables) == len(det.variables)
        assert len(m.constraints) == len(det.constraints)
        rng = np.random.default_rng(3)
        for _ in range(5):
            vals = random_values(m, rng)
            assert evaluate(m, vals).objective == pytest.approx(
                evaluate(det, scenario_slice(vals, "only")).objective, abs=1e-12)

    def test_empty_set_rejected(self):
        with pytest.raises(InstanceError):
            build_stochastic_v2g(_unserved_instance(), ScenarioSet(()))

    def test_zero_probability_scenario_keeps_optimum(self):
        inst = v2g_instance(fleet=[vehicle(p_dis=8.0, soc_init=9.0)], T=1,
                            p_crit=((4.0,),), c_crit=((2.0,),))
        one = ScenarioSet((Scenario("a", 1.0),), 0.5, 0.5)
        two = ScenarioSet((Scenario("a", 1.0), Scenario("ghost", 0.0, p_crit=(((0, "site"), 0.0),))), 0.5, 0.5)
        objs = []
        for s in (one, two):
            m = build_stochastic_v2g(inst, s)
            objs.append(exact_discrete_reference(m, default_encodings(m), max_bits=60).objective)
        assert objs[0] == pytest.approx(objs[1], abs=1e-12)

    def test_first_stage_shared(self):
        inst = generate_instance("v2g", vehicles=1, horizon=2, nodes=2, seed=1, objective="weighted")
        s = sample_scenarios(inst, PerturbationConfig(load_sigma=0.2), seed=0, count=2)
        m = build_stochastic_v2g(inst, s, first_stage=("z",))
        names = {v.name for v in m.variables}
        assert "z[v1,0,n0]" in names and "z[v1,0,n0]@s0" not in names
        assert "p_ch[v1,0]@s0" in names and "p_ch[v1,0]@s1" in names


class TestStochasticCsp:
    def test_single_scenario_matches_deterministic(self):
        inst = generate_instance("csp", vehicles=2, horizon=2, nodes=3, seed=8)
        m = build_stochastic_csp(inst, ScenarioSet((Scenario("s", 1.0),)))
        det = build_csp_model(inst)
        rng = np.random.default_rng(1)
        for _ in range(5):
            vals = random_values(m, rng)
            assert evaluate(m, vals).objective == pytest.approx(
                evaluate(det, scenario_slice(vals, "s")).objective, abs=1e-12)

    def test_unknown_edge_rejected(self):
        inst = generate_instance("csp", vehicles=1, horizon=2, nodes=2, seed=0)
        with pytest.raises(InstanceError, match="does not exist"):
            build_stochastic_csp(inst, ScenarioSet((Scenario("s", 1.0, travel_time=(("x|y", None),)),)))

    def test_outage_makes_relocation_illegal(self):
        edges = (("a", "b", 1), ("a", "c", 3), ("b", "c", 1))
        v2g = v2g_instance(fleet=[vehicle()], T=3, locations=("a", "b", "c"))
        inst = csp_instance(v2g, line_graph(*edges))
        plan = RoutePlan.from_dicts({"v1": [(0, "a"), (2, "b")]}, {"v1": [(2, "a|b")]})
        assert not validate_route_plan(inst, plan).labels()

        s = ScenarioSet((Scenario("out", 1.0, travel_time=(("a|b", None),)),))
        m = build_stochastic_csp(inst, s)
        rep = evaluate(m, {f"{k}@out": v for k, v in
                           plan_to_assignment(build_csp_model(inst), inst, plan).items()})
        flagged = {l[: -len("@out")] for l in rep.violated if l.startswith("travel_time")}

        # oracle: the reduced network written out by hand
        reduced = TransportGraph(("a", "b", "c"), line_graph(("a", "c", 3), ("b", "c", 1)).edges)
        oracle = validate_route_plan(inst, plan, graph=reduced).labels()
        assert oracle == {"travel_time[v1,a,0,b,2]", "travel_time[v1,a,-1,b,2]"}
        assert flagged == oracle

    def test_identical_copies_weighted(self):
        inst = generate_instance("csp", vehicles=1, horizon=2, nodes=2, seed=3)
        s = ScenarioSet((Scenario("p", 0.3), Scenario("q", 0.7)))
        m = build_stochastic_csp(inst, s)
        det = build_csp_model(inst)
        vals = random_values(det, np.random.default_rng(2))
        both = {f"{k}@{sid}": v for sid in ("p", "q") for k, v in vals.items()}
        o = evaluate(det, vals).objective
        assert evaluate(m, both).objective == pytest.approx(0.3 * o + 0.7 * o, abs=1e-12)


@given(st.integers(0, 2**31))
def test_expected_value_linearity(seed):
    inst = generate_instance("csp", vehicles=2, horizon=2, nodes=3, seed=seed % 97)
    s = sample_scenarios(inst, PerturbationConfig(load_sigma=0.4, edge_outage_prob=0.3,
                                                  vehicle_outage_prob=0.2), seed=seed, count=3)
    m = build_stochastic_csp(inst, s)
    vals = random_values(m, np.random.default_rng(seed))
    total = 0.0
    for sc in s.scenarios:
        det = build_csp_model(apply_scenario(inst, sc))
        total += sc.probability * evaluate(det, scenario_slice(vals, sc.id)).objective
    assert abs(evaluate(m, vals).objective - total) <= 1e-9
