import json
import math

import numpy as np
import pytest

from gridrestore.feeder import ScenarioConfig, parse_feeder, to_per_unit
from gridrestore.formulation import FormulationError, VariableIndex, assemble
from gridrestore.milp import LESS, GREATER
from gridrestore.solve import SolveOptions, solve
from conftest import diag3, make_toy_feeder, parse_toy, toy_config


def two_block_doc():
    rng = np.random.default_rng(123)
    return make_toy_feeder(rng, n_blocks=2, name="twoblock")


def test_variable_index_bijective():
    ix = VariableIndex()
    ix.add("node_on", "n1", "", 1, 0)
    with pytest.raises(FormulationError, match="duplicate"):
        ix.add("node_on", "n1", "", 1, 1)
    with pytest.raises(FormulationError, match="already indexed"):
        ix.add("node_on", "n2", "", 1, 0)
    assert ix.get("node_on", "n1", "", 1) == 0
    assert ix.key_of(0) == ("node_on", "n1", "", 1)


def test_every_model_variable_indexed():
    prob = assemble(parse_toy(two_block_doc()), toy_config(n_steps=2))
    assert len(prob.index) == prob.model.n_variables


def test_assemble_variable_count_by_hand():
    doc = {
        "name": "hand", "base_frequency_hz": 60.0, "step_interval_s": 1.0,
        "base_mva_per_phase": 1.0,
        "nodes": [{"id": "u", "phases": "a", "base_kv_ln": 2.4},
                  {"id": "v", "phases": "a", "base_kv_ln": 2.4}],
        "branches": [{"id": "sw", "from": "u", "to": "v", "phases": "a",
                      "switchable": True, "damaged": False,
                      "r_ohm": diag3(0.05), "x_ohm": diag3(0.1)}],
        "ders": [{"id": "g", "node": "u", "kind": "droop", "black_start": True,
                  "damaged": False, "phases": "a", "p_min_kw": 0.0, "p_max_kw": 100.0,
                  "q_min_kvar": -10.0, "q_max_kvar": 50.0, "ramp_fraction": 1.0}],
        "loads": [{"id": "l", "node": "v", "phases": "a", "nominal_p_kw": [40.0],
                   "nominal_q_kvar": [16.0], "zip": [0.4, 0.3, 0.3],
                   "switchable": True, "controllable_dr": False, "damaged": False}],
    }
    prob = assemble(parse_feeder(json.dumps(doc)), toy_config(n_steps=2))
    # per step: 2 blocks + 2 nodes + 1 branch + 1 edge + 1 der + 1 load = 8 binaries,
    # 4 V, 2 der dispatch, 2 load power, 4 switch-voltage products, 2 load products;
    # plus 2 feed vars at t=2
    expect = 2 * (8 + 4 + 2 + 2 + 4 + 2) + 2
    assert prob.model.n_variables == expect


def test_rejects_invalid_config():
    with pytest.raises(ValueError):
        assemble(parse_toy(two_block_doc()), ScenarioConfig(n_steps=0))


def test_rejects_no_black_start():
    doc = two_block_doc()
    for d in doc["ders"]:
        d["kind"] = "pq_dispatchable"
        d["black_start"] = False
    with pytest.raises(FormulationError, match="black-start"):
        assemble(parse_toy(doc), toy_config(n_steps=2))


def test_startup_unique_row_present():
    doc = two_block_doc()
    doc["ders"].append(dict(doc["ders"][0], id="m9", node=doc["nodes"][-1]["id"]))
    prob = assemble(parse_toy(doc), toy_config(n_steps=2))
    row = next(c for c in prob.model.constraints if c.name == "startup_unique")
    assert row.sense == "=" and row.rhs == 1.0
    assert len(row.coeffs) == 2


def test_damaged_elements_locked_out():
    doc = two_block_doc()
    # redundant parallel switch keeps the system connected when one is damaged
    dup = dict(doc["branches"][-1], id="swdup", damaged=True)
    doc["branches"].append(dup)
    doc["loads"][0]["damaged"] = True
    prob = assemble(parse_toy(doc), toy_config(n_steps=3))
    for t in (1, 2, 3):
        vid = prob.index.get("branch_on", "swdup", "", t)
        assert prob.model.variables[vid].upper == 0.0
        vid = prob.index.get("load_on", doc["loads"][0]["id"], "", t)
        assert prob.model.variables[vid].upper == 0.0


def test_switches_open_at_step_one():
    prob = assemble(parse_toy(two_block_doc()), toy_config(n_steps=2))
    for b in prob.feeder.branches:
        if b.switchable:
            vid = prob.index.get("branch_on", b.id, "", 1)
            assert prob.model.variables[vid].upper == 0.0


def test_three_block_chain_reach_limit():
    """With two steps only the first hop can energize: the far block stays
    dark, matching exhaustive sequence enumeration."""
    rng = np.random.default_rng(5)
    doc = make_toy_feeder(rng, n_blocks=3, name="chain")
    # force a chain 0-1-2
    for br in doc["branches"]:
        if br["id"].startswith("sw"):
            doc["branches"].remove(br)
    doc["branches"] = [b for b in doc["branches"] if not b["id"].startswith("sw")]
    first = [b["id"] for b in doc["nodes"]]
    blocks = {}
    for n in doc["nodes"]:
        blocks.setdefault(n["id"].split("_")[0][1:], []).append(n["id"])
    doc["branches"].append({"id": "sw0_1", "from": blocks["0"][0], "to": blocks["1"][0],
                            "phases": "abc", "switchable": True, "damaged": False,
                            "r_ohm": diag3(0.003), "x_ohm": diag3(0.008)})
    doc["branches"].append({"id": "sw1_2", "from": blocks["1"][0], "to": blocks["2"][0],
                            "phases": "abc", "switchable": True, "damaged": False,
                            "r_ohm": diag3(0.003), "x_ohm": diag3(0.008)})
    # make sure the far block carries load worth reaching
    doc["loads"] = [{
        "id": "far", "node": blocks["2"][0], "phases": "a", "nominal_p_kw": [50.0],
        "nominal_q_kvar": [20.0], "zip": [0.4, 0.3, 0.3], "switchable": True,
        "controllable_dr": True, "damaged": False,
        "dr_min_fraction": 0.0, "dr_max_fraction": 1.0,
    }]
    model = parse_toy(doc)
    cfg = toy_config(n_steps=2)
    prob = assemble(model, cfg)
    res = solve(prob, SolveOptions(gap=1e-9))
    assert res.status == "optimal"
    far_block = prob.graph.block_of(blocks["2"][0])
    vid = prob.index.get("block_on", str(far_block), "", 2)
    assert res.assignment[prob.model.variables[vid].name] == pytest.approx(0.0, abs=1e-6)
    # the enumeration oracle agrees that nothing is restorable in two steps
    from oracles import ToyOracle
    assert ToyOracle(model, cfg, 2).best_objective() == pytest.approx(
        -res.objective_value, abs=1e-9)


def test_table_values_in_rows(ieee123_model):
    """Dispatch windows, forecasts and ramps carry the catalog numbers."""
    cfg = ScenarioConfig(n_steps=3)
    prob = assemble(ieee123_model, cfg)
    m = prob.model
    # droop window at t>=2 scales 1.2 pu (1200 kW) by the previous-step status
    row = next(c for c in m.constraints if c.name == "refP_dg1_hi_t2")
    gate = prob.index.get("der_on", "dg1", "", 1)
    assert row.coeffs[gate] == pytest.approx(-1.2)
    row = next(c for c in m.constraints if c.name == "refQ_dg1_lo_t2")
    assert row.coeffs[gate] == pytest.approx(0.16)  # -(-160 kVAr) in pu
    # at t=1 the startup master is in its synchronization step: zero dispatch
    row = next(c for c in m.constraints if c.name == "refP_dg1_hi_t1")
    assert all(v > 0 for v in row.coeffs.values()) and row.rhs == 0.0
    # non-dispatchable pinned to its forecast: P = 0.08 x
    row = next(c for c in m.constraints if c.name == "fcP_dg6_a_t2")
    x6 = prob.index.get("der_on", "dg6", "", 2)
    assert row.sense == "=" and row.coeffs[x6] == pytest.approx(-0.08)
    # DG1 ramp: |delta P| per step <= 0.6 * 1200 kW = 720 kW
    row = next(c for c in m.constraints if c.name == "rampP_dg1_up_t2")
    assert row.rhs == pytest.approx(0.72)


def test_dr_rows(ieee123_model):
    cfg = ScenarioConfig(n_steps=3)
    prob = assemble(ieee123_model, cfg)
    m = prob.model
    dr = next(l for l in ieee123_model.loads if l.controllable_dr)
    ph = dr.phases[0]
    hi = next(c for c in m.constraints if c.name == f"drPhi_{dr.id}_{ph}_t2")
    x = prob.index.get("load_on", dr.id, "", 2)
    p = prob.index.get("p_load", dr.id, ph, 2)
    assert hi.coeffs[p] == 1.0 and hi.coeffs[x] < 0.0
    pf = next(c for c in m.constraints if c.name == f"drpf_{dr.id}_{ph}_t2")
    q = prob.index.get("q_load", dr.id, ph, 2)
    # ratio row: qmax * P - pmax * Q = 0, i.e. P/pmax = Q/qmax
    k = dr.phases.index(ph)
    ratio = pf.coeffs[p] / -pf.coeffs[q]
    assert ratio == pytest.approx(dr.nominal_q[k] / dr.nominal_p[k])
    mono = next(c for c in m.constraints if c.name == f"drmonoP_{dr.id}_{ph}_t3")
    assert mono.sense == GREATER


def test_power_factor_ratio_forced():
    # pmax 100, qmax 50: serving 60 kW forces 30 kVAr
    doc = two_block_doc()
    doc["loads"] = [{
        "id": "dr1", "node": doc["nodes"][0]["id"], "phases": "a",
        "nominal_p_kw": [100.0], "nominal_q_kvar": [50.0], "zip": [0.4, 0.3, 0.3],
        "switchable": True, "controllable_dr": True, "damaged": False,
        "dr_min_fraction": 0.0, "dr_max_fraction": 1.0,
    }]
    prob = assemble(parse_toy(doc), toy_config(n_steps=2))
    row = next(c for c in prob.model.constraints if c.name == "drpf_dr1_a_t2")
    p = prob.index.get("p_load", "dr1", "a", 2)
    q = prob.index.get("q_load", "dr1", "a", 2)
    values = np.zeros(prob.model.n_variables)
    values[p], values[q] = 0.06, 0.03
    assert prob.model.constraint_violation(row, values) <= 1e-12
    values[q] = 0.029
    assert prob.model.constraint_violation(row, values) > 1e-9


def test_unbalance_rows_vacuous_when_off():
    prob = assemble(parse_toy(two_block_doc()), toy_config(n_steps=2))
    assert not any(c.name.startswith("unb") for c in prob.model.constraints)


def test_unbalance_limit_vs_subset_enumeration():
    """Non-DR switchable loads under a pairwise cap: the MILP picks the best
    subset, cross-checked against brute force over all subsets."""
    loads = [("a", 30.0), ("b", 30.0), ("c", 30.0), ("a", 50.0)]
    doc = {
        "name": "lopsided", "base_frequency_hz": 60.0, "step_interval_s": 1.0,
        "base_mva_per_phase": 1.0,
        "nodes": [{"id": "hub", "phases": "abc", "base_kv_ln": 2.4}],
        "branches": [],
        "ders": [{"id": "g", "node": "hub", "kind": "droop", "black_start": True,
                  "damaged": False, "phases": "abc", "p_min_kw": 0.0, "p_max_kw": 500.0,
                  "q_min_kvar": -100.0, "q_max_kvar": 300.0, "ramp_fraction": 1.0}],
        "loads": [
            {"id": f"s{i}", "node": "hub", "phases": ph, "nominal_p_kw": [p],
             "nominal_q_kvar": [p * 0.4], "zip": [0.4, 0.3, 0.3],
             "switchable": True, "controllable_dr": False, "damaged": False}
            for i, (ph, p) in enumerate(loads)
        ],
    }
    limit = 1.0
    cfg = ScenarioConfig(n_steps=2, v_min=0.8, v_max=1.2, angle_deviation_limit_deg=30.0,
                         load_unbalance_limit=limit, optimality_gap=1e-9)
    model = parse_feeder(json.dumps(doc))
    prob = assemble(model, cfg)
    res = solve(prob, SolveOptions(gap=1e-9))
    assert res.status == "optimal"

    import itertools
    best = 0.0
    for bits in itertools.product((0, 1), repeat=len(loads)):
        by = {"a": 0.0, "b": 0.0, "c": 0.0}
        for bit, (ph, p) in zip(bits, loads):
            by[ph] += bit * p
        cap = limit * sum(by.values()) / 3.0
        diffs = [abs(by["a"] - by["b"]), abs(by["b"] - by["c"]), abs(by["c"] - by["a"])]
        if max(diffs) <= cap + 1e-9:
            best = max(best, sum(by.values()))
    assert best == pytest.approx(110.0)
    served_kw = -res.objective_value * 1000.0  # one productive step, dt = 1
    assert served_kw == pytest.approx(best, rel=1e-6)


def test_lp_artifact_deterministic(thirteen_model):
    from gridrestore.milp import export_lp
    a = export_lp(assemble(thirteen_model, ScenarioConfig(n_steps=3)).model)
    b = export_lp(assemble(thirteen_model, ScenarioConfig(n_steps=3)).model)
    assert a == b


def test_variable_count_linear_in_steps(thirteen_model):
    counts = {}
    for t in (3, 4, 5, 6):
        prob = assemble(thirteen_model, ScenarioConfig(n_steps=t))
        counts[t] = prob.model.n_variables
    d1 = counts[4] - counts[3]
    assert counts[5] - counts[4] == d1
    assert counts[6] - counts[5] == d1
    assert d1 > 0


def test_default_steps_use_generous_estimate(ieee123_model):
    prob = assemble(ieee123_model, ScenarioConfig(n_steps=None))
    assert prob.n_steps == 7


def test_provenance_complete(thirteen_model):
    prob = assemble(thirteen_model, ScenarioConfig(n_steps=3))
    assert set(prob.provenance) == {c.name for c in prob.model.constraints}
    report = prob.provenance_report()
    for family in ("current-balance", "startup-unique", "sync-freeze-loads",
                   "dr-range", "ramp-rate", "voltage-sector"):
        assert family in report


def test_big_m_audit_clean(thirteen_model):
    prob = assemble(thirteen_model, ScenarioConfig(n_steps=3))
    assert prob.model.audit_big_m() == []


def test_no_polygon_rows_when_ampacity_off(ieee123_model):
    prob = assemble(ieee123_model, ScenarioConfig(n_steps=2, enforce_ampacity=False))
    assert not any(c.name.startswith("amp_") for c in prob.model.constraints)
    assert not any(c.name.startswith("ohm_") for c in prob.model.constraints)


def test_polygon_rows_when_ampacity_on():
    doc = two_block_doc()
    for b in doc["branches"]:
        b["ampacity_a"] = 400.0
    cfg = ScenarioConfig(n_steps=2, v_min=0.8, v_max=1.2, angle_deviation_limit_deg=30.0,
                         enforce_ampacity=True, polygon_sides=12)
    prob = assemble(parse_toy(doc), cfg)
    amp_rows = [c for c in prob.model.constraints if c.name.startswith("amp_")]
    ohm_rows = [c for c in prob.model.constraints if c.name.startswith("ohm_")]
    assert amp_rows and ohm_rows
    res = solve(prob, SolveOptions(gap=1e-6))
    assert res.status == "optimal"
