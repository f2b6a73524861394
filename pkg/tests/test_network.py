import json

import numpy as np
import pytest

from gridrestore.feeder import parse_feeder
from gridrestore.network import (
    assemble_bus_admittance, branch_admittance, nominal_voltage_profile, phase_node_index,
)
from conftest import diag3


def feeder_doc(nodes, branches):
    return {
        "name": "net", "base_frequency_hz": 60.0, "step_interval_s": 1.0,
        "base_mva_per_phase": 1.0,
        "nodes": nodes, "branches": branches, "ders": [], "loads": [],
    }


def branch(bid, a, b, phases, r, x, switchable=False):
    return {"id": bid, "from": a, "to": b, "phases": phases, "switchable": switchable,
            "damaged": False, "r_ohm": r, "x_ohm": x}


def test_single_phase_branch_admittance():
    doc = feeder_doc(
        [{"id": "u", "phases": "a", "base_kv_ln": 1.0}, {"id": "v", "phases": "a", "base_kv_ln": 1.0}],
        [branch("b", "u", "v", "a", diag3(0.1), diag3(0.2))],
    )
    model = parse_feeder(json.dumps(doc))
    y = branch_admittance(model.branches[0])
    assert y[0, 0] == pytest.approx(1.0 / (0.1 + 0.2j))
    assert y[0, 0] == pytest.approx(2.0 - 4.0j)
    assert np.all(y[1:, :] == 0) and np.all(y[:, 1:] == 0)


def test_diagonal_three_phase_admittance():
    doc = feeder_doc(
        [{"id": "u", "phases": "abc", "base_kv_ln": 1.0}, {"id": "v", "phases": "abc", "base_kv_ln": 1.0}],
        [branch("b", "u", "v", "abc", diag3(0.01), diag3(0.03))],
    )
    model = parse_feeder(json.dumps(doc))
    y = branch_admittance(model.branches[0])
    expect = 1.0 / (0.01 + 0.03j)
    for i in range(3):
        assert y[i, i] == pytest.approx(expect)


def test_coupled_admittance_identity_product(ieee123_model):
    # every 3-phase coupled block must invert its impedance submatrix
    for b in ieee123_model.branches:
        idx = ["abc".index(p) for p in b.phases]
        sub_z = b.impedance[np.ix_(idx, idx)]
        sub_y = branch_admittance(b)[np.ix_(idx, idx)]
        assert np.allclose(sub_y @ sub_z, np.eye(len(idx)), atol=1e-10)


def test_assemble_all_off_is_zero(ieee123_model):
    status = {b.id: 0 for b in ieee123_model.branches}
    adm = assemble_bus_admittance(ieee123_model, status)
    assert np.all(adm.matrix == 0)


def test_assemble_two_node_stamp():
    doc = feeder_doc(
        [{"id": "u", "phases": "a", "base_kv_ln": 1.0}, {"id": "v", "phases": "a", "base_kv_ln": 1.0}],
        [branch("b", "u", "v", "a", diag3(0.1), diag3(0.2))],
    )
    model = parse_feeder(json.dumps(doc))
    adm = assemble_bus_admittance(model)
    y = 1.0 / (0.1 + 0.2j)
    expect = np.array([[y, -y], [-y, y]])
    assert np.allclose(adm.matrix, expect, atol=1e-12)


def test_assemble_matches_stamp_sum_oracle():
    rng = np.random.default_rng(21)
    for _ in range(10):
        n = int(rng.integers(3, 11))
        nodes = [{"id": f"n{i}", "phases": "abc", "base_kv_ln": 1.0} for i in range(n)]
        branches = []
        for i in range(1, n):
            p = int(rng.integers(0, i))
            r = diag3(float(rng.uniform(0.05, 0.3)))
            x = diag3(float(rng.uniform(0.1, 0.6)))
            branches.append(branch(f"b{i}", f"n{p}", f"n{i}", "abc", r, x, switchable=True))
        model = parse_feeder(json.dumps(feeder_doc(nodes, branches)))
        status = {b.id: int(rng.integers(0, 2)) for b in model.branches}
        adm = assemble_bus_admittance(model, status)

        index = phase_node_index(model)
        expect = np.zeros((len(index), len(index)), dtype=complex)
        for b in model.branches:
            if not status[b.id]:
                continue
            y = branch_admittance(b)
            for p in b.phases:
                for q in b.phases:
                    ypq = y["abc".index(p), "abc".index(q)]
                    fi, ti = index[(b.from_node, p)], index[(b.to_node, p)]
                    fj, tj = index[(b.from_node, q)], index[(b.to_node, q)]
                    expect[fi, fj] += ypq
                    expect[ti, tj] += ypq
                    expect[fi, tj] -= ypq
                    expect[ti, fj] -= ypq
        assert np.allclose(adm.matrix, expect, atol=1e-12)


def test_zero_row_sum(ieee123_model):
    adm = assemble_bus_admittance(ieee123_model)
    row_sums = np.abs(adm.matrix.sum(axis=1))
    assert row_sums.max() <= 1e-10


def test_assemble_linear_in_status(ieee123_model):
    branches = [b.id for b in ieee123_model.branches]
    half = set(branches[::2])
    s1 = {b: (1 if b in half else 0) for b in branches}
    s2 = {b: (0 if b in half else 1) for b in branches}
    m1 = assemble_bus_admittance(ieee123_model, s1).matrix
    m2 = assemble_bus_admittance(ieee123_model, s2).matrix
    full = assemble_bus_admittance(ieee123_model).matrix
    assert np.allclose(m1 + m2, full, atol=1e-12)


def test_deterministic_index(ieee123_model):
    i1 = phase_node_index(ieee123_model)
    i2 = phase_node_index(ieee123_model)
    assert list(i1.items()) == list(i2.items())


def test_structural_symmetry(ieee123_model):
    adm = assemble_bus_admittance(ieee123_model)
    assert np.allclose(adm.matrix, adm.matrix.T, atol=1e-12)


def test_nominal_profile(ieee123_model):
    v0 = nominal_voltage_profile(ieee123_model)
    assert np.allclose(np.abs(v0), 1.0)
    index = phase_node_index(ieee123_model)
    for (nid, ph), i in index.items():
        expect = {"a": 0.0, "b": -120.0, "c": 120.0}[ph]
        assert np.degrees(np.angle(v0[i])) == pytest.approx(expect, abs=1e-9)


def test_coordinate_export(ieee123_model):
    adm = assemble_bus_admittance(ieee123_model)
    text = adm.to_coordinate_text()
    lines = [l for l in text.splitlines() if not l.startswith("#")]
    # every line parses to (int, int, float, float)
    for line in lines[:50]:
        r, c, re_, im_ = line.split()
        int(r), int(c), float(re_), float(im_)
    nnz = int(np.count_nonzero(adm.matrix))
    assert len(lines) == nnz
