import json
import math
from pathlib import Path

import numpy as np
import pytest

from gridrestore.feeder import ScenarioConfig, parse_feeder

REPO = Path(__file__).resolve().parents[1]
FIXTURES = REPO / "fixtures"


@pytest.fixture(scope="session")
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture(scope="session")
def ieee123_model():
    from gridrestore.feeder import load_feeder
    return load_feeder(str(FIXTURES / "ieee123_blackstart.json"))


@pytest.fixture(scope="session")
def thirteen_model():
    from gridrestore.feeder import load_feeder
    return load_feeder(str(FIXTURES / "thirteen_node.json"))


def diag3(value: float) -> list:
    m = [[0.0] * 3 for _ in range(3)]
    for i in range(3):
        m[i][i] = value
    return m


def toy_config(n_steps: int = 3, gap: float = 1e-9) -> ScenarioConfig:
    """Wide-open electrical limits so only the power constraints bind."""
    return ScenarioConfig(
        n_steps=n_steps, v_min=0.8, v_max=1.2, angle_deviation_limit_deg=30.0,
        optimality_gap=gap, solver_time_limit_s=120.0,
    )


def make_toy_feeder(rng: np.random.Generator, n_blocks: int = 4, two_masters: bool = False,
                    with_pq: bool = False, name: str = "toy") -> dict:
    """Random small block-tree feeder for enumeration cross-checks.

    Every load is a full-range direct-control ZIP aggregate and impedances
    are tiny, so given an energization sequence the continuous dispatch is a
    plain LP (the enumeration oracle exploits this).
    """
    n_blocks = max(2, n_blocks)
    nodes = []
    branches = []
    block_nodes: list[list[str]] = []
    for b in range(n_blocks):
        size = int(rng.integers(1, 3))
        ids = [f"n{b}_{k}" for k in range(size)]
        block_nodes.append(ids)
        for nid in ids:
            nodes.append({"id": nid, "phases": "abc", "base_kv_ln": 2.4018})
        for k in range(1, size):
            branches.append({
                "id": f"in{b}_{k}", "from": ids[k - 1], "to": ids[k], "phases": "abc",
                "switchable": False, "damaged": False,
                "r_ohm": diag3(0.002), "x_ohm": diag3(0.006),
            })
    # random tree of switches over the blocks
    for b in range(1, n_blocks):
        parent = int(rng.integers(0, b))
        branches.append({
            "id": f"sw{parent}_{b}",
            "from": block_nodes[parent][0], "to": block_nodes[b][0], "phases": "abc",
            "switchable": True, "damaged": False,
            "r_ohm": diag3(0.003), "x_ohm": diag3(0.008),
        })

    ders = [{
        "id": "m0", "node": block_nodes[0][0], "kind": "droop", "black_start": True,
        "damaged": False, "phases": "abc",
        "p_min_kw": 0.0, "p_max_kw": float(rng.integers(150, 300)),
        "q_min_kvar": -50.0, "q_max_kvar": 200.0,
        "ramp_fraction": float(rng.choice([0.5, 0.75, 1.0])),
        "per_phase_base_mva": 1.0, "coupling_inductor_pu": 0.0,
    }]
    if two_masters:
        blk = int(rng.integers(1, n_blocks))
        ders.append({
            "id": "m1", "node": block_nodes[blk][0], "kind": "droop", "black_start": True,
            "damaged": False, "phases": "abc",
            "p_min_kw": 0.0, "p_max_kw": float(rng.integers(100, 250)),
            "q_min_kvar": -40.0, "q_max_kvar": 150.0,
            "ramp_fraction": float(rng.choice([0.5, 1.0])),
            "per_phase_base_mva": 1.0, "coupling_inductor_pu": 0.0,
        })
    if with_pq:
        blk = int(rng.integers(0, n_blocks))
        ders.append({
            "id": "pq0", "node": block_nodes[blk][0], "kind": "pq_dispatchable",
            "black_start": False, "damaged": False, "phases": "b",
            "p_min_kw": 0.0, "p_max_kw": float(rng.integers(40, 90)),
            "q_min_kvar": -10.0, "q_max_kvar": 40.0, "ramp_fraction": 1.0,
        })

    loads = []
    n_loads = int(rng.integers(2, 5))
    for i in range(n_loads):
        blk = int(rng.integers(0, n_blocks))
        nid = block_nodes[blk][int(rng.integers(0, len(block_nodes[blk])))]
        phases = str(rng.choice(["a", "b", "c", "abc"]))
        p = [float(rng.integers(20, 80)) for _ in phases]
        q = [round(v * 0.5, 3) for v in p]
        loads.append({
            "id": f"ld{i}", "node": nid, "phases": phases,
            "nominal_p_kw": p, "nominal_q_kvar": q, "zip": [0.4, 0.3, 0.3],
            "switchable": True, "controllable_dr": True, "damaged": False,
            "dr_min_fraction": 0.0, "dr_max_fraction": 1.0,
        })

    return {
        "name": name, "base_frequency_hz": 60.0, "step_interval_s": 1.0,
        "base_mva_per_phase": 1.0, "nodes": nodes, "branches": branches,
        "ders": ders, "loads": loads,
    }


def parse_toy(doc: dict):
    return parse_feeder(json.dumps(doc))
