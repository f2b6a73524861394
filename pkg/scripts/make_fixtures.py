"""Generate the committed feeder fixtures.

Run from the repo root:  python scripts/make_fixtures.py

Produces, under fixtures/:

* ieee123_blackstart.json -- the modified 123-node feeder used by the case
  studies: substation/regulators/transformer and the adjacent-feeder tie
  stubs are removed, two droop black-start masters are added behind coupling
  inductors at new nodes 2054/2063, three single-phase dispatchable PQ units
  and one non-dispatchable unit replace the spot loads at their host nodes,
  every load is a switchable 0.4/0.3/0.3 ZIP aggregate, ten of them with
  full-range direct load control, and per-phase nominal totals are rescaled
  to (1201, 1074, 1195) kW and (656.1, 626.5, 652.4) kVAr.
* thirteen_node.json -- a small 13-node system with two black-start masters,
  handy for fast end-to-end runs.
* scenario and sweep-spec JSON files for both.

Switch set: the feeder's own sectionalizing switches (13-152, 18-135,
60-160, 97-197) and tie switches (54-94, 151-300) are kept as remote
controlled switches, and seven more RCSs are assumed at 8-13, 13-18, 23-25,
42-44, 60-62, 76-86, 105-108 so that the bus-block graph has twelve blocks
with the black-start blocks at eccentricities 4 and 5.  The script asserts
those numbers before writing anything.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

REPO = Path(__file__).resolve().parents[1]
sys.path.insert(0, str(REPO / "src"))

from gridrestore.feeder import parse_feeder  # noqa: E402
from gridrestore.graphs import analyze_subgraph, connected_subgraphs  # noqa: E402

KV_LN = 2.4018  # 4.16 kV line-to-line
FT_PER_MILE = 5280.0

# overhead/underground phase configurations: phases and R/X ohm-per-mile
# upper triangles in abc order
CONFIGS = {
    1: ("abc", [("aa", 0.4576, 1.0780), ("ab", 0.1560, 0.5017), ("ac", 0.1535, 0.3849),
                ("bb", 0.4666, 1.0482), ("bc", 0.1580, 0.4236), ("cc", 0.4615, 1.0651)]),
    2: ("abc", [("aa", 0.4666, 1.0482), ("ab", 0.1580, 0.4236), ("ac", 0.1560, 0.5017),
                ("bb", 0.4615, 1.0651), ("bc", 0.1535, 0.3849), ("cc", 0.4576, 1.0780)]),
    3: ("abc", [("aa", 0.4615, 1.0651), ("ab", 0.1535, 0.3849), ("ac", 0.1580, 0.4236),
                ("bb", 0.4576, 1.0780), ("bc", 0.1560, 0.5017), ("cc", 0.4666, 1.0482)]),
    4: ("abc", [("aa", 0.4615, 1.0651), ("ab", 0.1580, 0.4236), ("ac", 0.1535, 0.3849),
                ("bb", 0.4666, 1.0482), ("bc", 0.1560, 0.5017), ("cc", 0.4576, 1.0780)]),
    5: ("abc", [("aa", 0.4666, 1.0482), ("ab", 0.1560, 0.5017), ("ac", 0.1580, 0.4236),
                ("bb", 0.4576, 1.0780), ("bc", 0.1535, 0.3849), ("cc", 0.4615, 1.0651)]),
    6: ("abc", [("aa", 0.4576, 1.0780), ("ab", 0.1535, 0.3849), ("ac", 0.1560, 0.5017),
                ("bb", 0.4615, 1.0651), ("bc", 0.1580, 0.4236), ("cc", 0.4666, 1.0482)]),
    7: ("ac", [("aa", 0.4576, 1.0780), ("ac", 0.1535, 0.3849), ("cc", 0.4615, 1.0651)]),
    8: ("ab", [("aa", 0.4576, 1.0780), ("ab", 0.1535, 0.3849), ("bb", 0.4615, 1.0651)]),
    9: ("a", [("aa", 1.3292, 1.3475)]),
    10: ("b", [("bb", 1.3292, 1.3475)]),
    11: ("c", [("cc", 1.3292, 1.3475)]),
    12: ("abc", [("aa", 1.5209, 0.7521), ("ab", 0.5198, 0.2775), ("ac", 0.4924, 0.2157),
                 ("bb", 1.5329, 0.7162), ("bc", 0.5007, 0.2529), ("cc", 1.5209, 0.7521)]),
}

# line segments: (from, to, length_ft, config)
SEGMENTS = [
    (1, 2, 175, 10), (1, 3, 250, 11), (1, 7, 300, 1),
    (3, 4, 200, 11), (3, 5, 325, 11), (5, 6, 250, 11),
    (7, 8, 200, 1), (8, 12, 225, 10), (8, 9, 225, 9), (8, 13, 300, 1),
    (9, 14, 425, 9), (13, 34, 150, 11), (13, 18, 825, 2),
    (14, 10, 250, 9), (14, 11, 250, 9),
    (15, 16, 375, 11), (15, 17, 350, 11),
    (18, 19, 250, 9), (18, 21, 300, 2), (19, 20, 325, 9),
    (21, 22, 525, 10), (21, 23, 250, 2), (23, 24, 550, 11), (23, 25, 275, 2),
    (25, 26, 350, 7), (25, 28, 200, 2), (26, 27, 275, 7), (26, 31, 225, 11),
    (27, 33, 500, 9), (28, 29, 300, 2), (29, 30, 350, 2), (30, 250, 200, 2),
    (31, 32, 300, 11), (34, 15, 100, 11),
    (35, 36, 650, 8), (35, 40, 250, 1), (36, 37, 300, 9), (36, 38, 250, 10),
    (38, 39, 325, 10), (40, 41, 325, 11), (40, 42, 250, 1),
    (42, 43, 500, 10), (42, 44, 200, 1), (44, 45, 200, 9), (44, 47, 250, 1),
    (45, 46, 300, 9), (47, 48, 150, 4), (47, 49, 250, 4), (49, 50, 250, 4),
    (50, 51, 250, 4), (51, 151, 500, 1),
    (52, 53, 200, 1), (53, 54, 125, 1), (54, 55, 275, 1), (54, 57, 350, 3),
    (55, 56, 275, 1), (57, 58, 250, 10), (57, 60, 750, 3), (58, 59, 250, 10),
    (60, 61, 550, 5), (60, 62, 250, 12), (62, 63, 175, 12), (63, 64, 350, 12),
    (64, 65, 425, 12), (65, 66, 325, 12),
    (67, 68, 200, 9), (67, 72, 275, 3), (67, 97, 250, 3),
    (68, 69, 275, 9), (69, 70, 325, 9), (70, 71, 275, 9),
    (72, 73, 275, 11), (72, 76, 200, 3), (73, 74, 350, 11), (74, 75, 400, 11),
    (76, 77, 400, 6), (76, 86, 700, 3), (77, 78, 100, 6), (78, 79, 225, 6),
    (78, 80, 475, 6), (80, 81, 475, 6), (81, 82, 250, 6), (81, 84, 675, 11),
    (82, 83, 250, 6), (84, 85, 475, 11),
    (86, 87, 450, 6), (87, 88, 175, 9), (87, 89, 275, 6), (89, 90, 225, 10),
    (89, 91, 225, 6), (91, 92, 300, 11), (91, 93, 225, 6), (93, 94, 275, 9),
    (93, 95, 300, 6), (95, 96, 200, 10),
    (97, 98, 275, 3), (98, 99, 550, 3), (99, 100, 300, 3), (100, 450, 800, 3),
    (101, 102, 225, 11), (101, 105, 275, 3), (102, 103, 325, 11), (103, 104, 700, 11),
    (105, 106, 225, 10), (105, 108, 325, 3), (106, 107, 575, 10),
    (108, 109, 450, 9), (108, 300, 1000, 3), (109, 110, 300, 9),
    (110, 111, 575, 9), (110, 112, 125, 9), (112, 113, 525, 9), (113, 114, 325, 9),
    (135, 35, 375, 4), (149, 1, 400, 1), (152, 52, 400, 1),
    (160, 67, 350, 6), (197, 101, 250, 3),
]

# remote controlled switches: the feeder's own sectionalizers and ties plus
# assumed extra RCSs; these define the bus-block reduction
SWITCHES = [
    (13, 152), (18, 135), (60, 160), (97, 197),  # sectionalizing
    (54, 94), (151, 300),                        # ties
    (8, 13), (13, 18), (23, 25), (42, 44), (60, 62), (76, 86), (105, 108),
]
EXTRA_SWITCH_SEGMENTS = [(13, 152), (18, 135), (60, 160), (97, 197), (54, 94), (151, 300)]
SWITCH_Z_OHM = (0.05, 0.05)  # short jumper impedance per phase

# spot loads: node -> ((pa, qa), (pb, qb), (pc, qc)) kW/kVAr before rescaling;
# the four loads at the PQ-unit host nodes (34, 46, 59, 68) are removed
SPOT_LOADS = {
    1: (40, 20, 0, 0, 0, 0), 2: (0, 0, 20, 10, 0, 0), 4: (0, 0, 0, 0, 40, 20),
    5: (0, 0, 0, 0, 20, 10), 6: (0, 0, 0, 0, 40, 20), 7: (20, 10, 0, 0, 0, 0),
    9: (40, 20, 0, 0, 0, 0), 10: (20, 10, 0, 0, 0, 0), 11: (40, 20, 0, 0, 0, 0),
    12: (0, 0, 20, 10, 0, 0), 16: (0, 0, 0, 0, 40, 20), 17: (0, 0, 0, 0, 20, 10),
    19: (40, 20, 0, 0, 0, 0), 20: (40, 20, 0, 0, 0, 0), 22: (0, 0, 40, 20, 0, 0),
    24: (0, 0, 0, 0, 40, 20), 28: (40, 20, 0, 0, 0, 0), 29: (40, 20, 0, 0, 0, 0),
    30: (0, 0, 0, 0, 40, 20), 31: (0, 0, 0, 0, 20, 10), 32: (0, 0, 0, 0, 20, 10),
    33: (40, 20, 0, 0, 0, 0), 35: (40, 20, 0, 0, 0, 0), 37: (40, 20, 0, 0, 0, 0),
    38: (0, 0, 20, 10, 0, 0), 39: (0, 0, 20, 10, 0, 0), 41: (0, 0, 0, 0, 20, 10),
    42: (20, 10, 0, 0, 0, 0), 43: (0, 0, 40, 20, 0, 0), 45: (20, 10, 0, 0, 0, 0),
    47: (35, 25, 35, 25, 35, 25), 48: (70, 50, 70, 50, 70, 50),
    49: (35, 25, 70, 50, 35, 20), 50: (0, 0, 0, 0, 40, 20), 51: (20, 10, 0, 0, 0, 0),
    52: (40, 20, 0, 0, 0, 0), 53: (40, 20, 0, 0, 0, 0), 55: (20, 10, 0, 0, 0, 0),
    56: (0, 0, 20, 10, 0, 0), 58: (0, 0, 20, 10, 0, 0), 60: (20, 10, 0, 0, 0, 0),
    62: (0, 0, 0, 0, 40, 20), 63: (40, 20, 0, 0, 0, 0), 64: (0, 0, 75, 35, 0, 0),
    65: (35, 25, 35, 25, 70, 50), 66: (0, 0, 0, 0, 75, 35),
    69: (40, 20, 0, 0, 0, 0), 70: (20, 10, 0, 0, 0, 0), 71: (40, 20, 0, 0, 0, 0),
    73: (0, 0, 0, 0, 40, 20), 74: (0, 0, 0, 0, 40, 20), 75: (0, 0, 0, 0, 40, 20),
    76: (105, 80, 70, 50, 70, 50), 77: (0, 0, 40, 20, 0, 0), 79: (40, 20, 0, 0, 0, 0),
    80: (0, 0, 40, 20, 0, 0), 82: (40, 20, 0, 0, 0, 0), 83: (0, 0, 0, 0, 20, 10),
    84: (0, 0, 0, 0, 20, 10), 85: (0, 0, 0, 0, 40, 20), 86: (0, 0, 20, 10, 0, 0),
    87: (0, 0, 40, 20, 0, 0), 88: (40, 20, 0, 0, 0, 0), 90: (0, 0, 40, 20, 0, 0),
    92: (0, 0, 0, 0, 40, 20), 94: (40, 20, 0, 0, 0, 0), 95: (0, 0, 20, 10, 0, 0),
    96: (0, 0, 20, 10, 0, 0), 98: (40, 20, 0, 0, 0, 0), 99: (0, 0, 40, 20, 0, 0),
    100: (0, 0, 0, 0, 40, 20), 102: (0, 0, 0, 0, 20, 10), 103: (0, 0, 0, 0, 40, 20),
    104: (0, 0, 0, 0, 40, 20), 106: (0, 0, 40, 20, 0, 0), 107: (0, 0, 40, 20, 0, 0),
    109: (40, 20, 0, 0, 0, 0), 111: (20, 10, 0, 0, 0, 0), 112: (20, 10, 0, 0, 0, 0),
    113: (40, 20, 0, 0, 0, 0), 114: (20, 10, 0, 0, 0, 0),
}

TARGET_P = {"a": 1201.0, "b": 1074.0, "c": 1195.0}
TARGET_Q = {"a": 656.1, "b": 626.5, "c": 652.4}

DR_NODES = {1, 47, 48, 49, 64, 65, 66, 76, 87, 109}
ZIP = [0.4, 0.3, 0.3]


def build_matrix(cfg: int, length_ft: float):
    phases, entries = CONFIGS[cfg]
    scale = length_ft / FT_PER_MILE
    r = [[0.0] * 3 for _ in range(3)]
    x = [[0.0] * 3 for _ in range(3)]
    order = "abc"
    for key, rr, xx in entries:
        i, j = order.index(key[0]), order.index(key[1])
        r[i][j] = r[j][i] = rr * scale
        x[i][j] = x[j][i] = xx * scale
    return phases, r, x


def switch_matrix(phases: str):
    r = [[0.0] * 3 for _ in range(3)]
    x = [[0.0] * 3 for _ in range(3)]
    for p in phases:
        i = "abc".index(p)
        r[i][i], x[i][i] = SWITCH_Z_OHM
    return r, x


def build_ieee123() -> dict:
    switch_pairs = {frozenset(s) for s in SWITCHES}
    node_phases: dict[str, set[str]] = {}

    branches = []
    for a, b, length, cfg in SEGMENTS:
        phases, r, x = build_matrix(cfg, length)
        pair = frozenset((a, b))
        branches.append({
            "id": f"l{a}_{b}", "from": str(a), "to": str(b), "phases": phases,
            "switchable": pair in switch_pairs, "damaged": False,
            "r_ohm": r, "x_ohm": x,
        })
        for n in (a, b):
            node_phases.setdefault(str(n), set()).update(phases)
    for a, b in EXTRA_SWITCH_SEGMENTS:
        pa = node_phases.get(str(a), set("abc"))
        pb = node_phases.get(str(b), set("abc"))
        phases = "".join(p for p in "abc" if p in (pa & pb)) or "abc"
        r, x = switch_matrix(phases)
        branches.append({
            "id": f"sw{a}_{b}", "from": str(a), "to": str(b), "phases": phases,
            "switchable": True, "damaged": False, "r_ohm": r, "x_ohm": x,
        })
        for n in (a, b):
            node_phases.setdefault(str(n), set()).update(phases)

    # droop masters behind their coupling inductors (0.3 pu on 1 MVA/phase)
    z_base = KV_LN * KV_LN / 1.0
    x_cpl = 0.3 * z_base
    for host, new in ((54, 2054), (63, 2063)):
        x = [[0.0] * 3 for _ in range(3)]
        for i in range(3):
            x[i][i] = x_cpl
        branches.append({
            "id": f"cpl{new}", "from": str(host), "to": str(new), "phases": "abc",
            "switchable": False, "damaged": False,
            "r_ohm": [[0.0] * 3 for _ in range(3)], "x_ohm": x,
        })
        node_phases[str(new)] = set("abc")
        node_phases[str(host)].update("abc")

    # rescale loads so per-phase nominal totals match the case-study values
    raw_p = {"a": 0.0, "b": 0.0, "c": 0.0}
    raw_q = {"a": 0.0, "b": 0.0, "c": 0.0}
    for vals in SPOT_LOADS.values():
        for k, ph in enumerate("abc"):
            raw_p[ph] += vals[2 * k]
            raw_q[ph] += vals[2 * k + 1]
    scale_p = {ph: TARGET_P[ph] / raw_p[ph] for ph in "abc"}
    scale_q = {ph: TARGET_Q[ph] / raw_q[ph] for ph in "abc"}

    loads = []
    for node, vals in sorted(SPOT_LOADS.items()):
        phases = "".join(ph for k, ph in enumerate("abc") if vals[2 * k] or vals[2 * k + 1])
        p = [round(vals[2 * "abc".index(ph)] * scale_p[ph], 6) for ph in phases]
        q = [round(vals[2 * "abc".index(ph) + 1] * scale_q[ph], 6) for ph in phases]
        loads.append({
            "id": f"ld{node}", "node": str(node), "phases": phases,
            "nominal_p_kw": p, "nominal_q_kvar": q, "zip": ZIP,
            "switchable": True, "controllable_dr": node in DR_NODES, "damaged": False,
            "dr_min_fraction": 0.0, "dr_max_fraction": 1.0,
        })
        node_phases.setdefault(str(node), set()).update(phases)

    ders = [
        {"id": "dg1", "node": "2054", "kind": "droop", "black_start": True, "damaged": False,
         "phases": "abc", "p_min_kw": 0.0, "p_max_kw": 1200.0,
         "q_min_kvar": -160.0, "q_max_kvar": 700.0, "ramp_fraction": 0.6,
         "per_phase_base_mva": 1.0, "coupling_inductor_pu": 0.3},
        {"id": "dg2", "node": "2063", "kind": "droop", "black_start": True, "damaged": False,
         "phases": "abc", "p_min_kw": 0.0, "p_max_kw": 1000.0,
         "q_min_kvar": -120.0, "q_max_kvar": 500.0, "ramp_fraction": 0.6,
         "per_phase_base_mva": 1.0, "coupling_inductor_pu": 0.3},
        {"id": "dg3", "node": "34", "kind": "pq_dispatchable", "black_start": False,
         "damaged": False, "phases": "c", "p_min_kw": 0.0, "p_max_kw": 150.0,
         "q_min_kvar": -20.0, "q_max_kvar": 100.0, "ramp_fraction": 0.6},
        {"id": "dg4", "node": "46", "kind": "pq_dispatchable", "black_start": False,
         "damaged": False, "phases": "a", "p_min_kw": 0.0, "p_max_kw": 130.0,
         "q_min_kvar": -15.0, "q_max_kvar": 70.0, "ramp_fraction": 0.6},
        {"id": "dg5", "node": "59", "kind": "pq_dispatchable", "black_start": False,
         "damaged": False, "phases": "b", "p_min_kw": 0.0, "p_max_kw": 120.0,
         "q_min_kvar": -10.0, "q_max_kvar": 70.0, "ramp_fraction": 0.6},
        {"id": "dg6", "node": "68", "kind": "pq_nondispatchable", "black_start": False,
         "damaged": False, "phases": "a", "p_min_kw": 80.0, "p_max_kw": 80.0,
         "q_min_kvar": 40.0, "q_max_kvar": 40.0, "ramp_fraction": 1.0,
         "forecast": {"p_kw": [[80.0]], "q_kvar": [[40.0]]}},
    ]

    def node_sort_key(nid: str):
        return (len(nid), nid)

    nodes = [
        {"id": nid, "phases": "".join(p for p in "abc" if p in phs), "base_kv_ln": KV_LN}
        for nid, phs in sorted(node_phases.items(), key=lambda kv: node_sort_key(kv[0]))
    ]
    return {
        "name": "ieee123-blackstart",
        "base_frequency_hz": 60.0,
        "step_interval_s": 1.0,
        "base_mva_per_phase": 1.0,
        "nodes": nodes,
        "branches": branches,
        "ders": ders,
        "loads": loads,
    }


def build_thirteen() -> dict:
    """Small two-master system: five blocks in a short tree."""
    z = 0.35  # ohm/1000ft-ish scalar line
    nodes = [{"id": f"d{i}", "phases": "abc", "base_kv_ln": KV_LN} for i in range(1, 14)]

    def line(i, j, switchable=False, scale=1.0):
        r = [[0.0] * 3 for _ in range(3)]
        x = [[0.0] * 3 for _ in range(3)]
        for k in range(3):
            r[k][k] = z * scale * 0.5
            x[k][k] = z * scale
        for k, m in ((0, 1), (0, 2), (1, 2)):
            r[k][m] = r[m][k] = z * scale * 0.15
            x[k][m] = x[m][k] = z * scale * 0.35
        return {"id": ("sw" if switchable else "l") + f"d{i}_{j}", "from": f"d{i}",
                "to": f"d{j}", "phases": "abc", "switchable": switchable,
                "damaged": False, "r_ohm": r, "x_ohm": x}

    branches = [
        line(1, 2), line(2, 3), line(4, 5), line(5, 6), line(7, 8),
        line(9, 10), line(11, 12), line(12, 13),
        line(3, 4, switchable=True), line(6, 7, switchable=True),
        line(8, 9, switchable=True), line(6, 11, switchable=True),
    ]
    # two masters sized so that restoring everything needs both of them
    ders = [
        {"id": "ma", "node": "d1", "kind": "droop", "black_start": True, "damaged": False,
         "phases": "abc", "p_min_kw": 0.0, "p_max_kw": 250.0,
         "q_min_kvar": -60.0, "q_max_kvar": 150.0, "ramp_fraction": 0.6,
         "per_phase_base_mva": 1.0, "coupling_inductor_pu": 0.0},
        {"id": "mb", "node": "d5", "kind": "droop", "black_start": True, "damaged": False,
         "phases": "abc", "p_min_kw": 0.0, "p_max_kw": 250.0,
         "q_min_kvar": -60.0, "q_max_kvar": 150.0, "ramp_fraction": 0.6,
         "per_phase_base_mva": 1.0, "coupling_inductor_pu": 0.0},
        {"id": "pv", "node": "d8", "kind": "pq_nondispatchable", "black_start": False,
         "damaged": False, "phases": "a", "p_min_kw": 30.0, "p_max_kw": 30.0,
         "q_min_kvar": 10.0, "q_max_kvar": 10.0, "ramp_fraction": 1.0,
         "forecast": {"p_kw": [[30.0]], "q_kvar": [[10.0]]}},
    ]

    def load(i, phases, p, q, dr=False):
        return {"id": f"z{i}", "node": f"d{i}", "phases": phases,
                "nominal_p_kw": p, "nominal_q_kvar": q, "zip": ZIP,
                "switchable": True, "controllable_dr": dr, "damaged": False,
                "dr_min_fraction": 0.0, "dr_max_fraction": 1.0}

    loads = [
        load(2, "abc", [30.0, 25.0, 28.0], [12.0, 10.0, 11.0]),
        load(3, "a", [40.0], [16.0]),
        load(5, "b", [45.0], [18.0], dr=True),
        load(6, "abc", [20.0, 20.0, 20.0], [8.0, 8.0, 8.0]),
        load(8, "c", [50.0], [20.0]),
        load(10, "ab", [25.0, 25.0], [10.0, 10.0], dr=True),
        load(12, "abc", [35.0, 30.0, 32.0], [14.0, 12.0, 13.0]),
        load(13, "c", [30.0], [12.0]),
    ]
    return {
        "name": "thirteen-node",
        "base_frequency_hz": 60.0,
        "step_interval_s": 1.0,
        "base_mva_per_phase": 1.0,
        "nodes": nodes,
        "branches": branches,
        "ders": ders,
        "loads": loads,
    }


def main() -> int:
    out = REPO / "fixtures"
    out.mkdir(exist_ok=True)

    doc = build_ieee123()
    text = json.dumps(doc, indent=1)
    model = parse_feeder(text)
    subs = connected_subgraphs(model)
    assert len(subs) == 1, f"feeder must be connected, got {len(subs)} components"
    graph, est = analyze_subgraph(subs[0])
    print(f"ieee123: {len(model.nodes)} nodes, {len(model.branches)} branches, "
          f"{len(model.loads)} loads, {len(graph.blocks)} blocks, {len(graph.edges)} switches")
    print(f"ieee123: rsr={est.rsr} rsd={est.rsd} conservative={est.conservative} "
          f"generous={est.generous}")
    totals_p = {"a": 0.0, "b": 0.0, "c": 0.0}
    totals_q = {"a": 0.0, "b": 0.0, "c": 0.0}
    for l in model.loads:
        for k, ph in enumerate(l.phases):
            totals_p[ph] += l.nominal_p[k]
            totals_q[ph] += l.nominal_q[k]
    print("ieee123 load totals kW:", {k: round(v, 3) for k, v in totals_p.items()},
          "sum", round(sum(totals_p.values()), 3))
    print("ieee123 load totals kVAr:", {k: round(v, 3) for k, v in totals_q.items()},
          "sum", round(sum(totals_q.values()), 3))
    assert est.rsr == 4 and est.rsd == 5, "fixture switch set must give rsr=4, rsd=5"
    assert len(model.loads) == 81
    (out / "ieee123_blackstart.json").write_text(text)

    doc13 = build_thirteen()
    model13 = parse_feeder(json.dumps(doc13, indent=1))
    graph13, est13 = analyze_subgraph(model13)
    print(f"thirteen: {len(graph13.blocks)} blocks, rsr={est13.rsr} rsd={est13.rsd} "
          f"-> steps {est13.conservative}/{est13.generous}")
    (out / "thirteen_node.json").write_text(json.dumps(doc13, indent=1))

    scenarios = {
        "ieee123_scenario.json": {
            "v_min": 0.95, "v_max": 1.05, "angle_deviation_limit_deg": 15.0,
            "load_unbalance_limit": 1.0, "dg_phase_unbalance_limit": 1.0,
            "optimality_gap": 0.01, "solver_time_limit_s": 1800.0,
            "enforce_ampacity": False, "polygon_sides": 12,
        },
        "thirteen_scenario.json": {
            "v_min": 0.95, "v_max": 1.05, "angle_deviation_limit_deg": 15.0,
            "optimality_gap": 0.001, "solver_time_limit_s": 300.0,
            "enforce_ampacity": False, "polygon_sides": 12,
        },
    }
    sweeps = {
        "sweep_dr.json": {"parameter": "dr_lower_bound_factor", "values": [0.0, 0.25, 0.5, 0.75, 1.0]},
        "sweep_steps.json": {"parameter": "n_steps", "values": [4, 5, 6, 7, 9]},
        "sweep_capacity.json": {"parameter": "nondispatchable_capacity_factor",
                                "values": [0.25, 1.0, 2.0, 4.0, 8.0, 16.0]},
    }
    for name, payload in {**scenarios, **sweeps}.items():
        (out / name).write_text(json.dumps(payload, indent=1))
    print(f"wrote fixtures to {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
