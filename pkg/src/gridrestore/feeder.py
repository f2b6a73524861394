"""Feeder data model: ingestion, validation, and per-unit normalization.

A feeder document is a single JSON object with top-level arrays ``nodes``,
``branches``, ``ders`` and ``loads``.  In the document all impedances are in
ohms, shunt admittances in siemens, powers in kW/kVAr, voltages in kV
line-to-neutral and angles in degrees; per-unit values exist only inside the
program after :func:`to_per_unit`.  The field-by-field schema is documented in
the README (``Feeder document format``).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from typing import Any, Iterable

import numpy as np

PHASES = "abc"

DER_KINDS = ("droop", "pq_dispatchable", "pq_nondispatchable")


class FeederFormatError(ValueError):
    """Raised when a feeder document violates the schema.

    ``path`` names the offending location, e.g. ``branches[3].from``.
    """

    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}")


@dataclass(frozen=True)
class Node:
    id: str
    phases: str
    base_kv: float  # line-to-neutral kV


@dataclass(frozen=True, eq=False)
class Branch:
    id: str
    from_node: str
    to_node: str
    phases: str
    switchable: bool
    damaged: bool
    impedance: np.ndarray  # 3x3 complex, ohms (or pu), zero-padded
    shunt_admittance: np.ndarray  # 3x3 complex, siemens (or pu)
    ampacity: tuple[float, ...] | None  # per-phase amps (or pu), None = unlimited


@dataclass(frozen=True, eq=False)
class Der:
    id: str
    node: str
    kind: str
    black_start: bool
    damaged: bool
    phases: str
    p_min: float  # kW (or pu); totals over phases for droop, per phase for PQ
    p_max: float
    q_min: float
    q_max: float
    ramp_fraction: float
    per_phase_base_mva: float
    coupling_inductor_pu: float
    forecast_p: np.ndarray | None = None  # (n_steps, n_phases) kW (or pu)
    forecast_q: np.ndarray | None = None

    @property
    def is_droop(self) -> bool:
        return self.kind == "droop"

    @property
    def is_dispatchable(self) -> bool:
        return self.kind in ("droop", "pq_dispatchable")


@dataclass(frozen=True, eq=False)
class Load:
    id: str
    node: str
    phases: str
    nominal_p: tuple[float, ...]  # per phase, kW (or pu); fixed across steps
    nominal_q: tuple[float, ...]
    zip_coefficients: tuple[float, float, float]  # (z, i, p), sum to 1
    switchable: bool
    controllable_dr: bool
    damaged: bool
    dr_min_fraction: float
    dr_max_fraction: float

    def total_p(self) -> float:
        return float(sum(self.nominal_p))


@dataclass(frozen=True, eq=False)
class FeederModel:
    """Immutable description of the microgrid under restoration."""

    nodes: tuple[Node, ...]
    branches: tuple[Branch, ...]
    ders: tuple[Der, ...]
    loads: tuple[Load, ...]
    base_frequency: float  # Hz
    step_interval_s: float
    base_mva_per_phase: float
    is_per_unit: bool = False
    name: str = ""

    def node_map(self) -> dict[str, Node]:
        return {n.id: n for n in self.nodes}

    def branch_map(self) -> dict[str, Branch]:
        return {b.id: b for b in self.branches}

    def alive_branches(self) -> tuple[Branch, ...]:
        return tuple(b for b in self.branches if not b.damaged)

    def phase_nodes(self) -> list[tuple[str, str]]:
        """Deterministic (node id, phase) ordering used everywhere downstream."""
        return [(n.id, ph) for n in self.nodes for ph in n.phases]


@dataclass(frozen=True)
class Violation:
    code: str
    subject: str
    message: str


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple[Violation, ...]

    @property
    def ok(self) -> bool:
        return not self.violations

    def __str__(self) -> str:
        if self.ok:
            return "valid"
        return "\n".join(f"[{v.code}] {v.subject}: {v.message}" for v in self.violations)


@dataclass(frozen=True)
class ScenarioConfig:
    """Planner settings for one restoration study."""

    n_steps: int | None = None  # None: use the generous graph estimate
    big_m: float | None = None  # None: derive from variable bounds
    polygon_sides: int = 12
    v_min: float = 0.95
    v_max: float = 1.05
    angle_deviation_limit_deg: float = 15.0
    load_unbalance_limit: float = math.inf
    dg_phase_unbalance_limit: float = math.inf
    optimality_gap: float = 0.01
    solver_time_limit_s: float = 600.0
    enforce_ampacity: bool = False

    def check(self) -> None:
        if self.n_steps is not None and self.n_steps < 1:
            raise ValueError("n_steps must be >= 1")
        if self.polygon_sides < 6:
            raise ValueError("polygon_sides must be >= 6")
        if not (0.0 < self.v_min < self.v_max):
            raise ValueError("need 0 < v_min < v_max")
        if not (0.0 < self.angle_deviation_limit_deg < 90.0):
            raise ValueError("angle_deviation_limit_deg must be in (0, 90)")
        if self.optimality_gap < 0:
            raise ValueError("optimality_gap must be >= 0")


# ---------------------------------------------------------------------------
# document parsing


def _expect_keys(obj: dict, path: str, required: Iterable[str], optional: Iterable[str] = ()):
    req = set(required)
    allowed = req | set(optional)
    missing = req - obj.keys()
    if missing:
        raise FeederFormatError(path, f"missing field(s): {', '.join(sorted(missing))}")
    unknown = obj.keys() - allowed
    if unknown:
        raise FeederFormatError(path, f"unknown field(s): {', '.join(sorted(unknown))}")


def _as_number(value: Any, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise FeederFormatError(path, f"expected a number, got {value!r}")
    return float(value)


def _as_bool(value: Any, path: str) -> bool:
    if not isinstance(value, bool):
        raise FeederFormatError(path, f"expected true/false, got {value!r}")
    return value


def _as_str(value: Any, path: str) -> str:
    if not isinstance(value, str) or not value:
        raise FeederFormatError(path, f"expected a non-empty string, got {value!r}")
    return value


def _as_phases(value: Any, path: str) -> str:
    s = _as_str(value, path)
    if any(c not in PHASES for c in s) or len(set(s)) != len(s):
        raise FeederFormatError(path, f"phases must be a subset of 'abc', got {value!r}")
    return "".join(p for p in PHASES if p in s)  # canonical order


def _as_matrix3(value: Any, path: str) -> np.ndarray:
    arr = np.zeros((3, 3))
    if not isinstance(value, list) or len(value) != 3:
        raise FeederFormatError(path, "expected a 3x3 matrix (list of 3 rows)")
    for i, row in enumerate(value):
        if not isinstance(row, list) or len(row) != 3:
            raise FeederFormatError(f"{path}[{i}]", "expected a row of 3 numbers")
        for j, x in enumerate(row):
            arr[i, j] = _as_number(x, f"{path}[{i}][{j}]")
    return arr


def _phase_vector(value: Any, phases: str, path: str) -> tuple[float, ...]:
    if not isinstance(value, list) or len(value) != len(phases):
        raise FeederFormatError(path, f"expected {len(phases)} values (one per phase '{phases}')")
    return tuple(_as_number(x, f"{path}[{i}]") for i, x in enumerate(value))


def _parse_node(obj: Any, path: str) -> Node:
    if not isinstance(obj, dict):
        raise FeederFormatError(path, "expected an object")
    _expect_keys(obj, path, ["id", "phases", "base_kv_ln"])
    return Node(
        id=_as_str(obj["id"], f"{path}.id"),
        phases=_as_phases(obj["phases"], f"{path}.phases"),
        base_kv=_as_number(obj["base_kv_ln"], f"{path}.base_kv_ln"),
    )


def _parse_branch(obj: Any, path: str) -> Branch:
    if not isinstance(obj, dict):
        raise FeederFormatError(path, "expected an object")
    _expect_keys(
        obj,
        path,
        ["id", "from", "to", "phases", "switchable", "damaged", "r_ohm", "x_ohm"],
        ["shunt_g_s", "shunt_b_s", "ampacity_a"],
    )
    phases = _as_phases(obj["phases"], f"{path}.phases")
    r = _as_matrix3(obj["r_ohm"], f"{path}.r_ohm")
    x = _as_matrix3(obj["x_ohm"], f"{path}.x_ohm")
    if any(r[PHASES.index(p), PHASES.index(p)] < 0 for p in phases):
        raise FeederFormatError(f"{path}.r_ohm", "negative series resistance on a present phase")
    g = _as_matrix3(obj["shunt_g_s"], f"{path}.shunt_g_s") if "shunt_g_s" in obj else np.zeros((3, 3))
    b = _as_matrix3(obj["shunt_b_s"], f"{path}.shunt_b_s") if "shunt_b_s" in obj else np.zeros((3, 3))
    amp = None
    if "ampacity_a" in obj and obj["ampacity_a"] is not None:
        raw = obj["ampacity_a"]
        if isinstance(raw, list):
            amp = _phase_vector(raw, phases, f"{path}.ampacity_a")
        else:
            amp = tuple([_as_number(raw, f"{path}.ampacity_a")] * len(phases))
    z = r + 1j * x
    z.setflags(write=False)
    ysh = g + 1j * b
    ysh.setflags(write=False)
    return Branch(
        id=_as_str(obj["id"], f"{path}.id"),
        from_node=_as_str(obj["from"], f"{path}.from"),
        to_node=_as_str(obj["to"], f"{path}.to"),
        phases=phases,
        switchable=_as_bool(obj["switchable"], f"{path}.switchable"),
        damaged=_as_bool(obj["damaged"], f"{path}.damaged"),
        impedance=z,
        shunt_admittance=ysh,
        ampacity=amp,
    )


def _parse_forecast(obj: Any, phases: str, path: str) -> tuple[np.ndarray, np.ndarray]:
    if not isinstance(obj, dict):
        raise FeederFormatError(path, "expected an object with p_kw / q_kvar series")
    _expect_keys(obj, path, ["p_kw", "q_kvar"])
    out = []
    for key in ("p_kw", "q_kvar"):
        series = obj[key]
        if not isinstance(series, list) or not series:
            raise FeederFormatError(f"{path}.{key}", "expected a non-empty list of per-step rows")
        rows = [_phase_vector(row, phases, f"{path}.{key}[{t}]") for t, row in enumerate(series)]
        arr = np.array(rows, dtype=float)
        arr.setflags(write=False)
        out.append(arr)
    return out[0], out[1]


def _parse_der(obj: Any, path: str) -> Der:
    if not isinstance(obj, dict):
        raise FeederFormatError(path, "expected an object")
    _expect_keys(
        obj,
        path,
        ["id", "node", "kind", "black_start", "damaged", "phases",
         "p_min_kw", "p_max_kw", "q_min_kvar", "q_max_kvar", "ramp_fraction"],
        ["per_phase_base_mva", "coupling_inductor_pu", "forecast"],
    )
    kind = _as_str(obj["kind"], f"{path}.kind")
    if kind not in DER_KINDS:
        raise FeederFormatError(f"{path}.kind", f"must be one of {DER_KINDS}, got {kind!r}")
    phases = _as_phases(obj["phases"], f"{path}.phases")
    fc_p = fc_q = None
    if "forecast" in obj and obj["forecast"] is not None:
        fc_p, fc_q = _parse_forecast(obj["forecast"], phases, f"{path}.forecast")
    return Der(
        id=_as_str(obj["id"], f"{path}.id"),
        node=_as_str(obj["node"], f"{path}.node"),
        kind=kind,
        black_start=_as_bool(obj["black_start"], f"{path}.black_start"),
        damaged=_as_bool(obj["damaged"], f"{path}.damaged"),
        phases=phases,
        p_min=_as_number(obj["p_min_kw"], f"{path}.p_min_kw"),
        p_max=_as_number(obj["p_max_kw"], f"{path}.p_max_kw"),
        q_min=_as_number(obj["q_min_kvar"], f"{path}.q_min_kvar"),
        q_max=_as_number(obj["q_max_kvar"], f"{path}.q_max_kvar"),
        ramp_fraction=_as_number(obj["ramp_fraction"], f"{path}.ramp_fraction"),
        per_phase_base_mva=_as_number(obj.get("per_phase_base_mva", 1.0), f"{path}.per_phase_base_mva"),
        coupling_inductor_pu=_as_number(obj.get("coupling_inductor_pu", 0.0), f"{path}.coupling_inductor_pu"),
        forecast_p=fc_p,
        forecast_q=fc_q,
    )


def _parse_load(obj: Any, path: str) -> Load:
    if not isinstance(obj, dict):
        raise FeederFormatError(path, "expected an object")
    _expect_keys(
        obj,
        path,
        ["id", "node", "phases", "nominal_p_kw", "nominal_q_kvar", "zip",
         "switchable", "controllable_dr", "damaged"],
        ["dr_min_fraction", "dr_max_fraction"],
    )
    phases = _as_phases(obj["phases"], f"{path}.phases")
    zipc = obj["zip"]
    if not isinstance(zipc, list) or len(zipc) != 3:
        raise FeederFormatError(f"{path}.zip", "expected [z, i, p] fractions")
    return Load(
        id=_as_str(obj["id"], f"{path}.id"),
        node=_as_str(obj["node"], f"{path}.node"),
        phases=phases,
        nominal_p=_phase_vector(obj["nominal_p_kw"], phases, f"{path}.nominal_p_kw"),
        nominal_q=_phase_vector(obj["nominal_q_kvar"], phases, f"{path}.nominal_q_kvar"),
        zip_coefficients=tuple(_as_number(c, f"{path}.zip[{i}]") for i, c in enumerate(zipc)),
        switchable=_as_bool(obj["switchable"], f"{path}.switchable"),
        controllable_dr=_as_bool(obj["controllable_dr"], f"{path}.controllable_dr"),
        damaged=_as_bool(obj["damaged"], f"{path}.damaged"),
        dr_min_fraction=_as_number(obj.get("dr_min_fraction", 0.0), f"{path}.dr_min_fraction"),
        dr_max_fraction=_as_number(obj.get("dr_max_fraction", 1.0), f"{path}.dr_max_fraction"),
    )


def parse_feeder(text: str) -> FeederModel:
    """Parse a feeder document and return a validated :class:`FeederModel`.

    Raises :class:`FeederFormatError` on schema violations (naming the JSON
    path) and on referential problems such as dangling node ids.
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FeederFormatError("$", f"not valid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise FeederFormatError("$", "top level must be an object")
    _expect_keys(
        doc,
        "$",
        ["nodes", "branches", "ders", "loads", "base_frequency_hz", "step_interval_s"],
        ["base_mva_per_phase", "name"],
    )
    for key in ("nodes", "branches", "ders", "loads"):
        if not isinstance(doc[key], list):
            raise FeederFormatError(key, "expected a list")

    model = FeederModel(
        nodes=tuple(_parse_node(o, f"nodes[{i}]") for i, o in enumerate(doc["nodes"])),
        branches=tuple(_parse_branch(o, f"branches[{i}]") for i, o in enumerate(doc["branches"])),
        ders=tuple(_parse_der(o, f"ders[{i}]") for i, o in enumerate(doc["ders"])),
        loads=tuple(_parse_load(o, f"loads[{i}]") for i, o in enumerate(doc["loads"])),
        base_frequency=_as_number(doc["base_frequency_hz"], "base_frequency_hz"),
        step_interval_s=_as_number(doc["step_interval_s"], "step_interval_s"),
        base_mva_per_phase=_as_number(doc.get("base_mva_per_phase", 1.0), "base_mva_per_phase"),
        name=str(doc.get("name", "")),
    )

    # referential integrity is a parse-time error, not a report entry
    ids = {n.id for n in model.nodes}
    for i, b in enumerate(model.branches):
        for end, which in ((b.from_node, "from"), (b.to_node, "to")):
            if end not in ids:
                raise FeederFormatError(f"branches[{i}].{which}", f"references unknown node {end!r}")
    for i, d in enumerate(model.ders):
        if d.node not in ids:
            raise FeederFormatError(f"ders[{i}].node", f"references unknown node {d.node!r}")
    for i, l in enumerate(model.loads):
        if l.node not in ids:
            raise FeederFormatError(f"loads[{i}].node", f"references unknown node {l.node!r}")
    report = validate(model)
    if not report.ok:
        raise FeederFormatError("$", f"document violates model invariants:\n{report}")
    return model


def load_feeder(path: str) -> FeederModel:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_feeder(fh.read())


def serialize_feeder(model: FeederModel) -> str:
    """Inverse of :func:`parse_feeder`; round-trips valid documents field-exactly."""

    def mat(m: np.ndarray) -> list:
        return [[float(v) for v in row] for row in m]

    doc: dict[str, Any] = {
        "name": model.name,
        "base_frequency_hz": model.base_frequency,
        "step_interval_s": model.step_interval_s,
        "base_mva_per_phase": model.base_mva_per_phase,
        "nodes": [{"id": n.id, "phases": n.phases, "base_kv_ln": n.base_kv} for n in model.nodes],
        "branches": [],
        "ders": [],
        "loads": [],
    }
    for b in model.branches:
        entry: dict[str, Any] = {
            "id": b.id, "from": b.from_node, "to": b.to_node, "phases": b.phases,
            "switchable": b.switchable, "damaged": b.damaged,
            "r_ohm": mat(b.impedance.real), "x_ohm": mat(b.impedance.imag),
        }
        if np.any(b.shunt_admittance != 0):
            entry["shunt_g_s"] = mat(b.shunt_admittance.real)
            entry["shunt_b_s"] = mat(b.shunt_admittance.imag)
        if b.ampacity is not None:
            entry["ampacity_a"] = list(b.ampacity)
        doc["branches"].append(entry)
    for d in model.ders:
        entry = {
            "id": d.id, "node": d.node, "kind": d.kind, "black_start": d.black_start,
            "damaged": d.damaged, "phases": d.phases,
            "p_min_kw": d.p_min, "p_max_kw": d.p_max,
            "q_min_kvar": d.q_min, "q_max_kvar": d.q_max,
            "ramp_fraction": d.ramp_fraction,
            "per_phase_base_mva": d.per_phase_base_mva,
            "coupling_inductor_pu": d.coupling_inductor_pu,
        }
        if d.forecast_p is not None:
            entry["forecast"] = {
                "p_kw": [list(row) for row in d.forecast_p],
                "q_kvar": [list(row) for row in d.forecast_q],
            }
        doc["ders"].append(entry)
    for l in model.loads:
        doc["loads"].append({
            "id": l.id, "node": l.node, "phases": l.phases,
            "nominal_p_kw": list(l.nominal_p), "nominal_q_kvar": list(l.nominal_q),
            "zip": list(l.zip_coefficients),
            "switchable": l.switchable, "controllable_dr": l.controllable_dr,
            "damaged": l.damaged,
            "dr_min_fraction": l.dr_min_fraction, "dr_max_fraction": l.dr_max_fraction,
        })
    return json.dumps(doc, indent=1)


# ---------------------------------------------------------------------------
# validation


def validate(model: FeederModel) -> ValidationReport:
    """Check every model invariant; returns a report (never raises)."""
    out: list[Violation] = []
    add = lambda code, subject, message: out.append(Violation(code, subject, message))

    if model.base_frequency <= 0:
        add("base", "base_frequency_hz", "must be positive")
    if model.step_interval_s <= 0:
        add("base", "step_interval_s", "time interval between restoration steps must be positive")
    if model.base_mva_per_phase <= 0:
        add("base", "base_mva_per_phase", "per-unit power base must be positive")

    nodes = {}
    for n in model.nodes:
        if n.id in nodes:
            add("dup", f"node {n.id}", "duplicate node id")
        nodes[n.id] = n
        if not n.phases:
            add("node", f"node {n.id}", "phases must be non-empty")
        if n.base_kv <= 0:
            add("node", f"node {n.id}", "base_kv_ln must be positive")

    seen_branch = set()
    for b in model.branches:
        if b.id in seen_branch:
            add("dup", f"branch {b.id}", "duplicate branch id")
        seen_branch.add(b.id)
        if b.from_node == b.to_node:
            add("branch", f"branch {b.id}", "self-loop branch")
        for end in (b.from_node, b.to_node):
            node = nodes.get(end)
            if node is not None and any(p not in node.phases for p in b.phases):
                add("branch", f"branch {b.id}", f"phases {b.phases!r} not all present at node {end}")
        idx = [PHASES.index(p) for p in b.phases]
        sub = b.impedance[np.ix_(idx, idx)]
        if idx and abs(np.linalg.det(sub)) < 1e-30:
            add("branch", f"branch {b.id}", "impedance submatrix for present phases is singular")

    seen_der = set()
    for d in model.ders:
        if d.id in seen_der:
            add("dup", f"der {d.id}", "duplicate der id")
        seen_der.add(d.id)
        node = nodes.get(d.node)
        if node is not None and any(p not in node.phases for p in d.phases):
            add("der", f"der {d.id}", f"phases {d.phases!r} not all present at node {d.node}")
        if not d.phases:
            add("der", f"der {d.id}", "phases must be non-empty")
        if d.p_min > d.p_max:
            add("der", f"der {d.id}", "p_min > p_max")
        if d.q_min > d.q_max:
            add("der", f"der {d.id}", "q_min > q_max")
        if d.black_start and d.kind != "droop":
            add("der", f"der {d.id}", "black-start units must be droop-controlled masters")
        if d.kind == "pq_nondispatchable" and d.forecast_p is None:
            add("der", f"der {d.id}", "non-dispatchable DERs require a forecast series")
        if not (0.0 < d.ramp_fraction <= 1.0):
            add("der", f"der {d.id}", "ramp_fraction must be in (0, 1]")
        if d.per_phase_base_mva <= 0:
            add("der", f"der {d.id}", "per_phase_base_mva must be positive")
        if d.coupling_inductor_pu < 0:
            add("der", f"der {d.id}", "coupling_inductor_pu must be >= 0")

    seen_load = set()
    for l in model.loads:
        if l.id in seen_load:
            add("dup", f"load {l.id}", "duplicate load id")
        seen_load.add(l.id)
        node = nodes.get(l.node)
        if node is not None and any(p not in node.phases for p in l.phases):
            add("load", f"load {l.id}", f"phases {l.phases!r} not all present at node {l.node}")
        z, i, p = l.zip_coefficients
        if any(not (0.0 <= c <= 1.0) for c in (z, i, p)):
            add("load", f"load {l.id}", "zip fractions must each lie in [0, 1]")
        if abs(z + i + p - 1.0) > 1e-9:
            add("load", f"load {l.id}", f"zip fractions must sum to 1, got {z + i + p}")
        if any(v < 0 for v in l.nominal_p):
            add("load", f"load {l.id}", "nominal_p_kw must be >= 0")
        if not (0.0 <= l.dr_min_fraction <= l.dr_max_fraction):
            add("load", f"load {l.id}", "need 0 <= dr_min_fraction <= dr_max_fraction")
        if l.controllable_dr and not l.switchable:
            add("load", f"load {l.id}", "controllable (DR) loads must be switchable")

    return ValidationReport(tuple(out))


# ---------------------------------------------------------------------------
# per-unit conversion


def _z_base_ohm(model: FeederModel, branch: Branch) -> float:
    nodes = model.node_map()
    kv_f = nodes[branch.from_node].base_kv
    kv_t = nodes[branch.to_node].base_kv
    if abs(kv_f - kv_t) > 1e-9 * max(kv_f, kv_t):
        raise ValueError(
            f"branch {branch.id}: endpoint voltage bases differ ({kv_f} vs {kv_t} kV); "
            "transformers are not modeled"
        )
    return kv_f * kv_f / model.base_mva_per_phase


def _i_base_a(model: FeederModel, branch: Branch) -> float:
    kv = model.node_map()[branch.from_node].base_kv
    return model.base_mva_per_phase * 1e3 / kv  # MVA*1e6 / (kV*1e3)


def _scaled(model: FeederModel, power_factor: float, to_pu: bool) -> FeederModel:
    """Shared body of to_per_unit / to_physical; power_factor divides powers."""
    branches = []
    for b in model.branches:
        z_base = _z_base_ohm(model, b)
        i_base = _i_base_a(model, b)
        if not to_pu:
            z_base, i_base = 1.0 / z_base, 1.0 / i_base
        z = b.impedance / z_base
        ysh = b.shunt_admittance * z_base
        z.setflags(write=False)
        ysh.setflags(write=False)
        amp = None if b.ampacity is None else tuple(a / i_base for a in b.ampacity)
        branches.append(replace(b, impedance=z, shunt_admittance=ysh, ampacity=amp))
    ders = []
    for d in model.ders:
        fc_p = fc_q = None
        if d.forecast_p is not None:
            fc_p = d.forecast_p / power_factor
            fc_q = d.forecast_q / power_factor
            fc_p.setflags(write=False)
            fc_q.setflags(write=False)
        ders.append(replace(
            d,
            p_min=d.p_min / power_factor, p_max=d.p_max / power_factor,
            q_min=d.q_min / power_factor, q_max=d.q_max / power_factor,
            forecast_p=fc_p, forecast_q=fc_q,
        ))
    loads = [
        replace(
            l,
            nominal_p=tuple(v / power_factor for v in l.nominal_p),
            nominal_q=tuple(v / power_factor for v in l.nominal_q),
        )
        for l in model.loads
    ]
    return replace(
        model,
        branches=tuple(branches),
        ders=tuple(ders),
        loads=tuple(loads),
        is_per_unit=to_pu,
    )


def to_per_unit(model: FeederModel) -> FeederModel:
    """Rescale the model onto the single system per-unit base.

    Power base is ``base_mva_per_phase`` (per phase); voltage base is each
    node's ``base_kv_ln``.  Document powers are kW/kVAr, so the power divisor
    is ``base_mva_per_phase * 1000``.
    """
    if model.is_per_unit:
        return model
    if model.base_mva_per_phase <= 0:
        raise ValueError("per-unit base must be positive")
    return _scaled(model, model.base_mva_per_phase * 1e3, to_pu=True)


def to_physical(model: FeederModel) -> FeederModel:
    """Inverse of :func:`to_per_unit` (exact up to floating-point rounding)."""
    if not model.is_per_unit:
        return model
    return _scaled(model, 1.0 / (model.base_mva_per_phase * 1e3), to_pu=False)
