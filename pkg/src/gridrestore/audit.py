"""Independent verification of restoration plans.

Converts a solver assignment into a :class:`RestorationPlan` and re-checks
every constraint family from raw plan values, deliberately not reusing the
MILP construction code: statuses are checked set-wise, the current balance is
re-evaluated through a freshly assembled admittance matrix and the injection
models' own evaluation methods, and dispatch windows / ramps / freezes /
demand-response rules are recomputed arithmetically.  A formulation bug
therefore cannot certify itself.

The linear balance residual gates the audit; the exact nonlinear residual
(evaluating the true ZIP currents instead of their linearization) is reported
for information only, since the planning model is linear by design.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .feeder import FeederModel, ScenarioConfig, to_per_unit
from .formulation import RestorationProblem, VariableIndex
from .linearize import der_injection, exact_zip_draw, linearize_zip_injection
from .milp import sanitize_name
from .network import assemble_bus_admittance, nominal_phase_voltage
from .solve import SolveResult

GATE_TOL = 1e-6


class PlanError(ValueError):
    pass


@dataclass
class PlanStep:
    step: int
    blocks_on: list[int]
    nodes_on: list[str]
    branches_on: list[str]
    ders_on: list[str]
    loads_on: list[str]
    der_p_kw: dict[str, dict[str, float]]  # der id -> phase -> kW
    der_q_kvar: dict[str, dict[str, float]]
    load_p_kw: dict[str, dict[str, float]]
    load_q_kvar: dict[str, dict[str, float]]
    v_re: dict[str, dict[str, float]]  # node -> phase -> pu
    v_im: dict[str, dict[str, float]]

    def served_p_by_phase(self) -> dict[str, float]:
        out = {"a": 0.0, "b": 0.0, "c": 0.0}
        for per_phase in self.load_p_kw.values():
            for ph, v in per_phase.items():
                out[ph] += v
        return out

    def served_q_by_phase(self) -> dict[str, float]:
        out = {"a": 0.0, "b": 0.0, "c": 0.0}
        for per_phase in self.load_q_kvar.values():
            for ph, v in per_phase.items():
                out[ph] += v
        return out

    def served_p_total(self) -> float:
        return sum(self.served_p_by_phase().values())

    def served_q_total(self) -> float:
        return sum(self.served_q_by_phase().values())


@dataclass
class RestorationPlan:
    feeder_name: str
    n_steps: int
    steps: list[PlanStep]
    objective_kw_steps: float

    def to_json(self) -> str:
        return json.dumps({
            "feeder_name": self.feeder_name,
            "n_steps": self.n_steps,
            "objective_kw_steps": self.objective_kw_steps,
            "steps": [vars(s) for s in self.steps],
        }, indent=1)

    @classmethod
    def from_json(cls, text: str) -> "RestorationPlan":
        doc = json.loads(text)
        return cls(
            feeder_name=doc["feeder_name"],
            n_steps=doc["n_steps"],
            objective_kw_steps=doc["objective_kw_steps"],
            steps=[PlanStep(**s) for s in doc["steps"]],
        )


def extract_plan(result: SolveResult, index: VariableIndex, model: FeederModel,
                 integrality_tol: float = 1e-6) -> RestorationPlan:
    """Threshold binaries at 0.5 (after a strict integrality audit) and pull
    dispatches, set-points and voltages into physical units."""
    if not result.feasible:
        raise PlanError(f"cannot extract a plan from status {result.status!r}")
    values = result.assignment
    # model may be physical or pu; plan powers are stored in kW either way
    s_base_kw = model.base_mva_per_phase * 1e3

    def bit(symbol, element, step) -> int:
        x = values[_name_for(symbol, element, "", step)]
        if abs(x - round(x)) > integrality_tol:
            raise PlanError(f"integrality violation: {symbol} {element} t{step} = {x}")
        return int(round(x))

    n_steps = max((key[3] for key, _ in index.keys()), default=0)
    blocks = sorted({el for (sym, el, _, _), _ in index.keys() if sym == "block_on"}, key=int)
    nodes = [n.id for n in model.nodes]
    branches = [b.id for b in model.branches]
    ders = list(model.ders)
    loads = list(model.loads)

    steps = []
    for t in range(1, n_steps + 1):
        der_p: dict[str, dict[str, float]] = {}
        der_q: dict[str, dict[str, float]] = {}
        for d in ders:
            sym_p = "p_ref" if d.is_droop else "p_dg"
            sym_q = "q_ref" if d.is_droop else "q_dg"
            der_p[d.id] = {ph: values[_name_for(sym_p, d.id, ph, t)] * s_base_kw for ph in d.phases}
            der_q[d.id] = {ph: values[_name_for(sym_q, d.id, ph, t)] * s_base_kw for ph in d.phases}
        load_p = {l.id: {ph: values[_name_for("p_load", l.id, ph, t)] * s_base_kw for ph in l.phases}
                  for l in loads}
        load_q = {l.id: {ph: values[_name_for("q_load", l.id, ph, t)] * s_base_kw for ph in l.phases}
                  for l in loads}
        v_re = {n.id: {ph: values[_name_for("v_re", n.id, ph, t)] for ph in n.phases} for n in model.nodes}
        v_im = {n.id: {ph: values[_name_for("v_im", n.id, ph, t)] for ph in n.phases} for n in model.nodes}
        steps.append(PlanStep(
            step=t,
            blocks_on=[int(b) for b in blocks if bit("block_on", b, t)],
            nodes_on=[n for n in nodes if bit("node_on", n, t)],
            branches_on=[b for b in branches if bit("branch_on", b, t)],
            ders_on=[d.id for d in ders if bit("der_on", d.id, t)],
            loads_on=[l.id for l in loads if bit("load_on", l.id, t)],
            der_p_kw=der_p, der_q_kvar=der_q,
            load_p_kw=load_p, load_q_kvar=load_q,
            v_re=v_re, v_im=v_im,
        ))

    dt = model.step_interval_s
    objective = sum(s.served_p_total() * dt for s in steps)
    plan = RestorationPlan(
        feeder_name=model.name, n_steps=n_steps, steps=steps,
        objective_kw_steps=objective,
    )
    _check_plan_shape(plan)
    return plan


def _name_for(symbol: str, element: str, phase: str, step: int) -> str:
    """Mirror of the formulation's variable naming, kept in one place."""
    tags = {
        "block_on": f"xK_b{element}_t{step}",
        "node_on": f"xN_{element}_t{step}",
        "branch_on": f"xBR_{element}_t{step}",
        "edge_on": f"xC_{element}_t{step}",
        "der_on": f"xG_{element}_t{step}",
        "load_on": f"xL_{element}_t{step}",
        "v_re": f"Vre_{element}_{phase}_t{step}",
        "v_im": f"Vim_{element}_{phase}_t{step}",
        "p_ref": f"Pref_{element}_{phase}_t{step}",
        "q_ref": f"Qref_{element}_{phase}_t{step}",
        "p_dg": f"Pdg_{element}_{phase}_t{step}",
        "q_dg": f"Qdg_{element}_{phase}_t{step}",
        "p_load": f"Pl_{element}_{phase}_t{step}",
        "q_load": f"Ql_{element}_{phase}_t{step}",
    }
    return sanitize_name(tags[symbol])


def _check_plan_shape(plan: RestorationPlan) -> None:
    for prev, cur in zip(plan.steps, plan.steps[1:]):
        for attr in ("blocks_on", "nodes_on", "branches_on", "ders_on", "loads_on"):
            if not set(getattr(prev, attr)) <= set(getattr(cur, attr)):
                raise PlanError(f"energized set {attr} shrank between steps {prev.step} and {cur.step}")


# ---------------------------------------------------------------------------
# audit


@dataclass
class FamilyResult:
    family: str
    max_residual: float = 0.0
    violations: list[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.violations


@dataclass
class AuditReport:
    families: list[FamilyResult]
    info: dict[str, float] = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return all(f.passed for f in self.families)

    def family(self, name: str) -> FamilyResult:
        for f in self.families:
            if f.family == name:
                return f
        raise KeyError(name)

    def to_json(self) -> str:
        return json.dumps({
            "ok": self.ok,
            "info": self.info,
            "families": [
                {"family": f.family, "passed": f.passed,
                 "max_residual": f.max_residual, "violations": f.violations[:50]}
                for f in self.families
            ],
        }, indent=1)

    def summary(self) -> str:
        lines = [f"audit: {'PASS' if self.ok else 'FAIL'}"]
        for f in self.families:
            mark = "ok " if f.passed else "FAIL"
            lines.append(f"  [{mark}] {f.family}: max residual {f.max_residual:.3e}, "
                         f"{len(f.violations)} violation(s)")
        for k, v in self.info.items():
            lines.append(f"  (info) {k} = {v:.3e}")
        return "\n".join(lines)


class _Auditor:
    def __init__(self, plan: RestorationPlan, model: FeederModel, config: ScenarioConfig):
        self.plan = plan
        self.f = to_per_unit(model)
        self.cfg = config
        self.s_base_kw = self.f.base_mva_per_phase * 1e3
        self.report = AuditReport(families=[])
        self.tol = GATE_TOL
        self.node_map = self.f.node_map()
        self.branch_map = self.f.branch_map()
        self.der_map = {d.id: d for d in self.f.ders}
        self.load_map = {l.id: l for l in self.f.loads}

    def _family(self, name: str) -> FamilyResult:
        fam = FamilyResult(family=name)
        self.report.families.append(fam)
        return fam

    def _flag(self, fam: FamilyResult, residual: float, message: str) -> None:
        fam.max_residual = max(fam.max_residual, residual)
        if residual > self.tol:
            fam.violations.append(message)

    # -- status logic -------------------------------------------------------

    def check_startup(self) -> None:
        fam = self._family("startup-unique")
        s1 = self.plan.steps[0]
        bs_on = [d for d in s1.ders_on
                 if self.der_map[d].black_start and self.der_map[d].is_droop]
        if len(bs_on) != 1:
            self._flag(fam, 1.0, f"step 1 has {len(bs_on)} black-start droop units on, want exactly 1")
        others = [d for d in s1.ders_on if d not in bs_on]
        if others:
            self._flag(fam, 1.0, f"non-startup units on at step 1: {others}")
        fam2 = self._family("initial-switches-open")
        for bid in s1.branches_on:
            if self.branch_map[bid].switchable:
                self._flag(fam2, 1.0, f"switchable branch {bid} closed at step 1")

    def check_damage(self) -> None:
        fam = self._family("damage-lockout")
        for s in self.plan.steps:
            for bid in s.branches_on:
                if self.branch_map[bid].damaged:
                    self._flag(fam, 1.0, f"damaged branch {bid} energized at step {s.step}")
            for did in s.ders_on:
                if self.der_map[did].damaged:
                    self._flag(fam, 1.0, f"damaged der {did} energized at step {s.step}")
            for lid in s.loads_on:
                if self.load_map[lid].damaged:
                    self._flag(fam, 1.0, f"damaged load {lid} energized at step {s.step}")

    def check_monotone(self) -> None:
        fam = self._family("status-monotone")
        for prev, cur in zip(self.plan.steps, self.plan.steps[1:]):
            for attr, label in (("ders_on", "der"), ("branches_on", "branch"),
                                ("loads_on", "load"), ("nodes_on", "node"),
                                ("blocks_on", "block")):
                dropped = set(getattr(prev, attr)) - set(getattr(cur, attr))
                for el in sorted(dropped, key=str):
                    self._flag(fam, 1.0, f"{label} {el} fell off between steps {prev.step} and {cur.step}")

    def check_topology_ties(self) -> None:
        fam = self._family("energization-ties")
        for s in self.plan.steps:
            nodes_on = set(s.nodes_on)
            branches_on = set(s.branches_on)
            loads_on = set(s.loads_on)
            for did in s.ders_on:
                if self.der_map[did].node not in nodes_on:
                    self._flag(fam, 1.0, f"der {did} on with host node off at step {s.step}")
            for b in self.f.branches:
                on = b.id in branches_on
                ends_on = b.from_node in nodes_on and b.to_node in nodes_on
                if on and not ends_on:
                    self._flag(fam, 1.0, f"branch {b.id} closed with an end off at step {s.step}")
                if not b.switchable and not b.damaged and not on and ends_on:
                    self._flag(fam, 1.0, f"non-switchable branch {b.id} open with both ends on at step {s.step}")
            for l in self.f.loads:
                on = l.id in loads_on
                node_on = l.node in nodes_on
                if on and not node_on:
                    self._flag(fam, 1.0, f"load {l.id} served with node off at step {s.step}")
                if not l.switchable and not l.damaged and node_on and not on:
                    self._flag(fam, 1.0, f"non-switchable load {l.id} off with node on at step {s.step}")

    def check_block_sequencing(self) -> None:
        from .graphs import reduce_to_bus_blocks
        fam = self._family("block-energization-source")
        graph = reduce_to_bus_blocks(self.f)
        block_of = {nid: blk.id for blk in graph.blocks for nid in blk.nodes}
        edges_at: dict[int, list[tuple[int, str]]] = {blk.id: [] for blk in graph.blocks}
        for u, v, bid in graph.edges:
            edges_at[u].append((v, bid))
            edges_at[v].append((u, bid))
        bs_blocks = {block_of[d.node] for d in self.f.ders
                     if d.black_start and not d.damaged}
        first_on: dict[int, int] = {}
        for s in self.plan.steps:
            for b in s.blocks_on:
                first_on.setdefault(b, s.step)
        startup_block = None
        s1 = self.plan.steps[0]
        for did in s1.ders_on:
            d = self.der_map[did]
            if d.black_start and d.is_droop:
                startup_block = block_of[d.node]
        for blk, t in sorted(first_on.items()):
            if t == 1:
                if blk != startup_block:
                    self._flag(fam, 1.0, f"block {blk} energized at step 1 without the startup unit")
                continue
            prev = self.plan.steps[t - 2]
            cur = self.plan.steps[t - 1]
            fed = any(
                bid in cur.branches_on and other in prev.blocks_on
                for other, bid in edges_at[blk]
            )
            if not fed:
                self._flag(fam, 1.0, f"block {blk} energized at step {t} without a closed feed "
                                     f"from a previously energized block")

    # -- electrical checks --------------------------------------------------

    def _voltages_complex(self, s: PlanStep) -> dict[tuple[str, str], complex]:
        return {
            (nid, ph): complex(s.v_re[nid][ph], s.v_im[nid][ph])
            for nid in s.v_re for ph in s.v_re[nid]
        }

    def check_voltage_sector(self) -> None:
        fam = self._family("voltage-sector")
        tan_dev = math.tan(math.radians(self.cfg.angle_deviation_limit_deg))
        for s in self.plan.steps:
            nodes_on = set(s.nodes_on)
            for (nid, ph), v in self._voltages_complex(s).items():
                u = nominal_phase_voltage(ph)
                proj = v.real * u.real + v.imag * u.imag
                perp = -v.real * u.imag + v.imag * u.real
                where = f"node {nid} phase {ph} step {s.step}"
                if nid in nodes_on:
                    self._flag(fam, max(0.0, self.cfg.v_min - proj), f"{where}: below v_min")
                    self._flag(fam, max(0.0, proj - self.cfg.v_max), f"{where}: above v_max")
                    self._flag(fam, max(0.0, abs(perp) - tan_dev * proj), f"{where}: angle deviation")
                else:
                    self._flag(fam, abs(v), f"{where}: nonzero voltage while de-energized")

    def check_linear_balance(self) -> None:
        """Re-evaluate the linearized current balance at plan values; this is
        the gating residual (<= 1e-6 pu)."""
        fam = self._family("current-balance")
        exact_worst = 0.0
        mismatch_worst = 0.0
        v0 = nominal_phase_voltage
        for s in self.plan.steps:
            status = {b.id: (1 if b.id in set(s.branches_on) else 0) for b in self.f.branches}
            adm = assemble_bus_admittance(self.f, status)
            volts = self._voltages_complex(s)
            vvec = np.zeros(adm.size, dtype=complex)
            for key, i in adm.index.items():
                vvec[i] = volts[key]
            left = adm.matrix @ vvec

            inj = np.zeros(adm.size, dtype=complex)
            exact = np.zeros(adm.size, dtype=complex)
            der_nodes = set()
            loads_on = set(s.loads_on)
            for l in self.f.loads:
                li = linearize_zip_injection(l, v0)
                x = 1.0 if l.id in loads_on else 0.0
                for ph, coef in li.phases.items():
                    i_nd = adm.index[(l.node, ph)]
                    p = s.load_p_kw[l.id][ph] / self.s_base_kw
                    q = s.load_q_kvar[l.id][ph] / self.s_base_kw
                    v = volts[(l.node, ph)]
                    inj[i_nd] += coef.evaluate(v, p, q, x)
                    if x:
                        k = l.phases.index(ph)
                        if l.nominal_p[k] != 0:
                            scale = p / l.nominal_p[k]
                        elif l.nominal_q[k] != 0:
                            scale = q / l.nominal_q[k]
                        else:
                            scale = 0.0
                        if abs(v) > 0:
                            exact[i_nd] += -exact_zip_draw(l, ph, v, scale, v0)
            for d in self.f.ders:
                di = der_injection(d, v0)
                on = d.id in set(s.ders_on)
                for ph, coef in di.phases.items():
                    i_nd = adm.index[(d.node, ph)]
                    p = s.der_p_kw[d.id][ph] / self.s_base_kw
                    q = s.der_q_kvar[d.id][ph] / self.s_base_kw
                    inj[i_nd] += coef.evaluate(volts[(d.node, ph)], p, q, 1.0 if on else 0.0)
                    der_nodes.add(d.node)
                    # informational: dispatch vs voltage-consistent power
                    v = volts[(d.node, ph)]
                    if on and abs(v) > 0:
                        i_net = left[i_nd] - exact[i_nd]
                        s_actual = v * np.conj(i_net)
                        mismatch_worst = max(mismatch_worst, abs(complex(p, q) - s_actual))

            res = left - inj
            for key, i_nd in adm.index.items():
                r = max(abs(res[i_nd].real), abs(res[i_nd].imag))
                self._flag(fam, r, f"balance residual {r:.2e} at {key} step {s.step}")
            # exact nonlinear residual at pure load nodes (informational)
            for key, i_nd in adm.index.items():
                if key[0] in der_nodes:
                    continue
                r = abs(left[i_nd] - exact[i_nd])
                exact_worst = max(exact_worst, r)
        self.report.info["exact_nonlinear_residual"] = exact_worst
        self.report.info["dg_dispatch_power_mismatch"] = mismatch_worst

    # -- dispatch / DR / freezes --------------------------------------------

    def check_der_windows(self) -> None:
        fam = self._family("dispatch-windows")
        prev_on: dict[str, int] = {d.id: 0 for d in self.f.ders}
        for s in self.plan.steps:
            on_now = set(s.ders_on)
            for d in self.f.ders:
                p = sum(s.der_p_kw[d.id].values()) / self.s_base_kw
                q = sum(s.der_q_kvar[d.id].values()) / self.s_base_kw
                where = f"der {d.id} step {s.step}"
                if d.is_droop:
                    gate = prev_on[d.id]  # zero-dispatch synchronization step
                    self._flag(fam, max(0.0, p - d.p_max * gate), f"{where}: P above window")
                    self._flag(fam, max(0.0, d.p_min * gate - p), f"{where}: P below window")
                    self._flag(fam, max(0.0, q - d.q_max * gate), f"{where}: Q above window")
                    self._flag(fam, max(0.0, d.q_min * gate - q), f"{where}: Q below window")
                elif d.kind == "pq_dispatchable":
                    x = 1 if d.id in on_now else 0
                    for ph in d.phases:
                        pp = s.der_p_kw[d.id][ph] / self.s_base_kw
                        qq = s.der_q_kvar[d.id][ph] / self.s_base_kw
                        self._flag(fam, max(0.0, pp - d.p_max * x), f"{where} {ph}: P above window")
                        self._flag(fam, max(0.0, d.p_min * x - pp), f"{where} {ph}: P below window")
                        self._flag(fam, max(0.0, qq - d.q_max * x), f"{where} {ph}: Q above window")
                        self._flag(fam, max(0.0, d.q_min * x - qq), f"{where} {ph}: Q below window")
                else:
                    x = 1 if d.id in on_now else 0
                    fp = d.forecast_p[min(s.step - 1, d.forecast_p.shape[0] - 1)]
                    fq = d.forecast_q[min(s.step - 1, d.forecast_q.shape[0] - 1)]
                    for k, ph in enumerate(d.phases):
                        pp = s.der_p_kw[d.id][ph] / self.s_base_kw
                        qq = s.der_q_kvar[d.id][ph] / self.s_base_kw
                        self._flag(fam, abs(pp - fp[k] * x), f"{where} {ph}: P off forecast")
                        self._flag(fam, abs(qq - fq[k] * x), f"{where} {ph}: Q off forecast")
            prev_on = {d.id: (1 if d.id in on_now else 0) for d in self.f.ders}

    def check_adequacy(self) -> None:
        fam = self._family("generation-adequacy")
        for s in self.plan.steps:
            served = s.served_p_total()
            dispatched = sum(sum(v.values()) for v in s.der_p_kw.values())
            self._flag(fam, max(0.0, served - dispatched) / self.s_base_kw,
                       f"step {s.step}: served {served:.1f} kW above dispatched {dispatched:.1f} kW")

    def check_ramps(self) -> None:
        fam = self._family("ramp-rate")
        prev_p = {d.id: 0.0 for d in self.f.ders}
        prev_q = {d.id: 0.0 for d in self.f.ders}
        for s in self.plan.steps:
            for d in self.f.ders:
                p = sum(s.der_p_kw[d.id].values()) / self.s_base_kw
                q = sum(s.der_q_kvar[d.id].values()) / self.s_base_kw
                rp = d.ramp_fraction * d.p_max
                rq = d.ramp_fraction * max(abs(d.q_min), abs(d.q_max))
                self._flag(fam, max(0.0, abs(p - prev_p[d.id]) - rp),
                           f"der {d.id} step {s.step}: P ramp exceeded")
                self._flag(fam, max(0.0, abs(q - prev_q[d.id]) - rq),
                           f"der {d.id} step {s.step}: Q ramp exceeded")
                prev_p[d.id], prev_q[d.id] = p, q

    def check_sync_freezes(self) -> None:
        fam = self._family("sync-freeze")
        droop_ids = [d.id for d in self.f.ders if d.is_droop and not d.damaged]
        prev = None
        for s in self.plan.steps:
            prev_on = set(prev.ders_on) if prev else set()
            syncing = [d for d in droop_ids if d in set(s.ders_on) and d not in prev_on]
            if len(syncing) > 1:
                self._flag(fam, 1.0, f"step {s.step}: {len(syncing)} masters synchronize together")
            if len(syncing) == 1:
                g = syncing[0]
                p_sync = sum(s.der_p_kw[g].values()) / self.s_base_kw
                q_sync = sum(s.der_q_kvar[g].values()) / self.s_base_kw
                self._flag(fam, abs(p_sync), f"step {s.step}: syncing {g} dispatches P")
                self._flag(fam, abs(q_sync), f"step {s.step}: syncing {g} dispatches Q")
                prev_p = prev.served_p_total() if prev else 0.0
                prev_q = prev.served_q_total() if prev else 0.0
                self._flag(fam, abs(s.served_p_total() - prev_p) / self.s_base_kw,
                           f"step {s.step}: served kW changed during synchronization")
                self._flag(fam, abs(s.served_q_total() - prev_q) / self.s_base_kw,
                           f"step {s.step}: served kVAr changed during synchronization")
                loads_prev = set(prev.loads_on) if prev else set()
                if set(s.loads_on) != loads_prev:
                    self._flag(fam, 1.0, f"step {s.step}: load set changed during synchronization")
                br_prev = set(prev.branches_on) if prev else set()
                new_sw = [b for b in set(s.branches_on) - br_prev if self.branch_map[b].switchable]
                if new_sw:
                    self._flag(fam, 1.0, f"step {s.step}: switches {new_sw} closed during synchronization")
                for d in self.f.ders:
                    if d.id == g:
                        continue
                    for ph in d.phases:
                        pprev = (prev.der_p_kw[d.id][ph] if prev else 0.0) / self.s_base_kw
                        qprev = (prev.der_q_kvar[d.id][ph] if prev else 0.0) / self.s_base_kw
                        self._flag(fam, abs(s.der_p_kw[d.id][ph] / self.s_base_kw - pprev),
                                   f"step {s.step}: {d.id} {ph} P moved during synchronization")
                        self._flag(fam, abs(s.der_q_kvar[d.id][ph] / self.s_base_kw - qprev),
                                   f"step {s.step}: {d.id} {ph} Q moved during synchronization")
            prev = s

    def check_demand_response(self) -> None:
        fam = self._family("demand-response")
        for l in self.f.loads:
            served_prev = {ph: 0.0 for ph in l.phases}
            for s in self.plan.steps:
                on = l.id in set(s.loads_on)
                for k, ph in enumerate(l.phases):
                    p = s.load_p_kw[l.id][ph] / self.s_base_kw
                    q = s.load_q_kvar[l.id][ph] / self.s_base_kw
                    where = f"load {l.id} {ph} step {s.step}"
                    if not l.controllable_dr:
                        self._flag(fam, abs(p - (l.nominal_p[k] if on else 0.0)),
                                   f"{where}: P differs from status * nominal")
                        self._flag(fam, abs(q - (l.nominal_q[k] if on else 0.0)),
                                   f"{where}: Q differs from status * nominal")
                    else:
                        lo, hi = sorted((l.dr_min_fraction * l.nominal_p[k],
                                         l.dr_max_fraction * l.nominal_p[k]))
                        self._flag(fam, max(0.0, p - hi * on), f"{where}: above DR range")
                        self._flag(fam, max(0.0, lo * on - p), f"{where}: below DR range")
                        hi_q = l.dr_max_fraction * l.nominal_q[k]
                        hi_p = l.dr_max_fraction * l.nominal_p[k]
                        if hi_p > 0 and hi_q != 0:
                            self._flag(fam, abs(p * hi_q - q * hi_p),
                                       f"{where}: power factor drifted")
                        self._flag(fam, max(0.0, served_prev[ph] - p),
                                   f"{where}: DR set-point decreased over time")
                    served_prev[ph] = p

    def check_unbalance(self) -> None:
        if not (math.isfinite(self.cfg.load_unbalance_limit)
                or math.isfinite(self.cfg.dg_phase_unbalance_limit)):
            return
        fam = self._family("unbalance-caps")
        pairs = (("a", "b"), ("b", "c"), ("c", "a"))
        for s in self.plan.steps:
            if math.isfinite(self.cfg.load_unbalance_limit):
                restored = {"a": 0.0, "b": 0.0, "c": 0.0}
                for lid in s.loads_on:
                    l = self.load_map[lid]
                    for k, ph in enumerate(l.phases):
                        restored[ph] += l.nominal_p[k]
                cap = self.cfg.load_unbalance_limit * sum(restored.values()) / 3.0
                for p1, p2 in pairs:
                    self._flag(fam, max(0.0, abs(restored[p1] - restored[p2]) - cap),
                               f"step {s.step}: restored {p1}/{p2} unbalance over limit")
            if math.isfinite(self.cfg.dg_phase_unbalance_limit):
                for d in self.f.ders:
                    if not d.is_droop or d.damaged:
                        continue
                    cap = self.cfg.dg_phase_unbalance_limit * d.p_max / 3.0
                    for p1, p2 in pairs:
                        if p1 in d.phases and p2 in d.phases:
                            diff = abs(s.der_p_kw[d.id][p1] - s.der_p_kw[d.id][p2]) / self.s_base_kw
                            self._flag(fam, max(0.0, diff - cap),
                                       f"step {s.step}: {d.id} {p1}/{p2} dispatch unbalance over limit")

    def run(self) -> AuditReport:
        self.check_startup()
        self.check_damage()
        self.check_monotone()
        self.check_topology_ties()
        self.check_block_sequencing()
        self.check_voltage_sector()
        self.check_linear_balance()
        self.check_der_windows()
        self.check_adequacy()
        self.check_ramps()
        self.check_sync_freezes()
        self.check_demand_response()
        self.check_unbalance()
        return self.report


def audit(plan: RestorationPlan, model: FeederModel, config: ScenarioConfig) -> AuditReport:
    """Re-check every constraint family on a plan, independently of the MILP."""
    return _Auditor(plan, model, config).run()


def summarize(plan: RestorationPlan) -> str:
    """Per-step CSV: served power per phase, dispatch totals, newly closed
    switches and newly served loads."""
    header = ("step,p_a_kw,p_b_kw,p_c_kw,p_total_kw,q_a_kvar,q_b_kvar,q_c_kvar,q_total_kvar,"
              "dg_p_kw,dg_q_kvar,new_branches,new_loads")
    lines = [header]
    prev_br: set[str] = set()
    prev_ld: set[str] = set()
    for s in plan.steps:
        p = s.served_p_by_phase()
        q = s.served_q_by_phase()
        dg_p = sum(sum(v.values()) for v in s.der_p_kw.values())
        dg_q = sum(sum(v.values()) for v in s.der_q_kvar.values())
        new_br = sorted(set(s.branches_on) - prev_br)
        new_ld = sorted(set(s.loads_on) - prev_ld)
        lines.append(
            f"{s.step},{p['a']:.3f},{p['b']:.3f},{p['c']:.3f},{sum(p.values()):.3f},"
            f"{q['a']:.3f},{q['b']:.3f},{q['c']:.3f},{sum(q.values()):.3f},"
            f"{dg_p:.3f},{dg_q:.3f},{' '.join(new_br)},{' '.join(new_ld)}"
        )
        prev_br, prev_ld = set(s.branches_on), set(s.loads_on)
    return "\n".join(lines) + "\n"


def extract_and_audit(result: SolveResult, problem: RestorationProblem) -> tuple[RestorationPlan, AuditReport]:
    plan = extract_plan(result, problem.index, problem.feeder)
    return plan, audit(plan, problem.feeder, problem.config)
