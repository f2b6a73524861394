"""Translate a feeder plus scenario into the sequential-restoration MILP.

Decision variables (all indexed by restoration step t = 1..T):

====================  =====================================================
symbol                meaning
====================  =====================================================
block_on / node_on    bus block / node energization binaries (tied)
branch_on             branch energization binary; equals its end-node
                      statuses for non-switchable branches
edge_on               alias binaries for inter-block switches
der_on                DER energization binary
load_on               load energization binary
v_re, v_im            rectangular phase-node voltage, pu
p_ref, q_ref          droop master per-phase reference powers, pu
p_dg, q_dg            PQ unit per-phase dispatch, pu
p_load, q_load        served load per phase, pu (binary-scaled or DR range)
prod_*                exact binary*voltage product auxiliaries
feed                  block fed through a closed inter-block switch
flow_re, flow_im      monitored branch currents, pu (ampacity runs only)
====================  =====================================================

The builders mirror the restoration rules: unique black-start startup, all
switches open at step one, damaged gear locked out, monotone statuses,
block-by-block energization one hop per step, linearized current balance
with status-gated branch terms, droop/PQ dispatch windows, forecast-pinned
non-dispatchable units, ramp limits, synchronization freezes (loads, switch
states and the other units' dispatch hold while a master synchronizes at
zero dispatch), direct-load-control ranges with fixed power factor and
non-increasing curtailment, and optional phase-unbalance caps.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .feeder import FeederModel, ScenarioConfig, to_per_unit, validate
from .graphs import BusBlockGraph, reduce_to_bus_blocks, restoration_step_bounds, step_estimates
from .linearize import LinearInjection, der_injection, flow_stamps, linearize_zip_injection, polygon_halfplanes
from .milp import EQUAL, GREATER, LESS, MilpModel
from .network import branch_admittance, nominal_phase_voltage


class FormulationError(ValueError):
    pass


IndexKey = tuple[str, str, str, int]  # (symbol, element, phase, step); phase "" if n/a


class VariableIndex:
    """Bijection between every decision-variable coordinate and a model id."""

    def __init__(self):
        self._by_key: dict[IndexKey, int] = {}
        self._by_id: dict[int, IndexKey] = {}

    def add(self, symbol: str, element: str, phase: str, step: int, vid: int) -> int:
        key = (symbol, element, phase, step)
        if key in self._by_key:
            raise FormulationError(f"duplicate index key {key}")
        if vid in self._by_id:
            raise FormulationError(f"variable {vid} already indexed as {self._by_id[vid]}")
        self._by_key[key] = vid
        self._by_id[vid] = key
        return vid

    def get(self, symbol: str, element: str, phase: str = "", step: int = 0) -> int:
        return self._by_key[(symbol, element, phase, step)]

    def has(self, symbol: str, element: str, phase: str = "", step: int = 0) -> bool:
        return (symbol, element, phase, step) in self._by_key

    def key_of(self, vid: int) -> IndexKey:
        return self._by_id[vid]

    def keys(self):
        return self._by_key.items()

    def __len__(self) -> int:
        return len(self._by_key)


@dataclass(eq=False)
class RestorationProblem:
    model: MilpModel
    index: VariableIndex
    provenance: dict[str, str]  # constraint name -> constraint-family tag
    feeder: FeederModel  # per-unit
    config: ScenarioConfig
    graph: BusBlockGraph
    n_steps: int

    def provenance_report(self) -> str:
        """Text table of constraint-family coverage (name count per tag)."""
        counts: dict[str, int] = {}
        for tag in self.provenance.values():
            counts[tag] = counts.get(tag, 0) + 1
        width = max(len(t) for t in counts) if counts else 4
        lines = [f"{'family':<{width}}  constraints"]
        for tag in sorted(counts):
            lines.append(f"{tag:<{width}}  {counts[tag]}")
        return "\n".join(lines)


class _Builder:
    def __init__(self, feeder: FeederModel, config: ScenarioConfig, graph: BusBlockGraph, n_steps: int):
        self.f = feeder
        self.cfg = config
        self.graph = graph
        self.T = n_steps
        self.m = MilpModel(name=f"restoration_{feeder.name or 'feeder'}_{n_steps}steps")
        self.index = VariableIndex()
        self.provenance: dict[str, str] = {}

        self.block_of = {nid: blk.id for blk in graph.blocks for nid in blk.nodes}
        self.alive_branches = [b for b in feeder.branches if not b.damaged]
        self.alive_ders = [d for d in feeder.ders if not d.damaged]
        self.alive_loads = [l for l in feeder.loads if not l.damaged]
        self.droop = [d for d in self.alive_ders if d.is_droop]
        self.startup_candidates = [d for d in self.droop if d.black_start]
        self.y_blocks = {b.id: branch_admittance(b) for b in self.alive_branches}
        self.v0 = nominal_phase_voltage
        self.v_box = config.v_max / math.cos(math.radians(config.angle_deviation_limit_deg))
        self.tan_dev = math.tan(math.radians(config.angle_deviation_limit_deg))
        self.load_inj: dict[str, LinearInjection] = {
            l.id: linearize_zip_injection(l, self.v0) for l in self.alive_loads
        }
        self.der_inj: dict[str, LinearInjection] = {
            d.id: der_injection(d, self.v0) for d in self.alive_ders
        }

    # -- plumbing -----------------------------------------------------------

    def _add(self, tag: str, name: str, coeffs: dict[int, float], sense: str, rhs: float) -> None:
        self.m.add_constraint(name, coeffs, sense, rhs)
        self.provenance[self.m.constraints[-1].name] = tag

    def _tag_since(self, tag: str, n_before: int) -> None:
        for con in self.m.constraints[n_before:]:
            self.provenance.setdefault(con.name, tag)

    def _product(self, tag: str, name: str, x: int, v: int) -> int:
        n0 = self.m.n_constraints
        w = self.m.link_binary_product(name, x, v)
        self._tag_since(tag, n0)
        return w

    def _freeze(self, tag: str, name: str, trigger: dict[int, float], const: float,
                a: int, b, big_m: float) -> None:
        n0 = self.m.n_constraints
        self.m.freeze_if(name, trigger, const, a, b, big_m)
        self._tag_since(tag, n0)

    def steps(self):
        return range(1, self.T + 1)

    # -- variables ----------------------------------------------------------

    def create_variables(self) -> None:
        ix, m = self.index, self.m
        for t in self.steps():
            for blk in self.graph.blocks:
                ix.add("block_on", str(blk.id), "", t, m.add_binary(f"xK_b{blk.id}_t{t}"))
            for node in self.f.nodes:
                ix.add("node_on", node.id, "", t, m.add_binary(f"xN_{node.id}_t{t}"))
            for br in self.f.branches:
                ix.add("branch_on", br.id, "", t, m.add_binary(f"xBR_{br.id}_t{t}"))
            for u, v, bid in self.graph.edges:
                ix.add("edge_on", bid, "", t, m.add_binary(f"xC_{bid}_t{t}"))
            for der in self.f.ders:
                ix.add("der_on", der.id, "", t, m.add_binary(f"xG_{der.id}_t{t}"))
            for load in self.f.loads:
                ix.add("load_on", load.id, "", t, m.add_binary(f"xL_{load.id}_t{t}"))
            for node in self.f.nodes:
                for ph in node.phases:
                    ix.add("v_re", node.id, ph, t,
                           m.add_variable(f"Vre_{node.id}_{ph}_t{t}", -self.v_box, self.v_box))
                    ix.add("v_im", node.id, ph, t,
                           m.add_variable(f"Vim_{node.id}_{ph}_t{t}", -self.v_box, self.v_box))
            for der in self.f.ders:
                p_sym, q_sym = ("p_ref", "q_ref") if der.is_droop else ("p_dg", "q_dg")
                pl, pu_ = min(0.0, der.p_min), max(0.0, der.p_max)
                ql, qu = min(0.0, der.q_min), max(0.0, der.q_max)
                for ph in der.phases:
                    ix.add(p_sym, der.id, ph, t,
                           m.add_variable(f"P{'ref' if der.is_droop else 'dg'}_{der.id}_{ph}_t{t}", pl, pu_))
                    ix.add(q_sym, der.id, ph, t,
                           m.add_variable(f"Q{'ref' if der.is_droop else 'dg'}_{der.id}_{ph}_t{t}", ql, qu))
            for load in self.f.loads:
                for k, ph in enumerate(load.phases):
                    p_hi = load.dr_max_fraction * load.nominal_p[k] if load.controllable_dr else load.nominal_p[k]
                    q_nom = load.dr_max_fraction * load.nominal_q[k] if load.controllable_dr else load.nominal_q[k]
                    ix.add("p_load", load.id, ph, t,
                           m.add_variable(f"Pl_{load.id}_{ph}_t{t}", 0.0, max(0.0, p_hi)))
                    ix.add("q_load", load.id, ph, t,
                           m.add_variable(f"Ql_{load.id}_{ph}_t{t}", min(0.0, q_nom), max(0.0, q_nom)))

        # lock-outs: damage and the all-open initial switch state
        for t in self.steps():
            for br in self.f.branches:
                if br.damaged:
                    m.fix_variable(ix.get("branch_on", br.id, "", t), 0.0)
            for der in self.f.ders:
                if der.damaged:
                    m.fix_variable(ix.get("der_on", der.id, "", t), 0.0)
                    for ph in der.phases:
                        p_sym = "p_ref" if der.is_droop else "p_dg"
                        q_sym = "q_ref" if der.is_droop else "q_dg"
                        m.fix_variable(ix.get(p_sym, der.id, ph, t), 0.0)
                        m.fix_variable(ix.get(q_sym, der.id, ph, t), 0.0)
            for load in self.f.loads:
                if load.damaged:
                    m.fix_variable(ix.get("load_on", load.id, "", t), 0.0)
                    for ph in load.phases:
                        m.fix_variable(ix.get("p_load", load.id, ph, t), 0.0)
                        m.fix_variable(ix.get("q_load", load.id, ph, t), 0.0)
        for br in self.alive_branches:
            if br.switchable:
                m.fix_variable(ix.get("branch_on", br.id, "", 1), 0.0)
        startup_ids = {d.id for d in self.startup_candidates}
        for der in self.alive_ders:
            if der.id not in startup_ids:
                m.fix_variable(ix.get("der_on", der.id, "", 1), 0.0)

    # -- objective ----------------------------------------------------------

    def build_objective(self) -> None:
        dt = self.f.step_interval_s
        for t in self.steps():
            for load in self.alive_loads:
                for ph in load.phases:
                    self.m.add_objective_term(self.index.get("p_load", load.id, ph, t), -dt)

    # -- startup ------------------------------------------------------------

    def build_initial_sequencing(self) -> None:
        if not self.startup_candidates:
            raise FormulationError("no black-start droop DG: restoration cannot start")
        coeffs = {self.index.get("der_on", d.id, "", 1): 1.0 for d in self.startup_candidates}
        self._add("startup-unique", "startup_unique", coeffs, EQUAL, 1.0)
        # non-startup units and all switches are already locked at t=1, and
        # damaged gear at every t, via variable bounds in create_variables.

    # -- connectivity -------------------------------------------------------

    def build_connectivity(self) -> None:
        ix = self.index
        node_block = {n.id: self.block_of[n.id] for n in self.f.nodes}
        edges_at: dict[int, list[tuple[int, str]]] = {blk.id: [] for blk in self.graph.blocks}
        for u, v, bid in self.graph.edges:
            edges_at[u].append((v, bid))
            edges_at[v].append((u, bid))
        bs_in_block: dict[int, list[str]] = {blk.id: [] for blk in self.graph.blocks}
        for d in self.startup_candidates:
            bs_in_block[self.block_of[d.node]].append(d.id)

        for t in self.steps():
            for node in self.f.nodes:
                self._add("block-node-tie", f"blocknode_{node.id}_t{t}",
                          {ix.get("node_on", node.id, "", t): 1.0,
                           ix.get("block_on", str(node_block[node.id]), "", t): -1.0},
                          EQUAL, 0.0)
            for u, v, bid in self.graph.edges:
                self._add("block-edge-tie", f"blockedge_{bid}_t{t}",
                          {ix.get("edge_on", bid, "", t): 1.0,
                           ix.get("branch_on", bid, "", t): -1.0},
                          EQUAL, 0.0)
            for der in self.alive_ders:
                self._add("der-host-energized", f"derhost_{der.id}_t{t}",
                          {ix.get("der_on", der.id, "", t): 1.0,
                           ix.get("node_on", der.node, "", t): -1.0},
                          LESS, 0.0)
                if t > 1:
                    self._add("status-monotone", f"dermono_{der.id}_t{t}",
                              {ix.get("der_on", der.id, "", t): 1.0,
                               ix.get("der_on", der.id, "", t - 1): -1.0},
                              GREATER, 0.0)
            for br in self.alive_branches:
                x_br = ix.get("branch_on", br.id, "", t)
                x_f = ix.get("node_on", br.from_node, "", t)
                x_t = ix.get("node_on", br.to_node, "", t)
                if br.switchable:
                    self._add("branch-endpoints-energized", f"brfrom_{br.id}_t{t}",
                              {x_br: 1.0, x_f: -1.0}, LESS, 0.0)
                    self._add("branch-endpoints-energized", f"brto_{br.id}_t{t}",
                              {x_br: 1.0, x_t: -1.0}, LESS, 0.0)
                    if t > 1:
                        self._add("status-monotone", f"brmono_{br.id}_t{t}",
                                  {x_br: 1.0, ix.get("branch_on", br.id, "", t - 1): -1.0},
                                  GREATER, 0.0)
                else:
                    self._add("nonswitch-follows-nodes", f"brfix1_{br.id}_t{t}",
                              {x_br: 1.0, x_f: -1.0}, EQUAL, 0.0)
                    self._add("nonswitch-follows-nodes", f"brfix2_{br.id}_t{t}",
                              {x_br: 1.0, x_t: -1.0}, EQUAL, 0.0)
            for load in self.alive_loads:
                x_l = ix.get("load_on", load.id, "", t)
                x_n = ix.get("node_on", load.node, "", t)
                if load.switchable:
                    self._add("load-node-energized", f"ldnode_{load.id}_t{t}",
                              {x_l: 1.0, x_n: -1.0}, LESS, 0.0)
                    if t > 1:
                        self._add("status-monotone", f"ldmono_{load.id}_t{t}",
                                  {x_l: 1.0, ix.get("load_on", load.id, "", t - 1): -1.0},
                                  GREATER, 0.0)
                else:
                    self._add("nonswitch-load-follows-node", f"ldfix_{load.id}_t{t}",
                              {x_l: 1.0, x_n: -1.0}, EQUAL, 0.0)
            # a block energizes by hosting the startup unit at t=1 or through
            # a closed switch to a block already energized at t-1 (one hop
            # per step, which is what the eccentricity horizon counts)
            for blk in self.graph.blocks:
                x_k = ix.get("block_on", str(blk.id), "", t)
                if t > 1:
                    self._add("block-monotone", f"blkmono_{blk.id}_t{t}",
                              {x_k: 1.0, ix.get("block_on", str(blk.id), "", t - 1): -1.0},
                              GREATER, 0.0)
                if t == 1:
                    coeffs = {x_k: 1.0}
                    for did in bs_in_block[blk.id]:
                        coeffs[ix.get("der_on", did, "", 1)] = -1.0
                    self._add("block-energization-source", f"blkfeed_{blk.id}_t1", coeffs, LESS, 0.0)
                else:
                    coeffs = {x_k: 1.0, ix.get("block_on", str(blk.id), "", t - 1): -1.0}
                    for other, bid in edges_at[blk.id]:
                        y = self.m.add_variable(f"yF_{bid}_b{blk.id}_t{t}", 0.0, 1.0)
                        self.index.add("feed", f"{bid}->{blk.id}", "", t, y)
                        coeffs[y] = -1.0
                        self._add("block-energization-source", f"feedclosed_{bid}_b{blk.id}_t{t}",
                                  {y: 1.0, ix.get("edge_on", bid, "", t): -1.0}, LESS, 0.0)
                        self._add("block-energization-source", f"feedneigh_{bid}_b{blk.id}_t{t}",
                                  {y: 1.0, ix.get("block_on", str(other), "", t - 1): -1.0},
                                  LESS, 0.0)
                    self._add("block-energization-source", f"blkfeed_{blk.id}_t{t}", coeffs, LESS, 0.0)

    # -- power flow ---------------------------------------------------------

    def _endpoint_var(self, node: str, ph: str, part: str, t: int) -> int:
        return self.index.get("v_re" if part == "re" else "v_im", node, ph, t)

    def _branch_products(self, t: int) -> dict[tuple[str, str, str, str], int]:
        """McCormick products switch-status * endpoint voltage, keyed by
        (branch id, node, phase, part)."""
        out = {}
        for br in self.alive_branches:
            if not br.switchable:
                continue
            x_br = self.index.get("branch_on", br.id, "", t)
            for node in (br.from_node, br.to_node):
                for ph in br.phases:
                    for part in ("re", "im"):
                        v = self._endpoint_var(node, ph, part, t)
                        w = self._product(
                            "status-gated-branch-terms",
                            f"wBR_{br.id}_{node}_{ph}_{part}_t{t}", x_br, v)
                        self.index.add(f"prod_branch_v{part}", f"{br.id}:{node}", ph, t, w)
                        out[(br.id, node, ph, part)] = w
        return out

    def build_power_flow(self) -> None:
        ix = self.index
        for t in self.steps():
            # voltage feasibility sector, pinned to zero while de-energized
            for node in self.f.nodes:
                x_n = ix.get("node_on", node.id, "", t)
                for ph in node.phases:
                    v0 = self.v0(ph)
                    u_re, u_im = v0.real, v0.imag
                    p_re, p_im = -v0.imag, v0.real
                    vre = ix.get("v_re", node.id, ph, t)
                    vim = ix.get("v_im", node.id, ph, t)
                    self._add("voltage-sector", f"vlo_{node.id}_{ph}_t{t}",
                              {vre: u_re, vim: u_im, x_n: -self.cfg.v_min}, GREATER, 0.0)
                    self._add("voltage-sector", f"vhi_{node.id}_{ph}_t{t}",
                              {vre: u_re, vim: u_im, x_n: -self.cfg.v_max}, LESS, 0.0)
                    self._add("voltage-sector", f"vang1_{node.id}_{ph}_t{t}",
                              {vre: p_re - self.tan_dev * u_re, vim: p_im - self.tan_dev * u_im},
                              LESS, 0.0)
                    self._add("voltage-sector", f"vang2_{node.id}_{ph}_t{t}",
                              {vre: -p_re - self.tan_dev * u_re, vim: -p_im - self.tan_dev * u_im},
                              LESS, 0.0)

            products = self._branch_products(t)

            # current balance per phase-node: branch terms minus injections
            balance: dict[tuple[str, str, str], dict[int, float]] = {
                (n.id, ph, part): {}
                for n in self.f.nodes for ph in n.phases for part in ("re", "im")
            }

            def bump(row, var, coef):
                if coef != 0.0:
                    row[var] = row.get(var, 0.0) + coef

            for br in self.alive_branches:
                stamps = flow_stamps(self.y_blocks[br.id], br.phases)
                ends = (br.from_node, br.to_node)
                for st in stamps:
                    col_node = ends[st.col_end]
                    if br.switchable:
                        var = products[(br.id, col_node, st.col_phase, st.col_part)]
                    else:
                        var = self._endpoint_var(col_node, st.col_phase, st.col_part, t)
                    # current leaves the from-node with + sign, the to-node with -
                    bump(balance[(br.from_node, st.row_phase, st.row_part)], var, st.coeff)
                    bump(balance[(br.to_node, st.row_phase, st.row_part)], var, -st.coeff)

            for load in self.alive_loads:
                x_l = ix.get("load_on", load.id, "", t)
                inj = self.load_inj[load.id]
                for ph, coef in inj.phases.items():
                    p_var = ix.get("p_load", load.id, ph, t)
                    q_var = ix.get("q_load", load.id, ph, t)
                    if load.switchable:
                        w_re = self._product("status-gated-load-terms",
                                             f"wL_{load.id}_{ph}_re_t{t}", x_l,
                                             ix.get("v_re", load.node, ph, t))
                        w_im = self._product("status-gated-load-terms",
                                             f"wL_{load.id}_{ph}_im_t{t}", x_l,
                                             ix.get("v_im", load.node, ph, t))
                        ix.add("prod_load_vre", load.id, ph, t, w_re)
                        ix.add("prod_load_vim", load.id, ph, t, w_im)
                    else:
                        w_re = ix.get("v_re", load.node, ph, t)
                        w_im = ix.get("v_im", load.node, ph, t)
                    for part, pick in (("re", lambda z: z.real), ("im", lambda z: z.imag)):
                        row = balance[(load.node, ph, part)]
                        bump(row, p_var, -pick(coef.c_p))
                        bump(row, q_var, -pick(coef.c_q))
                        bump(row, x_l, -pick(coef.c_status))
                        bump(row, w_re, -pick(coef.c_vre))
                        bump(row, w_im, -pick(coef.c_vim))

            for der in self.alive_ders:
                inj = self.der_inj[der.id]
                p_sym, q_sym = ("p_ref", "q_ref") if der.is_droop else ("p_dg", "q_dg")
                for ph, coef in inj.phases.items():
                    p_var = ix.get(p_sym, der.id, ph, t)
                    q_var = ix.get(q_sym, der.id, ph, t)
                    for part, pick in (("re", lambda z: z.real), ("im", lambda z: z.imag)):
                        row = balance[(der.node, ph, part)]
                        bump(row, p_var, -pick(coef.c_p))
                        bump(row, q_var, -pick(coef.c_q))

            for (node, ph, part), row in balance.items():
                if row:
                    self._add("current-balance", f"bal_{part}_{node}_{ph}_t{t}", row, EQUAL, 0.0)

            if self.cfg.enforce_ampacity:
                self._build_ampacity(t, products)

    def _build_ampacity(self, t: int, products) -> None:
        ix = self.index
        slack = 1.0 / math.cos(math.pi / self.cfg.polygon_sides)
        for br in self.alive_branches:
            if br.ampacity is None:
                continue
            stamps = flow_stamps(self.y_blocks[br.id], br.phases)
            ends = (br.from_node, br.to_node)
            for k, ph in enumerate(br.phases):
                i_max = br.ampacity[k]
                box = i_max * slack
                i_vars = {}
                for part in ("re", "im"):
                    vid = self.m.add_variable(f"I{part}_{br.id}_{ph}_t{t}", -box, box)
                    ix.add(f"flow_{part}", br.id, ph, t, vid)
                    i_vars[part] = vid
                for part in ("re", "im"):
                    row = {i_vars[part]: 1.0}
                    for st in stamps:
                        if st.row_phase != ph or st.row_part != part:
                            continue
                        col_node = ends[st.col_end]
                        if br.switchable:
                            var = products[(br.id, col_node, st.col_phase, st.col_part)]
                        else:
                            var = self._endpoint_var(col_node, st.col_phase, st.col_part, t)
                        row[var] = row.get(var, 0.0) - st.coeff
                    self._add("line-current-definition", f"ohm_{part}_{br.id}_{ph}_t{t}", row, EQUAL, 0.0)
                half = polygon_halfplanes(i_max, self.cfg.polygon_sides)
                for j, (alpha, beta, gamma) in enumerate(half.rows):
                    self._add("ampacity-polygon", f"amp_{br.id}_{ph}_t{t}_s{j}",
                              {i_vars["re"]: alpha, i_vars["im"]: beta}, LESS, gamma)

    # -- DER constraints ----------------------------------------------------

    def _sync_trigger(self, t: int, exclude: str | None = None) -> dict[int, float]:
        """Binary-valued expression: 1 iff some droop master (other than
        ``exclude``) synchronizes at step t."""
        coeffs: dict[int, float] = {}
        for d in self.droop:
            if d.id == exclude:
                continue
            coeffs[self.index.get("der_on", d.id, "", t)] = 1.0
            if t > 1:
                coeffs[self.index.get("der_on", d.id, "", t - 1)] = -1.0
        return coeffs

    def build_der_constraints(self) -> None:
        ix = self.index
        for der in self.alive_ders:
            p_sym, q_sym = ("p_ref", "q_ref") if der.is_droop else ("p_dg", "q_dg")
            ramp_p = der.ramp_fraction * der.p_max
            ramp_q = der.ramp_fraction * max(abs(der.q_min), abs(der.q_max))
            for t in self.steps():
                p_vars = [ix.get(p_sym, der.id, ph, t) for ph in der.phases]
                q_vars = [ix.get(q_sym, der.id, ph, t) for ph in der.phases]
                if der.is_droop:
                    # the status lag makes the synchronization step a
                    # zero-dispatch step: the unit is on but its window is
                    # still scaled by the previous-step (off) status
                    gate = None if t == 1 else ix.get("der_on", der.id, "", t - 1)
                    for tagname, vars_, lo, hi in (
                        (f"refP_{der.id}", p_vars, der.p_min, der.p_max),
                        (f"refQ_{der.id}", q_vars, der.q_min, der.q_max),
                    ):
                        row_lo = {v: 1.0 for v in vars_}
                        row_hi = dict(row_lo)
                        if gate is not None:
                            row_lo[gate] = -lo
                            row_hi[gate] = -hi
                        self._add("droop-dispatch-window", f"{tagname}_lo_t{t}", row_lo, GREATER, 0.0)
                        self._add("droop-dispatch-window", f"{tagname}_hi_t{t}", row_hi, LESS, 0.0)
                    # per-phase gates so an off unit cannot circulate power
                    for ph in der.phases:
                        for sym, lo, hi in ((p_sym, min(0.0, der.p_min), max(0.0, der.p_max)),
                                            (q_sym, min(0.0, der.q_min), max(0.0, der.q_max))):
                            if lo >= 0.0:
                                continue
                            v = ix.get(sym, der.id, ph, t)
                            row_hi = {v: 1.0}
                            row_lo = {v: 1.0}
                            if gate is not None:
                                row_hi[gate] = -hi
                                row_lo[gate] = -lo
                            self._add("droop-dispatch-window", f"phase_{sym}_{der.id}_{ph}_hi_t{t}",
                                      row_hi, LESS, 0.0)
                            self._add("droop-dispatch-window", f"phase_{sym}_{der.id}_{ph}_lo_t{t}",
                                      row_lo, GREATER, 0.0)
                elif der.kind == "pq_dispatchable":
                    x_g = ix.get("der_on", der.id, "", t)
                    for ph in der.phases:
                        self._add("pq-dispatch-window", f"pqP_{der.id}_{ph}_lo_t{t}",
                                  {ix.get(p_sym, der.id, ph, t): 1.0, x_g: -der.p_min}, GREATER, 0.0)
                        self._add("pq-dispatch-window", f"pqP_{der.id}_{ph}_hi_t{t}",
                                  {ix.get(p_sym, der.id, ph, t): 1.0, x_g: -der.p_max}, LESS, 0.0)
                        self._add("pq-dispatch-window", f"pqQ_{der.id}_{ph}_lo_t{t}",
                                  {ix.get(q_sym, der.id, ph, t): 1.0, x_g: -der.q_min}, GREATER, 0.0)
                        self._add("pq-dispatch-window", f"pqQ_{der.id}_{ph}_hi_t{t}",
                                  {ix.get(q_sym, der.id, ph, t): 1.0, x_g: -der.q_max}, LESS, 0.0)
                else:  # non-dispatchable: output pinned to forecast while on
                    x_g = ix.get("der_on", der.id, "", t)
                    fp, fq = self._forecast(der, t)
                    for k, ph in enumerate(der.phases):
                        self._add("forecast-pinned", f"fcP_{der.id}_{ph}_t{t}",
                                  {ix.get(p_sym, der.id, ph, t): 1.0, x_g: -fp[k]}, EQUAL, 0.0)
                        self._add("forecast-pinned", f"fcQ_{der.id}_{ph}_t{t}",
                                  {ix.get(q_sym, der.id, ph, t): 1.0, x_g: -fq[k]}, EQUAL, 0.0)

                # ramp on the phase totals, from the blackout (zero) state
                for tag, vars_, prev_vars, r in (
                    ("rampP", p_vars, None if t == 1 else [ix.get(p_sym, der.id, ph, t - 1) for ph in der.phases], ramp_p),
                    ("rampQ", q_vars, None if t == 1 else [ix.get(q_sym, der.id, ph, t - 1) for ph in der.phases], ramp_q),
                ):
                    if r <= 0:
                        continue
                    row = {v: 1.0 for v in vars_}
                    if prev_vars is not None:
                        for v in prev_vars:
                            row[v] = row.get(v, 0.0) - 1.0
                    self._add("ramp-rate", f"{tag}_{der.id}_up_t{t}", row, LESS, r)
                    self._add("ramp-rate", f"{tag}_{der.id}_dn_t{t}",
                              {v: -c for v, c in row.items()}, LESS, r)

        self._build_sync_freezes()

    def _forecast(self, der, t: int):
        fp, fq = der.forecast_p, der.forecast_q
        row = min(t - 1, fp.shape[0] - 1)  # series shorter than horizon extend last value
        return fp[row], fq[row]

    def _build_sync_freezes(self) -> None:
        ix = self.index
        for t in self.steps():
            trigger = self._sync_trigger(t)
            if not trigger:
                continue
            self._add("sync-one-per-step", f"synclimit_t{t}", dict(trigger), LESS, 1.0)
            # no additional loads or switch closures while a master synchronizes
            for load in self.alive_loads:
                if not load.switchable:
                    continue
                row = {ix.get("load_on", load.id, "", t): 1.0}
                if t > 1:
                    row[ix.get("load_on", load.id, "", t - 1)] = -1.0
                for vid, c in trigger.items():
                    row[vid] = row.get(vid, 0.0) + c
                self._add("sync-freeze-loads", f"syncload_{load.id}_t{t}", row, LESS, 1.0)
            for br in self.alive_branches:
                if not br.switchable:
                    continue
                row = {ix.get("branch_on", br.id, "", t): 1.0}
                if t > 1:
                    row[ix.get("branch_on", br.id, "", t - 1)] = -1.0
                for vid, c in trigger.items():
                    row[vid] = row.get(vid, 0.0) + c
                self._add("sync-freeze-switches", f"syncbr_{br.id}_t{t}", row, LESS, 1.0)
            for load in self.alive_loads:
                if not load.controllable_dr:
                    continue
                for k, ph in enumerate(load.phases):
                    hi = load.dr_max_fraction * load.nominal_p[k]
                    if hi <= 0:
                        continue
                    row = {ix.get("p_load", load.id, ph, t): 1.0}
                    if t > 1:
                        row[ix.get("p_load", load.id, ph, t - 1)] = -1.0
                    for vid, c in trigger.items():
                        row[vid] = row.get(vid, 0.0) + hi * c
                    self._add("sync-freeze-dr", f"syncdr_{load.id}_{ph}_t{t}", row, LESS, hi)
            # every other unit's dispatch holds during someone's synchronization
            for der in self.alive_ders:
                trig_k = self._sync_trigger(t, exclude=der.id if der.is_droop else None)
                if not trig_k:
                    continue
                p_sym, q_sym = ("p_ref", "q_ref") if der.is_droop else ("p_dg", "q_dg")
                for ph in der.phases:
                    for sym in (p_sym, q_sym):
                        a = ix.get(sym, der.id, ph, t)
                        b = ix.get(sym, der.id, ph, t - 1) if t > 1 else 0.0
                        va = self.m.variables[a]
                        if isinstance(b, float):
                            span = max(abs(va.lower), abs(va.upper))
                        else:
                            vb = self.m.variables[b]
                            span = max(va.upper - vb.lower, vb.upper - va.lower)
                        if span <= 0:
                            continue
                        self._freeze("sync-freeze-dispatch", f"syncdg_{sym}_{der.id}_{ph}_t{t}",
                                     trig_k, 0.0, a, b, span)

    # -- demand response ----------------------------------------------------

    def build_demand_response(self) -> None:
        ix = self.index
        for load in self.alive_loads:
            for k, ph in enumerate(load.phases):
                p_nom, q_nom = load.nominal_p[k], load.nominal_q[k]
                for t in self.steps():
                    x_l = ix.get("load_on", load.id, "", t)
                    p_v = ix.get("p_load", load.id, ph, t)
                    q_v = ix.get("q_load", load.id, ph, t)
                    if not load.controllable_dr:
                        self._add("load-power-definition", f"lddefP_{load.id}_{ph}_t{t}",
                                  {p_v: 1.0, x_l: -p_nom}, EQUAL, 0.0)
                        self._add("load-power-definition", f"lddefQ_{load.id}_{ph}_t{t}",
                                  {q_v: 1.0, x_l: -q_nom}, EQUAL, 0.0)
                        continue
                    p_lo, p_hi = sorted((load.dr_min_fraction * p_nom, load.dr_max_fraction * p_nom))
                    q_lo, q_hi = sorted((load.dr_min_fraction * q_nom, load.dr_max_fraction * q_nom))
                    self._add("dr-range", f"drPlo_{load.id}_{ph}_t{t}",
                              {p_v: 1.0, x_l: -p_lo}, GREATER, 0.0)
                    self._add("dr-range", f"drPhi_{load.id}_{ph}_t{t}",
                              {p_v: 1.0, x_l: -p_hi}, LESS, 0.0)
                    self._add("dr-range", f"drQlo_{load.id}_{ph}_t{t}",
                              {q_v: 1.0, x_l: -q_lo}, GREATER, 0.0)
                    self._add("dr-range", f"drQhi_{load.id}_{ph}_t{t}",
                              {q_v: 1.0, x_l: -q_hi}, LESS, 0.0)
                    if p_hi > 0 and (q_hi != 0 or q_lo != 0):
                        q_ref = q_hi if q_hi != 0 else q_lo
                        self._add("dr-power-factor", f"drpf_{load.id}_{ph}_t{t}",
                                  {p_v: q_ref, q_v: -p_hi}, EQUAL, 0.0)
                    if t > 1:
                        self._add("dr-monotone", f"drmonoP_{load.id}_{ph}_t{t}",
                                  {p_v: 1.0, ix.get("p_load", load.id, ph, t - 1): -1.0},
                                  GREATER, 0.0)
                        self._add("dr-monotone", f"drmonoQ_{load.id}_{ph}_t{t}",
                                  {q_v: 1.0, ix.get("q_load", load.id, ph, t - 1): -1.0},
                                  GREATER, 0.0)

    # -- generation adequacy --------------------------------------------------

    def build_adequacy(self) -> None:
        """Served active-power set-points cannot exceed the dispatched total.

        The current-balance constraints tie consumption to generation only
        through the voltage-dependent injection model, which lets nominal
        set-point totals drift above the fleet's dispatch when voltages ride
        low; this row keeps the restored-energy objective physically capped.
        """
        ix = self.index
        for t in self.steps():
            row: dict[int, float] = {}
            for load in self.alive_loads:
                for ph in load.phases:
                    row[ix.get("p_load", load.id, ph, t)] = 1.0
            for der in self.alive_ders:
                p_sym = "p_ref" if der.is_droop else "p_dg"
                for ph in der.phases:
                    row[ix.get(p_sym, der.id, ph, t)] = -1.0
            if row:
                self._add("generation-adequacy", f"adequacy_t{t}", row, LESS, 0.0)

    # -- unbalance ----------------------------------------------------------

    def build_unbalance(self) -> None:
        ix = self.index
        pairs = (("a", "b"), ("b", "c"), ("c", "a"))
        if math.isfinite(self.cfg.load_unbalance_limit):
            lam = self.cfg.load_unbalance_limit / 3.0
            for t in self.steps():
                for p1, p2 in pairs:
                    fwd: dict[int, float] = {}
                    rev: dict[int, float] = {}
                    for load in self.alive_loads:
                        nom = dict(zip(load.phases, load.nominal_p))
                        diff = nom.get(p1, 0.0) - nom.get(p2, 0.0)
                        slack = lam * sum(load.nominal_p)
                        x_l = ix.get("load_on", load.id, "", t)
                        fwd[x_l] = diff - slack
                        rev[x_l] = -diff - slack
                    self._add("load-unbalance-cap", f"unbL_{p1}{p2}_t{t}", fwd, LESS, 0.0)
                    self._add("load-unbalance-cap", f"unbL_{p2}{p1}_t{t}", rev, LESS, 0.0)
        if math.isfinite(self.cfg.dg_phase_unbalance_limit):
            for der in self.droop:
                cap = self.cfg.dg_phase_unbalance_limit * der.p_max / 3.0
                for t in self.steps():
                    for p1, p2 in pairs:
                        if p1 not in der.phases or p2 not in der.phases:
                            continue
                        v1 = ix.get("p_ref", der.id, p1, t)
                        v2 = ix.get("p_ref", der.id, p2, t)
                        self._add("dg-unbalance-cap", f"unbG_{der.id}_{p1}{p2}_t{t}",
                                  {v1: 1.0, v2: -1.0}, LESS, cap)
                        self._add("dg-unbalance-cap", f"unbG_{der.id}_{p2}{p1}_t{t}",
                                  {v1: -1.0, v2: 1.0}, LESS, cap)


def assemble(model: FeederModel, config: ScenarioConfig) -> RestorationProblem:
    """Build the full restoration MILP for one connected subgraph."""
    config.check()
    report = validate(model)
    if not report.ok:
        raise FormulationError(f"feeder model invalid:\n{report}")
    feeder = to_per_unit(model)
    graph = reduce_to_bus_blocks(feeder)
    n_bs = sum(1 for d in feeder.ders if d.black_start and not d.damaged)
    if n_bs == 0:
        raise FormulationError("no black-start droop DG: restoration cannot start")
    n_steps = config.n_steps
    if n_steps is None:
        n_steps = step_estimates(restoration_step_bounds(graph), n_bs).generous
    builder = _Builder(feeder, config, graph, n_steps)
    builder.create_variables()
    builder.build_objective()
    builder.build_initial_sequencing()
    builder.build_connectivity()
    builder.build_power_flow()
    builder.build_der_constraints()
    builder.build_demand_response()
    builder.build_adequacy()
    builder.build_unbalance()
    untagged = [c.name for c in builder.m.constraints if c.name not in builder.provenance]
    if untagged:
        raise FormulationError(f"untagged constraints: {untagged[:3]}")
    return RestorationProblem(
        model=builder.m,
        index=builder.index,
        provenance=builder.provenance,
        feeder=feeder,
        config=config,
        graph=graph,
        n_steps=n_steps,
    )
