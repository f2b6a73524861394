"""Independent reference implementations used to cross-check the package.

Everything here is deliberately written from scratch against the model
definition (complex arithmetic, dense matrices, exhaustive enumeration)
rather than reusing the formulation/solver code paths it validates.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog

PHASES = "abc"
ANGLES = {"a": 0.0, "b": -2.0 * math.pi / 3.0, "c": 2.0 * math.pi / 3.0}


# ---------------------------------------------------------------------------
# graph oracles


def union_find_components(nodes, edges) -> list[set]:
    parent = {n: n for n in nodes}

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for a, b in edges:
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[ra] = rb
    groups: dict = {}
    for n in nodes:
        groups.setdefault(find(n), set()).add(n)
    return list(groups.values())


def floyd_warshall(n_vertices: int, edges) -> np.ndarray:
    dist = np.full((n_vertices, n_vertices), np.inf)
    np.fill_diagonal(dist, 0.0)
    for u, v in edges:
        dist[u, v] = dist[v, u] = 1.0
    for k in range(n_vertices):
        dist = np.minimum(dist, dist[:, k:k + 1] + dist[k:k + 1, :])
    return dist


# ---------------------------------------------------------------------------
# ZIP current linearization written directly from the device model


def v0_of(ph: str) -> complex:
    return complex(math.cos(ANGLES[ph]), math.sin(ANGLES[ph]))


def zip_draw_linearization(s_nom: complex, zipc, v0: complex):
    """(i0, d_re, d_im): draw at the expansion point and its V-derivatives."""
    z, i, p = zipc
    r0 = abs(v0)
    i0 = (s_nom / v0).conjugate()
    k_z = (z * s_nom).conjugate() / (r0 * r0)
    d_re = k_z
    d_im = 1j * k_z
    c_i = (i * s_nom).conjugate() / r0
    d_re += c_i * (-1j) * v0.imag * v0 / r0**3
    d_im += c_i * (1j) * v0.real * v0 / r0**3
    d_p = (p * s_nom).conjugate()
    d_re += -d_p / v0.conjugate() ** 2
    d_im += 1j * d_p / v0.conjugate() ** 2
    return i0, d_re, d_im


# ---------------------------------------------------------------------------
# exhaustive sequence enumeration with LP dispatch


@dataclass
class Sequence:
    startup: str
    closed_at: list[frozenset]      # index t-1 -> switch branch ids closed at t (cumulative)
    blocks_on: list[frozenset]      # index t-1 -> block ids energized at t
    sync_steps: dict[int, str]      # step -> droop der id synchronizing there
    der_on_step: dict[str, int]     # der id -> first on step (absent: never)


class ToyOracle:
    """Exhaustive restoration optimum for small all-DR toy feeders.

    Assumes: every load is full-range direct-control (so load binaries are
    WLOG tied to node energization), electrical limits are non-binding by
    construction, at most two droop masters, PQ units with zero minimum.
    """

    def __init__(self, model, config, n_steps: int):
        from gridrestore.feeder import to_per_unit
        from gridrestore.graphs import reduce_to_bus_blocks

        self.f = to_per_unit(model)
        self.cfg = config
        self.T = n_steps
        graph = reduce_to_bus_blocks(self.f)
        self.block_of = {nid: blk.id for blk in graph.blocks for nid in blk.nodes}
        self.switches = {b.id: (self.block_of[b.from_node], self.block_of[b.to_node])
                         for b in self.f.branches if b.switchable and not b.damaged}
        self.droops = [d for d in self.f.ders if d.is_droop and not d.damaged]
        self.bs = [d for d in self.droops if d.black_start]
        self.pq_disp = [d for d in self.f.ders if d.kind == "pq_dispatchable" and not d.damaged]
        self.pq_fc = [d for d in self.f.ders if d.kind == "pq_nondispatchable" and not d.damaged]
        self.loads = [l for l in self.f.loads if not l.damaged]
        self.y_cache = {}
        for b in self.f.branches:
            if b.damaged:
                continue
            idx = [PHASES.index(p) for p in b.phases]
            y = np.zeros((3, 3), dtype=complex)
            y[np.ix_(idx, idx)] = np.linalg.inv(b.impedance[np.ix_(idx, idx)])
            self.y_cache[b.id] = y

    # -- enumeration ---------------------------------------------------------

    def best_objective(self) -> float:
        best = -math.inf
        for seq in self.sequences():
            val = self.dispatch_lp(seq)
            if val is not None and val > best:
                best = val
        return best

    def sequences(self):
        for startup in self.bs:
            first = frozenset({self.block_of[startup.node]})
            yield from self._extend(
                startup, [frozenset()], [first], 2)

    def _extend(self, startup, closed_traj, blocks_traj, t):
        if t > self.T:
            yield from self._with_der_choices(startup, closed_traj, blocks_traj)
            return
        on_prev = blocks_traj[-1]
        closed_prev = closed_traj[-1]
        frontier = [
            sid for sid, (u, v) in self.switches.items()
            if sid not in closed_prev and ((u in on_prev) != (v in on_prev))
        ]
        for r in range(len(frontier) + 1):
            for combo in itertools.combinations(frontier, r):
                new_on = set(on_prev)
                for sid in combo:
                    u, v = self.switches[sid]
                    new_on.add(u if v in on_prev else v)
                yield from self._extend(
                    startup,
                    closed_traj + [closed_prev | frozenset(combo)],
                    blocks_traj + [frozenset(new_on)],
                    t + 1,
                )

    def _with_der_choices(self, startup, closed_traj, blocks_traj):
        first_on = {}
        for t_idx, on in enumerate(blocks_traj):
            for blk in on:
                first_on.setdefault(blk, t_idx + 1)
        new_closures = [
            bool(closed_traj[i] - (closed_traj[i - 1] if i else frozenset()))
            for i in range(len(closed_traj))
        ]

        other = [d for d in self.bs if d.id != startup.id]
        sync_options = [None]
        if other:
            blk = self.block_of[other[0].node]
            if blk in first_on:
                # a master can synchronize once its block is energized, but
                # never at a step where any switch closes (the freeze)
                sync_options += [
                    t for t in range(2, self.T + 1)
                    if first_on[blk] <= t and not new_closures[t - 1]
                ]
        fc_options = [[None] for _ in self.pq_fc]
        for k, d in enumerate(self.pq_fc):
            blk = self.block_of[d.node]
            if blk in first_on:
                fc_options[k] += [t for t in range(max(2, first_on[blk]), self.T + 1)]

        for sync_t in sync_options:
            for fc_choice in itertools.product(*fc_options):
                sync_steps = {1: startup.id}
                der_on = {startup.id: 1}
                if other and sync_t is not None:
                    sync_steps[sync_t] = other[0].id
                    der_on[other[0].id] = sync_t
                bad = False
                for k, d in enumerate(self.pq_fc):
                    t_on = fc_choice[k]
                    if t_on is None:
                        continue
                    if t_on in sync_steps:
                        bad = True  # forecast jump would break the dispatch freeze
                        break
                    der_on[d.id] = t_on
                if bad:
                    continue
                for d in self.pq_disp:
                    blk = self.block_of[d.node]
                    if blk in first_on:
                        der_on[d.id] = max(2, first_on[blk])
                yield Sequence(startup.id, closed_traj, blocks_traj, sync_steps, der_on)

    # -- LP dispatch for a fixed sequence -------------------------------------

    def dispatch_lp(self, seq: Sequence) -> float | None:
        f = self.f
        T = self.T
        node_on = [
            {n.id for n in f.nodes if self.block_of[n.id] in seq.blocks_on[t - 1]}
            for t in range(1, T + 1)
        ]
        var_lo, var_hi, var_names = [], [], {}

        def new_var(key, lo, hi):
            var_names[key] = len(var_lo)
            var_lo.append(lo)
            var_hi.append(hi)
            return var_names[key]

        for t in range(1, T + 1):
            for n in f.nodes:
                if n.id in node_on[t - 1]:
                    for ph in n.phases:
                        new_var(("vre", n.id, ph, t), -2.0, 2.0)
                        new_var(("vim", n.id, ph, t), -2.0, 2.0)
            for l in self.loads:
                if l.node in node_on[t - 1]:
                    for k, ph in enumerate(l.phases):
                        new_var(("pl", l.id, ph, t), 0.0, l.dr_max_fraction * l.nominal_p[k])
            for d in self.droops:
                t_on = seq.der_on_step.get(d.id)
                if t_on is not None and t > t_on:  # dispatch window opens after sync
                    for ph in d.phases:
                        new_var(("pg", d.id, ph, t), 0.0, d.p_max)
                        new_var(("qg", d.id, ph, t), min(0.0, d.q_min), max(0.0, d.q_max))
            for d in self.pq_disp:
                t_on = seq.der_on_step.get(d.id)
                if t_on is not None and t >= t_on:
                    for ph in d.phases:
                        new_var(("pg", d.id, ph, t), 0.0, d.p_max)
                        new_var(("qg", d.id, ph, t), d.q_min, d.q_max)

        n_var = len(var_lo)
        a_eq, b_eq, a_ub, b_ub = [], [], [], []

        def row():
            return np.zeros(n_var)

        def vid(key):
            return var_names.get(key)

        # current balance, complex, per energized phase-node per step
        for t in range(1, T + 1):
            on = node_on[t - 1]
            closed = seq.closed_at[t - 1]
            for n in f.nodes:
                if n.id not in on:
                    continue
                for ph in n.phases:
                    r_re, r_im = row(), row()
                    c_re, c_im = 0.0, 0.0  # constants moved to rhs

                    def add_cv(coef: complex, node, phq):
                        ire = vid(("vre", node, phq, t))
                        iim = vid(("vim", node, phq, t))
                        r_re[ire] += coef.real
                        r_re[iim] += -coef.imag
                        r_im[ire] += coef.imag
                        r_im[iim] += coef.real

                    for b in f.branches:
                        if b.damaged or ph not in b.phases:
                            continue
                        if b.switchable and b.id not in closed:
                            continue
                        if b.from_node == n.id:
                            o = b.to_node
                        elif b.to_node == n.id:
                            o = b.from_node
                        else:
                            continue
                        if o not in on and not b.switchable:
                            continue  # both sides off is impossible within a block
                        y = self.y_cache[b.id]
                        for phq in b.phases:
                            ypq = y[PHASES.index(ph), PHASES.index(phq)]
                            add_cv(ypq, n.id, phq)
                            add_cv(-ypq, o, phq)
                    # injections
                    for l in self.loads:
                        if l.node != n.id or ph not in l.phases or l.node not in on:
                            continue
                        k = l.phases.index(ph)
                        s_nom = complex(l.nominal_p[k], l.nominal_q[k])
                        if s_nom == 0:
                            continue
                        v0 = v0_of(ph)
                        i0, d_re, d_im = zip_draw_linearization(s_nom, l.zip_coefficients, v0)
                        p_id = vid(("pl", l.id, ph, t))
                        if l.nominal_p[k] != 0:
                            coef = i0 / l.nominal_p[k]
                            r_re[p_id] += coef.real
                            r_im[p_id] += coef.imag
                        vre_id = vid(("vre", n.id, ph, t))
                        vim_id = vid(("vim", n.id, ph, t))
                        r_re[vre_id] += d_re.real
                        r_im[vre_id] += d_re.imag
                        r_re[vim_id] += d_im.real
                        r_im[vim_id] += d_im.imag
                        const = d_re * v0.real + d_im * v0.imag
                        c_re += const.real
                        c_im += const.imag
                    for d in self.droops + self.pq_disp:
                        if d.node != n.id or ph not in d.phases:
                            continue
                        p_id = vid(("pg", d.id, ph, t))
                        if p_id is None:
                            continue
                        v0 = v0_of(ph)
                        cp = 1.0 / v0.conjugate()
                        cq = -1j / v0.conjugate()
                        r_re[p_id] -= cp.real
                        r_im[p_id] -= cp.imag
                        r_re[vid(("qg", d.id, ph, t))] -= cq.real
                        r_im[vid(("qg", d.id, ph, t))] -= cq.imag
                    for d in self.pq_fc:
                        t_on = seq.der_on_step.get(d.id)
                        if d.node != n.id or ph not in d.phases or t_on is None or t < t_on:
                            continue
                        k = d.phases.index(ph)
                        fp = d.forecast_p[min(t - 1, d.forecast_p.shape[0] - 1), k]
                        fq = d.forecast_q[min(t - 1, d.forecast_q.shape[0] - 1), k]
                        v0 = v0_of(ph)
                        inj = complex(fp, -fq) / v0.conjugate()
                        c_re += inj.real
                        c_im += inj.imag
                    a_eq.append(r_re)
                    b_eq.append(c_re)
                    a_eq.append(r_im)
                    b_eq.append(c_im)

            # voltage sector
            tan_dev = math.tan(math.radians(self.cfg.angle_deviation_limit_deg))
            for n in f.nodes:
                if n.id not in on:
                    continue
                for ph in n.phases:
                    u = v0_of(ph)
                    vre_id = vid(("vre", n.id, ph, t))
                    vim_id = vid(("vim", n.id, ph, t))
                    r = row()
                    r[vre_id], r[vim_id] = -u.real, -u.imag
                    a_ub.append(r)
                    b_ub.append(-self.cfg.v_min)
                    r = row()
                    r[vre_id], r[vim_id] = u.real, u.imag
                    a_ub.append(r)
                    b_ub.append(self.cfg.v_max)
                    for sgn in (1.0, -1.0):
                        r = row()
                        r[vre_id] = sgn * (-u.imag) - tan_dev * u.real
                        r[vim_id] = sgn * u.real - tan_dev * u.imag
                        a_ub.append(r)
                        b_ub.append(0.0)

        # droop sum windows (lagged by one step after synchronization)
        for d in self.droops:
            t_on = seq.der_on_step.get(d.id)
            if t_on is None:
                continue
            for t in range(t_on + 1, T + 1):
                lo_row, hi_row = row(), row()
                for ph in d.phases:
                    lo_row[vid(("pg", d.id, ph, t))] = -1.0
                    hi_row[vid(("pg", d.id, ph, t))] = 1.0
                a_ub.append(hi_row)
                b_ub.append(d.p_max)
                a_ub.append(lo_row)
                b_ub.append(-d.p_min)
                lo_row, hi_row = row(), row()
                for ph in d.phases:
                    lo_row[vid(("qg", d.id, ph, t))] = -1.0
                    hi_row[vid(("qg", d.id, ph, t))] = 1.0
                a_ub.append(hi_row)
                b_ub.append(d.q_max)
                a_ub.append(lo_row)
                b_ub.append(-d.q_min)

        # ramps on phase totals (previous step absent = 0)
        for d in self.droops + self.pq_disp:
            rp = d.ramp_fraction * d.p_max
            rq = d.ramp_fraction * max(abs(d.q_min), abs(d.q_max))
            for t in range(1, T + 1):
                for sym, r_lim in (("pg", rp), ("qg", rq)):
                    up, dn = row(), row()
                    any_term = False
                    for ph in d.phases:
                        cur = vid((sym, d.id, ph, t))
                        prev = vid((sym, d.id, ph, t - 1))
                        if cur is not None:
                            up[cur] += 1.0
                            dn[cur] -= 1.0
                            any_term = True
                        if prev is not None:
                            up[prev] -= 1.0
                            dn[prev] += 1.0
                            any_term = True
                    if any_term:
                        a_ub.append(up)
                        b_ub.append(r_lim)
                        a_ub.append(dn)
                        b_ub.append(r_lim)

        # generation adequacy: served set-points capped by the dispatch total
        for t in range(1, T + 1):
            r = row()
            const = 0.0
            any_term = False
            for l in self.loads:
                for ph in l.phases:
                    idx = vid(("pl", l.id, ph, t))
                    if idx is not None:
                        r[idx] += 1.0
                        any_term = True
            for d in self.droops + self.pq_disp:
                for ph in d.phases:
                    idx = vid(("pg", d.id, ph, t))
                    if idx is not None:
                        r[idx] -= 1.0
            for d in self.pq_fc:
                t_on = seq.der_on_step.get(d.id)
                if t_on is not None and t >= t_on:
                    frow = d.forecast_p[min(t - 1, d.forecast_p.shape[0] - 1)]
                    const += float(frow.sum())
            if any_term:
                a_ub.append(r)
                b_ub.append(const)

        # demand response: fixed power factor is implicit (Q never modeled
        # separately for loads); monotone set-points and sync freezes
        for l in self.loads:
            for ph in l.phases:
                for t in range(2, T + 1):
                    cur = vid(("pl", l.id, ph, t))
                    prev = vid(("pl", l.id, ph, t - 1))
                    if cur is None:
                        continue
                    r = row()
                    r[cur] = -1.0
                    if prev is not None:
                        r[prev] = 1.0
                    a_ub.append(r)
                    b_ub.append(0.0)

        for t_s, g in seq.sync_steps.items():
            for l in self.loads:
                for ph in l.phases:
                    cur = vid(("pl", l.id, ph, t_s))
                    if cur is None:
                        continue
                    r = row()
                    r[cur] = 1.0
                    prev = vid(("pl", l.id, ph, t_s - 1))
                    if prev is not None:
                        r[prev] = -1.0
                    a_eq.append(r)
                    b_eq.append(0.0)
            for d in self.droops + self.pq_disp:
                if d.id == g:
                    continue
                for ph in d.phases:
                    for sym in ("pg", "qg"):
                        cur = vid((sym, d.id, ph, t_s))
                        if cur is None:
                            continue
                        r = row()
                        r[cur] = 1.0
                        prev = vid((sym, d.id, ph, t_s - 1))
                        if prev is not None:
                            r[prev] = -1.0
                        a_eq.append(r)
                        b_eq.append(0.0)

        c = np.zeros(n_var)
        for (kind, *_rest), idx in var_names.items():
            if kind == "pl":
                c[idx] = -1.0
        res = linprog(
            c,
            A_ub=np.array(a_ub) if a_ub else None,
            b_ub=np.array(b_ub) if b_ub else None,
            A_eq=np.array(a_eq) if a_eq else None,
            b_eq=np.array(b_eq) if b_eq else None,
            bounds=list(zip(var_lo, var_hi)),
            method="highs",
        )
        if res.status != 0:
            return None
        return -res.fun * self.f.step_interval_s
