"""Linear forms for the current-balance constraints.

Branch flows stay exactly linear in rectangular voltages (times the branch
energization binary); device injections on the right-hand side are linearized
about a nominal expansion point:

* constant-impedance load parts are linear in V by construction (no error),
* constant-current and constant-power parts get a first-order Taylor
  expansion of ``I = conj(S/V)`` about the expansion voltage,
* source injections are taken as ``conj(S)/conj(V0)``, linear in the dispatch
  variables and exact whenever the terminal voltage sits at the expansion
  point.

Evaluated at the expansion point every linearized injection reproduces the
exact one (zeroth-order exactness).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .feeder import Der, Load


class LinearizationError(ValueError):
    pass


@dataclass(frozen=True)
class PhaseInjection:
    """Affine current-injection coefficients for one phase of one device.

    Injected complex current (generation positive) is modeled as::

        I = c_p * P + c_q * Q + c_status * x + c_vre * <x*V_re> + c_vim * <x*V_im>

    where P, Q are the device's per-phase power variables (pu), x its
    energization binary, and ``<x*V>`` the linearized binary-voltage product.
    For devices whose status equals the node status the product collapses to
    plain V (the voltage is zero whenever the node is off).
    """

    phase: str
    v0: complex
    c_p: complex
    c_q: complex
    c_status: complex
    c_vre: complex
    c_vim: complex

    def evaluate(self, v: complex, p: float, q: float, x: float) -> complex:
        return (
            self.c_p * p
            + self.c_q * q
            + self.c_status * x
            + self.c_vre * (x * v.real)
            + self.c_vim * (x * v.imag)
        )


@dataclass(frozen=True, eq=False)
class LinearInjection:
    device_id: str
    node: str
    phases: dict[str, PhaseInjection]


def linearize_zip_injection(load: Load, v0_of) -> LinearInjection:
    """Linearized injection of a wye ZIP load (consumption enters negated).

    ``v0_of`` maps a phase letter to the complex expansion voltage.  The
    constant-impedance fraction is exact at every voltage; the constant
    current/power fractions carry the first-order expansions

        d(V/|V|)/dV_re = -j*V_im*V/|V|^3     d(V/|V|)/dV_im = +j*V_re*V/|V|^3
        d(1/conj(V))/dV_re = -1/conj(V)^2    d(1/conj(V))/dV_im = +j/conj(V)^2

    The load's power variable scales the expansion-point current, so the DR
    set-point rescales all three ZIP parts proportionally.
    """
    z, i, p = load.zip_coefficients
    phases = {}
    for k, ph in enumerate(load.phases):
        v0 = complex(v0_of(ph))
        r0 = abs(v0)
        if r0 <= 0.0:
            raise LinearizationError(f"load {load.id}: zero expansion voltage magnitude")
        s_nom = complex(load.nominal_p[k], load.nominal_q[k])
        i0 = (s_nom / v0).conjugate()  # total draw at the expansion point

        # voltage sensitivities of the draw, by ZIP component
        k_z = (z * s_nom).conjugate() / (r0 * r0)
        d_re = k_z
        d_im = 1j * k_z
        c_i = (i * s_nom).conjugate() / r0
        d_re += c_i * (-1j) * v0.imag * v0 / r0**3
        d_im += c_i * (+1j) * v0.real * v0 / r0**3
        d_p = (p * s_nom).conjugate()
        d_re += d_p * (-1.0) / v0.conjugate() ** 2
        d_im += d_p * (+1j) / v0.conjugate() ** 2

        # injection = -draw; power variable carries the expansion-point term
        if load.nominal_p[k] != 0.0:
            c_pv, c_qv = -i0 / load.nominal_p[k], 0.0
        elif load.nominal_q[k] != 0.0:
            c_pv, c_qv = 0.0, -i0 / load.nominal_q[k]
        else:
            c_pv = c_qv = 0.0
        phases[ph] = PhaseInjection(
            phase=ph,
            v0=v0,
            c_p=c_pv,
            c_q=c_qv,
            c_status=d_re * v0.real + d_im * v0.imag,
            c_vre=-d_re,
            c_vim=-d_im,
        )
    return LinearInjection(device_id=load.id, node=load.node, phases=phases)


def exact_zip_draw(load: Load, phase: str, v: complex, scale: float, v0_of) -> complex:
    """Exact nonlinear ZIP draw current for one phase at voltage ``v``.

    ``scale`` is the served fraction of nominal power (DR set-point over
    nominal, or the 0/1 status).  Used by the auditor and the linearization
    tests; deliberately written from the device model, not from the
    coefficients above.
    """
    k = load.phases.index(phase)
    v0 = complex(v0_of(phase))
    z, i, p = load.zip_coefficients
    s_nom = complex(load.nominal_p[k], load.nominal_q[k]) * scale
    if v == 0:
        if s_nom == 0:
            return 0j
        raise ZeroDivisionError(f"load {load.id}: nonzero power at zero voltage")
    s = s_nom * (z * (abs(v) / abs(v0)) ** 2 + i * (abs(v) / abs(v0)) + p)
    return (s / v).conjugate()


def der_injection(der: Der, v0_of) -> LinearInjection:
    """Source injection linear in the dispatch variables.

    The expansion power is zero, so ``I = conj(P + jQ)/conj(V0)`` with no
    voltage-dependent correction; this is exact whenever the terminal voltage
    equals the expansion point, for any dispatch.
    """
    phases = {}
    for ph in der.phases:
        v0 = complex(v0_of(ph))
        if abs(v0) <= 0.0:
            raise LinearizationError(f"der {der.id}: zero expansion voltage magnitude")
        phases[ph] = PhaseInjection(
            phase=ph,
            v0=v0,
            c_p=1.0 / v0.conjugate(),
            c_q=-1j / v0.conjugate(),
            c_status=0.0,
            c_vre=0.0,
            c_vim=0.0,
        )
    return LinearInjection(device_id=der.id, node=der.node, phases=phases)


# ---------------------------------------------------------------------------
# branch flow stamps


@dataclass(frozen=True)
class FlowStamp:
    """One coefficient of a rectangular branch-flow expression.

    The stamped expression is the phase-``row_phase`` current flowing from
    the branch's from-node towards its to-node; ``col_end`` is ``0`` for the
    from-node voltage and ``1`` for the to-node voltage.
    """

    row_phase: str
    row_part: str  # "re" | "im"
    col_end: int
    col_phase: str
    col_part: str
    coeff: float


def flow_stamps(y_block, phases: str) -> list[FlowStamp]:
    """Rectangular expansion of ``I = y (V_from - V_to)`` (Ohm's law).

    ``y_block`` is the 3x3 complex series admittance in abc order.  Each
    phase current picks up ``g`` on like parts and ``-b``/``+b`` on the cross
    parts; de-energization is handled by the caller (gating the voltage terms
    with the branch binary).
    """
    out = []
    order = "abc"
    for p in phases:
        for q in phases:
            y = y_block[order.index(p), order.index(q)]
            g, b = y.real, y.imag
            for col_end, sign in ((0, 1.0), (1, -1.0)):
                if g != 0.0:
                    out.append(FlowStamp(p, "re", col_end, q, "re", sign * g))
                    out.append(FlowStamp(p, "im", col_end, q, "im", sign * g))
                if b != 0.0:
                    out.append(FlowStamp(p, "re", col_end, q, "im", -sign * b))
                    out.append(FlowStamp(p, "im", col_end, q, "re", sign * b))
    return out


def evaluate_flow(y_block, phases: str, v_from: dict[str, complex], v_to: dict[str, complex]) -> dict[str, complex]:
    """Direct complex evaluation of the branch flow, for oracle checks."""
    order = "abc"
    out = {}
    for p in phases:
        acc = 0j
        for q in phases:
            acc += y_block[order.index(p), order.index(q)] * (v_from[q] - v_to[q])
        out[p] = acc
    return out


# ---------------------------------------------------------------------------
# ampacity polygon


@dataclass(frozen=True)
class HalfPlaneSet:
    """Convex polygon outer approximation of a current-magnitude disc.

    Rows are (alpha, beta, gamma) meaning ``alpha*I_re + beta*I_im <= gamma``.
    The polygon is circumscribed: it contains the disc of radius ``i_max``
    and admits at most ``i_max / cos(pi/sides)`` at the vertices.
    """

    i_max: float
    rows: tuple[tuple[float, float, float], ...]

    def admits(self, i_re: float, i_im: float, tol: float = 0.0) -> bool:
        return all(a * i_re + b * i_im <= g + tol for a, b, g in self.rows)


def polygon_halfplanes(i_max: float, sides: int) -> HalfPlaneSet:
    if sides < 6:
        raise LinearizationError(f"polygon needs at least 6 sides, got {sides}")
    if i_max <= 0:
        raise LinearizationError("ampacity must be positive")
    rows = []
    for j in range(sides):
        ang = 2.0 * math.pi * j / sides
        rows.append((math.cos(ang), math.sin(ang), i_max))
    return HalfPlaneSet(i_max=i_max, rows=tuple(rows))
