"""Three-phase bus admittance structure for the linear power-flow constraints.

Per-branch series admittance blocks are the inverses of the phase impedance
submatrices; shunt admittances are parsed and stored but excluded from the
assembled matrix by default (they destabilize the optimization numerically on
short distribution lines, and the linear flow model drops them).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .feeder import PHASES, Branch, FeederModel


@dataclass(frozen=True, eq=False)
class AdmittanceMatrix:
    """Assembled complex bus admittance over present phase-nodes only.

    ``index`` maps (node id, phase) to a row/column; absent phases are
    structurally eliminated rather than zero-stuffed.
    """

    index: dict[tuple[str, str], int]
    matrix: np.ndarray  # complex, n x n, series terms only
    shunt: np.ndarray  # complex, n x n, stored separately, not in `matrix`

    @property
    def size(self) -> int:
        return self.matrix.shape[0]

    def to_coordinate_text(self) -> str:
        """Debug export: one `row col re im` line per structural nonzero."""
        lines = ["# row col re im"]
        for i in range(self.size):
            for j in range(self.size):
                v = self.matrix[i, j]
                if v != 0:
                    lines.append(f"{i} {j} {v.real:.17g} {v.imag:.17g}")
        return "\n".join(lines) + "\n"


def phase_node_index(model: FeederModel) -> dict[tuple[str, str], int]:
    """Deterministic phase-node ordering: document node order, then phase order."""
    return {key: i for i, key in enumerate(model.phase_nodes())}


def branch_admittance(branch: Branch) -> np.ndarray:
    """Series admittance block: inverse of the present-phase impedance
    submatrix, zero-padded back to 3x3 in abc order."""
    idx = [PHASES.index(p) for p in branch.phases]
    sub = branch.impedance[np.ix_(idx, idx)]
    if abs(np.linalg.det(sub)) < 1e-30:
        raise np.linalg.LinAlgError(
            f"branch {branch.id}: impedance submatrix for phases {branch.phases!r} is singular"
        )
    y = np.zeros((3, 3), dtype=complex)
    y[np.ix_(idx, idx)] = np.linalg.inv(sub)
    return y


def assemble_bus_admittance(
    model: FeederModel,
    branch_status: dict[str, int] | None = None,
    include_shunts: bool = False,
) -> AdmittanceMatrix:
    """Stamp every energized branch into the bus admittance matrix.

    ``branch_status`` maps branch id to 0/1; unlisted branches default to 1
    and damaged branches always stamp 0.  With shunts excluded (the default)
    every row of the result sums to zero.
    """
    index = phase_node_index(model)
    n = len(index)
    ybus = np.zeros((n, n), dtype=complex)
    yshunt = np.zeros((n, n), dtype=complex)
    status = branch_status or {}
    for b in model.branches:
        on = int(status.get(b.id, 1))
        if b.damaged or not on:
            continue
        y = branch_admittance(b)
        for p in b.phases:
            i_f = index[(b.from_node, p)]
            i_t = index[(b.to_node, p)]
            for q in b.phases:
                j_f = index[(b.from_node, q)]
                j_t = index[(b.to_node, q)]
                ypq = y[PHASES.index(p), PHASES.index(q)]
                ybus[i_f, j_f] += ypq
                ybus[i_t, j_t] += ypq
                ybus[i_f, j_t] -= ypq
                ybus[i_t, j_f] -= ypq
                spq = b.shunt_admittance[PHASES.index(p), PHASES.index(q)] / 2.0
                yshunt[i_f, j_f] += spq
                yshunt[i_t, j_t] += spq
    if include_shunts:
        ybus = ybus + yshunt
    return AdmittanceMatrix(index=index, matrix=ybus, shunt=yshunt)


def nominal_voltage_profile(model: FeederModel) -> np.ndarray:
    """Balanced 1 pu expansion point: angles 0/-120/+120 degrees for a/b/c."""
    angles = {"a": 0.0, "b": -2.0 * np.pi / 3.0, "c": 2.0 * np.pi / 3.0}
    return np.array([np.exp(1j * angles[ph]) for _, ph in model.phase_nodes()])


def nominal_phase_voltage(phase: str) -> complex:
    angles = {"a": 0.0, "b": -2.0 * np.pi / 3.0, "c": 2.0 * np.pi / 3.0}
    return complex(np.exp(1j * angles[phase]))
