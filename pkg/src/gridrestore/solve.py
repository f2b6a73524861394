"""Drive a MILP solver behind a uniform adapter contract.

The orchestrator always writes the LP file (the deterministic artifact),
hands the problem to an adapter, then applies the returned assignment to the
model and audits residuals.  Adapters:

* ``scipy``  -- HiGHS branch-and-cut via :func:`scipy.optimize.milp` (default)
* ``glpk``   -- GLPK via cvxopt, when installed
* ``subprocess`` -- any external command that maps an LP file to a solution
  text file of ``name value`` lines (see README); the bundled
  ``gridrestore-lp`` script is one such command.

After the integer solve the continuous part is re-polished at fixed binaries
with tight LP tolerances so downstream residual audits are meaningful.
"""

from __future__ import annotations

import logging
import math
import os
import shlex
import subprocess
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from scipy.optimize import Bounds, LinearConstraint, linprog, milp

from .milp import GREATER, LESS, MilpModel, MilpError, SolvedModel, export_lp, parse_solution_text

logger = logging.getLogger(__name__)

RESIDUAL_TOL = 1e-6


@dataclass
class SolveOptions:
    gap: float = 0.01
    time_limit_s: float = 600.0
    polish: bool = True
    residual_tol: float = RESIDUAL_TOL


@dataclass
class SolveResult:
    status: str  # optimal | feasible_gap | infeasible | unbounded | time_limit | error
    solver: str
    wall_time_s: float
    assignment: dict[str, float] | None = None
    objective_value: float | None = None
    reported_gap: float | None = None
    message: str = ""

    @property
    def feasible(self) -> bool:
        return self.status in ("optimal", "feasible_gap") and self.assignment is not None


# ---------------------------------------------------------------------------
# matrix form shared by the in-process adapters


def _matrix_form(model: MilpModel):
    n = model.n_variables
    c = np.zeros(n)
    for vid, coef in model.objective.items():
        c[vid] = coef
    lb = np.array([v.lower for v in model.variables])
    ub = np.array([v.upper for v in model.variables])
    integrality = np.array([1 if v.binary else 0 for v in model.variables])
    rows, cols, data, c_lb, c_ub = [], [], [], [], []
    for r, con in enumerate(model.constraints):
        for vid, coef in con.coeffs.items():
            rows.append(r)
            cols.append(vid)
            data.append(coef)
        if con.sense == LESS:
            c_lb.append(-np.inf)
            c_ub.append(con.rhs)
        elif con.sense == GREATER:
            c_lb.append(con.rhs)
            c_ub.append(np.inf)
        else:
            c_lb.append(con.rhs)
            c_ub.append(con.rhs)
    a = sp.csr_matrix((data, (rows, cols)), shape=(len(model.constraints), n))
    return c, a, np.array(c_lb), np.array(c_ub), lb, ub, integrality


def _polish(model: MilpModel, x: np.ndarray) -> np.ndarray:
    """Fix binaries at their rounded values and re-solve the LP tightly."""
    c, a, c_lb, c_ub, lb, ub, integrality = _matrix_form(model)
    for vid in np.nonzero(integrality)[0]:
        r = round(float(x[vid]))
        lb[vid] = ub[vid] = r
    eq = c_lb == c_ub
    a_eq, b_eq = a[eq], c_ub[eq]
    le = ~eq & np.isfinite(c_ub)
    ge = ~eq & np.isfinite(c_lb)
    a_ub = sp.vstack([a[le], -a[ge]]) if (le.any() or ge.any()) else None
    b_ub = np.concatenate([c_ub[le], -c_lb[ge]]) if a_ub is not None else None
    res = linprog(
        c, A_ub=a_ub, b_ub=b_ub, A_eq=a_eq if eq.any() else None,
        b_eq=b_eq if eq.any() else None, bounds=np.column_stack([lb, ub]),
        method="highs",
        options={"primal_feasibility_tolerance": 1e-10, "dual_feasibility_tolerance": 1e-9},
    )
    if res.status != 0 or res.x is None:
        logger.warning("polish LP failed (%s); keeping raw solver point", res.message)
        return x
    return res.x


class ScipyHighsAdapter:
    """In-process HiGHS through scipy.optimize.milp."""

    name = "scipy"

    def solve(self, model: MilpModel, lp_path: Path, options: SolveOptions) -> SolveResult:
        t0 = time.perf_counter()
        c, a, c_lb, c_ub, lb, ub, integrality = _matrix_form(model)
        kwargs = {}
        if model.n_constraints:
            kwargs["constraints"] = LinearConstraint(a, c_lb, c_ub)
        res = milp(
            c,
            integrality=integrality,
            bounds=Bounds(lb, ub),
            options={
                "mip_rel_gap": options.gap,
                "time_limit": options.time_limit_s,
                "presolve": True,
                "disp": False,
            },
            **kwargs,
        )
        wall = time.perf_counter() - t0
        if res.status == 2:
            return SolveResult("infeasible", self.name, wall, message=res.message)
        if res.status == 3:
            return SolveResult("unbounded", self.name, wall, message=res.message)
        if res.x is None:
            status = "time_limit" if res.status == 1 else "error"
            return SolveResult(status, self.name, wall, message=res.message)
        status = "optimal" if res.status == 0 else "feasible_gap"
        gap = getattr(res, "mip_gap", None)
        values = {v.name: float(res.x[v.id]) for v in model.variables}
        return SolveResult(
            status, self.name, wall,
            assignment=values,
            objective_value=float(res.fun) + model.objective_constant,
            reported_gap=None if gap is None else float(gap),
            message=res.message,
        )


class GlpkAdapter:
    """GLPK MILP through cvxopt (solves to proven optimality; no gap knob)."""

    name = "glpk"

    @staticmethod
    def available() -> bool:
        try:
            from cvxopt import glpk  # noqa: F401
            return True
        except ImportError:
            return False

    def solve(self, model: MilpModel, lp_path: Path, options: SolveOptions) -> SolveResult:
        from cvxopt import glpk, matrix, spmatrix

        t0 = time.perf_counter()
        n = model.n_variables
        c = [0.0] * n
        for vid, coef in model.objective.items():
            c[vid] = coef
        g_i, g_j, g_v, h = [], [], [], []
        a_i, a_j, a_v, b = [], [], [], []
        for con in model.constraints:
            if con.sense == "=":
                row = len(b)
                for vid, coef in con.coeffs.items():
                    a_i.append(row)
                    a_j.append(vid)
                    a_v.append(coef)
                b.append(con.rhs)
            else:
                sign = 1.0 if con.sense == LESS else -1.0
                row = len(h)
                for vid, coef in con.coeffs.items():
                    g_i.append(row)
                    g_j.append(vid)
                    g_v.append(sign * coef)
                h.append(sign * con.rhs)
        for v in model.variables:
            if v.binary:
                continue
            if math.isfinite(v.upper):
                g_i.append(len(h))
                g_j.append(v.id)
                g_v.append(1.0)
                h.append(v.upper)
            if math.isfinite(v.lower):
                g_i.append(len(h))
                g_j.append(v.id)
                g_v.append(-1.0)
                h.append(-v.lower)
        binaries = {v.id for v in model.variables if v.binary}
        # binaries with tightened bounds keep their restriction as rows
        for v in model.variables:
            if v.binary and (v.lower > 0.0 or v.upper < 1.0):
                g_i.append(len(h))
                g_j.append(v.id)
                g_v.append(1.0)
                h.append(v.upper)
                g_i.append(len(h))
                g_j.append(v.id)
                g_v.append(-1.0)
                h.append(-v.lower)
        if not h:  # cvxopt requires a non-empty G
            g_i, g_j, g_v, h = [0], [0], [0.0], [1.0]
        gmat = spmatrix(g_v, g_i, g_j, (len(h), n))
        opts = {"msg_lev": "GLP_MSG_OFF", "tm_lim": int(options.time_limit_s * 1000)}
        args = [matrix(c), gmat, matrix(h)]
        if b:
            args += [spmatrix(a_v, a_i, a_j, (len(b), n)), matrix(b)]
        try:
            status, x = glpk.ilp(*args, I=set(), B=binaries, options=opts)
        except TypeError:  # older cvxopt: options via module global
            glpk.options = opts
            status, x = glpk.ilp(*args, I=set(), B=binaries)
        wall = time.perf_counter() - t0
        if status != "optimal" or x is None:
            mapped = "infeasible" if "infeasible" in status else (
                "unbounded" if "dual infeasible" in status else "error")
            return SolveResult(mapped, self.name, wall, message=status)
        values = {v.name: float(x[v.id]) for v in model.variables}
        obj = sum(c[vid] * x[vid] for vid in range(n)) + model.objective_constant
        return SolveResult("optimal", self.name, wall, assignment=values,
                           objective_value=float(obj), reported_gap=0.0, message=status)


class SubprocessAdapter:
    """Run `command <lp-file> <solution-file>` and read back the solution.

    The command must exit 0 and write one `name value` line per variable
    (comment lines starting with `#` are ignored; a `# status <s>` comment
    propagates the solver status).
    """

    name = "subprocess"

    def __init__(self, command: str):
        self.command = command

    def solve(self, model: MilpModel, lp_path: Path, options: SolveOptions) -> SolveResult:
        t0 = time.perf_counter()
        sol_path = lp_path.with_suffix(".sol")
        argv = shlex.split(self.command) + [str(lp_path), str(sol_path)]
        try:
            proc = subprocess.run(
                argv, capture_output=True, text=True,
                timeout=options.time_limit_s + 120.0,
            )
        except FileNotFoundError:
            return SolveResult("error", self.name, time.perf_counter() - t0,
                               message=f"solver command not found: {argv[0]}")
        except subprocess.TimeoutExpired:
            return SolveResult("time_limit", self.name, time.perf_counter() - t0,
                               message="subprocess timed out")
        wall = time.perf_counter() - t0
        reported = _scan_status_comment(sol_path)
        if proc.returncode != 0:
            status = reported or "error"
            if status in ("infeasible", "unbounded", "time_limit"):
                return SolveResult(status, self.name, wall, message=proc.stderr.strip())
            return SolveResult("error", self.name, wall,
                               message=f"solver exited {proc.returncode}: {proc.stderr.strip()}")
        try:
            text = sol_path.read_text()
            assignment = parse_solution_text(text, [v.name for v in model.variables])
        except (OSError, MilpError) as exc:
            return SolveResult("error", self.name, wall, message=str(exc))
        values = np.zeros(model.n_variables)
        for v in model.variables:
            values[v.id] = assignment[v.name]
        obj = model.objective_value(values)
        status = reported if reported in ("optimal", "feasible_gap") else "optimal"
        return SolveResult(status, self.name, wall, assignment=assignment,
                           objective_value=obj, reported_gap=None)


def _scan_status_comment(sol_path: Path) -> str | None:
    try:
        for line in sol_path.read_text().splitlines():
            if line.startswith("# status"):
                return line.split()[-1]
            if line and not line.startswith("#"):
                break
    except OSError:
        pass
    return None


def get_adapter(name: str | None = None, solver_path: str | None = None):
    """Resolve an adapter by name; env vars GRIDRESTORE_SOLVER and
    GRIDRESTORE_SOLVER_PATH supply defaults."""
    name = name or os.environ.get("GRIDRESTORE_SOLVER") or "scipy"
    solver_path = solver_path or os.environ.get("GRIDRESTORE_SOLVER_PATH")
    if name in ("scipy", "highs"):
        return ScipyHighsAdapter()
    if name == "glpk":
        if not GlpkAdapter.available():
            raise MilpError("glpk adapter requires cvxopt")
        return GlpkAdapter()
    if name == "subprocess":
        if not solver_path:
            raise MilpError("subprocess adapter needs --solver-path (or GRIDRESTORE_SOLVER_PATH)")
        return SubprocessAdapter(solver_path)
    raise MilpError(f"unknown solver adapter {name!r}")


def solve(problem, options: SolveOptions | None = None, adapter=None,
          lp_path: str | Path | None = None) -> SolveResult:
    """Write the LP artifact, run the adapter, polish, audit residuals.

    ``problem`` is a RestorationProblem or a bare MilpModel.  On any feasible
    status the returned assignment passes the residual audit at
    ``options.residual_tol``; otherwise the result is downgraded to error.
    """
    model: MilpModel = getattr(problem, "model", problem)
    options = options or SolveOptions()
    adapter = adapter or ScipyHighsAdapter()
    if lp_path is None:
        tmp = tempfile.mkdtemp(prefix="gridrestore_")
        lp_path = Path(tmp) / "model.lp"
    lp_path = Path(lp_path)
    lp_path.parent.mkdir(parents=True, exist_ok=True)
    lp_path.write_text(export_lp(model))

    result = adapter.solve(model, lp_path, options)
    if not result.feasible:
        return result

    values = np.array([result.assignment[v.name] for v in model.variables])
    if options.polish:
        values = _polish(model, values)
        result.assignment = {v.name: float(values[v.id]) for v in model.variables}
        result.objective_value = model.objective_value(values)

    solved = SolvedModel(model, values)
    bad_int = solved.integrality_violations()
    if bad_int:
        return SolveResult("error", result.solver, result.wall_time_s,
                           message=f"integrality violated at {bad_int[:3]}")
    worst = solved.max_residual()
    if worst > options.residual_tol:
        return SolveResult("error", result.solver, result.wall_time_s,
                           message=f"constraint residual {worst:.3e} exceeds {options.residual_tol}")
    return result


def parse_solution(text: str, names: list[str]) -> dict[str, float]:
    """Parse `name value` solution text into a complete assignment for
    ``names``; extra names are ignored with a warning, missing ones raise."""
    known = set(names)
    extra = []
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        tok = line.split()[0]
        if tok not in known:
            extra.append(tok)
    if extra:
        logger.warning("solution text has %d unknown name(s), e.g. %s", len(extra), extra[0])
    return parse_solution_text(text, names)
