"""Solver-agnostic MILP intermediate representation.

Holds variables, linear constraints and a minimize objective; provides the
two linearization gadgets used throughout the restoration formulation
(exact binary*continuous products, big-M conditional equalities) and
deterministic LP-format text emission with a matching parser.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field

import numpy as np

LESS, EQUAL, GREATER = "<=", "=", ">="
_SENSES = (LESS, EQUAL, GREATER)

_NAME_SAFE = re.compile(r"[^A-Za-z0-9_.]")


class MilpError(ValueError):
    pass


def sanitize_name(raw: str) -> str:
    out = _NAME_SAFE.sub("_", raw)
    if not out or out[0].isdigit() or out[0] == ".":
        out = "v_" + out
    return out


@dataclass
class Variable:
    id: int
    name: str
    lower: float
    upper: float
    binary: bool


@dataclass
class Constraint:
    name: str
    coeffs: dict[int, float]
    sense: str
    rhs: float


@dataclass
class BigMRecord:
    """One registered big-M relaxation, auditable against variable bounds."""

    constraint: str
    big_m: float
    bound_sup: float  # supremum of the relaxed expression from bounds


class MilpModel:
    def __init__(self, name: str = "model"):
        self.name = name
        self.variables: list[Variable] = []
        self.constraints: list[Constraint] = []
        self.objective: dict[int, float] = {}
        self.objective_constant = 0.0
        self._var_ids: dict[str, int] = {}
        self._con_names: set[str] = set()
        self.big_m_records: list[BigMRecord] = []

    # -- construction -------------------------------------------------------

    def add_variable(self, name: str, lower: float = 0.0, upper: float = math.inf,
                     binary: bool = False) -> int:
        name = sanitize_name(name)
        if name in self._var_ids:
            raise MilpError(f"duplicate variable name {name!r}")
        if binary:
            lower = max(0.0, lower)
            upper = min(1.0, upper)
        if lower > upper:
            raise MilpError(f"variable {name!r}: lower {lower} > upper {upper}")
        vid = len(self.variables)
        self.variables.append(Variable(vid, name, lower, upper, binary))
        self._var_ids[name] = vid
        return vid

    def add_binary(self, name: str) -> int:
        return self.add_variable(name, 0.0, 1.0, binary=True)

    def add_constraint(self, name: str, coeffs: dict[int, float], sense: str, rhs: float) -> None:
        name = sanitize_name(name)
        if name in self._con_names:
            raise MilpError(f"duplicate constraint name {name!r}")
        if sense not in _SENSES:
            raise MilpError(f"bad sense {sense!r}")
        nvar = len(self.variables)
        for vid in coeffs:
            if not (0 <= vid < nvar):
                raise MilpError(f"constraint {name!r} references unknown variable id {vid}")
        self._con_names.add(name)
        self.constraints.append(Constraint(name, dict(coeffs), sense, rhs))

    def add_objective_term(self, var: int, coeff: float) -> None:
        self.objective[var] = self.objective.get(var, 0.0) + coeff

    def fix_variable(self, var: int, value: float) -> None:
        v = self.variables[var]
        v.lower = v.upper = value

    # -- lookup -------------------------------------------------------------

    def id_of(self, name: str) -> int:
        return self._var_ids[sanitize_name(name)]

    def var(self, vid: int) -> Variable:
        return self.variables[vid]

    @property
    def n_variables(self) -> int:
        return len(self.variables)

    @property
    def n_constraints(self) -> int:
        return len(self.constraints)

    # -- gadgets ------------------------------------------------------------

    def link_binary_product(self, name: str, x: int, v: int) -> int:
        """Auxiliary w with w = x*v exact in every feasible integer solution.

        Uses the four McCormick inequalities, which are exact (not a
        relaxation) for binary x and bounded continuous v.
        """
        xv, vv = self.variables[x], self.variables[v]
        if not xv.binary:
            raise MilpError(f"product gate {xv.name!r} must be binary")
        lo, hi = vv.lower, vv.upper
        if not (math.isfinite(lo) and math.isfinite(hi)):
            raise MilpError(f"product operand {vv.name!r} must have finite bounds")
        w = self.add_variable(name, min(lo, 0.0), max(hi, 0.0))
        self.add_constraint(f"{name}_ub0", {w: 1.0, x: -hi}, LESS, 0.0)
        self.add_constraint(f"{name}_lb0", {w: 1.0, x: -lo}, GREATER, 0.0)
        self.add_constraint(f"{name}_ub1", {w: 1.0, v: -1.0, x: -lo}, LESS, -lo)
        self.add_constraint(f"{name}_lb1", {w: 1.0, v: -1.0, x: -hi}, GREATER, -hi)
        return w

    def freeze_if(self, name: str, trigger: dict[int, float], trigger_const: float,
                  a: int, b, big_m: float) -> None:
        """Force a == b whenever the binary-valued expression `trigger` is 1.

        `trigger` is given as (coefficients, constant) and must evaluate to
        {0, 1} in every feasible integer solution; `b` may be a variable id
        or a constant.  Adds  |a - b| <= M * (1 - trigger).
        """
        if big_m <= 0:
            raise MilpError(f"freeze {name!r}: big-M must be positive, got {big_m}")
        b_var, b_const = (b, 0.0) if isinstance(b, int) else (None, float(b))
        for tag, sign in (("fwd", 1.0), ("rev", -1.0)):
            coeffs = {a: sign}
            if b_var is not None:
                coeffs[b_var] = coeffs.get(b_var, 0.0) - sign
            for vid, c in trigger.items():
                coeffs[vid] = coeffs.get(vid, 0.0) + big_m * c
            rhs = big_m * (1.0 - trigger_const) + sign * b_const
            self.add_constraint(f"{name}_{tag}", coeffs, LESS, rhs)
        sup = self._pair_span(a, b_var, b_const)
        self.big_m_records.append(BigMRecord(name, big_m, sup))

    def _pair_span(self, a: int, b_var, b_const: float) -> float:
        va = self.variables[a]
        if b_var is None:
            lo_b = hi_b = b_const
        else:
            vb = self.variables[b_var]
            lo_b, hi_b = vb.lower, vb.upper
        return max(va.upper - lo_b, hi_b - va.lower)

    def audit_big_m(self) -> list[BigMRecord]:
        """Records whose M undershoots the bound supremum (should be empty)."""
        return [r for r in self.big_m_records if r.big_m < r.bound_sup - 1e-12]

    # -- evaluation ---------------------------------------------------------

    def constraint_activity(self, con: Constraint, values: np.ndarray) -> float:
        return float(sum(c * values[vid] for vid, c in con.coeffs.items()))

    def constraint_violation(self, con: Constraint, values: np.ndarray) -> float:
        act = self.constraint_activity(con, values)
        if con.sense == LESS:
            return max(0.0, act - con.rhs)
        if con.sense == GREATER:
            return max(0.0, con.rhs - act)
        return abs(act - con.rhs)

    def objective_value(self, values: np.ndarray) -> float:
        return float(sum(c * values[vid] for vid, c in self.objective.items())) + self.objective_constant


@dataclass
class SolvedModel:
    """A model plus a full assignment, with residual and integrality audits."""

    model: MilpModel
    values: np.ndarray
    integrality_tol: float = 1e-6

    @classmethod
    def from_assignment(cls, model: MilpModel, assignment: dict[str, float],
                        integrality_tol: float = 1e-6, bounds_tol: float = 1e-6) -> "SolvedModel":
        values = np.zeros(model.n_variables)
        for v in model.variables:
            if v.name not in assignment:
                raise MilpError(f"assignment missing variable {v.name!r}")
            values[v.id] = assignment[v.name]
        for v in model.variables:
            x = values[v.id]
            if x < v.lower - bounds_tol or x > v.upper + bounds_tol:
                raise MilpError(
                    f"variable {v.name!r} value {x} outside bounds [{v.lower}, {v.upper}]"
                )
        return cls(model, values, integrality_tol)

    def residuals(self) -> dict[str, float]:
        return {c.name: self.model.constraint_violation(c, self.values) for c in self.model.constraints}

    def max_residual(self) -> float:
        if not self.model.constraints:
            return 0.0
        return max(self.model.constraint_violation(c, self.values) for c in self.model.constraints)

    def integrality_violations(self) -> list[str]:
        out = []
        for v in self.model.variables:
            if v.binary and abs(self.values[v.id] - round(self.values[v.id])) > self.integrality_tol:
                out.append(v.name)
        return out

    def objective_value(self) -> float:
        return self.model.objective_value(self.values)

    def value_of(self, name: str) -> float:
        return float(self.values[self.model.id_of(name)])


def apply_solution(model: MilpModel, assignment: dict[str, float]) -> SolvedModel:
    return SolvedModel.from_assignment(model, assignment)


# ---------------------------------------------------------------------------
# LP text emission / parsing


def _fmt(x: float) -> str:
    if x == math.floor(x) and abs(x) < 1e15:
        return str(int(x))
    return repr(x)


def _write_expr(coeffs: dict[int, float], variables: list[Variable], parts: list[str]) -> None:
    first = True
    for vid, c in coeffs.items():
        if c == 0.0:
            continue
        name = variables[vid].name
        if first:
            parts.append(f"{_fmt(c)} {name}" if c >= 0 else f"- {_fmt(-c)} {name}")
            first = False
        else:
            parts.append(f"+ {_fmt(c)} {name}" if c >= 0 else f"- {_fmt(-c)} {name}")
    if first:
        parts.append(f"0 {variables[0].name}")


def _wrap(tokens: list[str], indent: str = " ", width: int = 200) -> list[str]:
    lines, cur = [], indent
    for tok in tokens:
        if len(cur) + len(tok) + 1 > width and cur.strip():
            lines.append(cur)
            cur = indent + " "
        cur += (" " if cur.strip() else "") + tok
    if cur.strip():
        lines.append(cur)
    return lines


def export_lp(model: MilpModel) -> str:
    """Emit deterministic LP-format text (Minimize / Subject To / Bounds /
    Binaries).  Emission order is insertion order, so identical build steps
    produce byte-identical files."""
    if model.n_variables == 0:
        return f"\\ {model.name}\nMinimize\n obj:\nSubject To\nBounds\nEnd\n"
    out = [f"\\ {model.name}", "Minimize"]
    parts: list[str] = ["obj:"]
    _write_expr(model.objective, model.variables, parts)
    out.extend(_wrap(parts))
    out.append("Subject To")
    for con in model.constraints:
        parts = [f"{con.name}:"]
        _write_expr(con.coeffs, model.variables, parts)
        parts.append(con.sense if con.sense != EQUAL else "=")
        parts.append(_fmt(con.rhs))
        out.extend(_wrap(parts))
    out.append("Bounds")
    for v in model.variables:
        if v.binary:
            if v.lower > 0.0 or v.upper < 1.0:
                out.append(f" {_fmt(v.lower)} <= {v.name} <= {_fmt(v.upper)}")
            continue
        lo_f, hi_f = math.isfinite(v.lower), math.isfinite(v.upper)
        if not lo_f and not hi_f:
            out.append(f" {v.name} free")
        elif lo_f and hi_f and v.lower == v.upper:
            out.append(f" {v.name} = {_fmt(v.lower)}")
        elif lo_f and hi_f:
            out.append(f" {_fmt(v.lower)} <= {v.name} <= {_fmt(v.upper)}")
        elif lo_f:
            out.append(f" {v.name} >= {_fmt(v.lower)}")
        else:
            out.append(f" {v.name} <= {_fmt(v.upper)}")
    binaries = [v.name for v in model.variables if v.binary]
    if binaries:
        out.append("Binaries")
        out.extend(_wrap(binaries))
    out.append("End")
    return "\n".join(out) + "\n"


_TOKEN = re.compile(r"(<=|>=|=|\+|-|:|[A-Za-z_.][A-Za-z0-9_.]*|[0-9][0-9.eE+-]*)")
_SECTIONS = {
    "minimize": "obj", "minimise": "obj", "min": "obj",
    "maximize": "obj_max", "maximise": "obj_max", "max": "obj_max",
    "subject": "st", "st": "st", "s.t.": "st", "such": "st",
    "bounds": "bounds", "bound": "bounds",
    "binaries": "bin", "binary": "bin", "bin": "bin",
    "general": "gen", "generals": "gen", "gen": "gen",
    "end": "end",
}


def _tokenize_lp(text: str) -> list[str]:
    tokens = []
    for line in text.splitlines():
        line = line.split("\\", 1)[0]
        tokens.extend(_TOKEN.findall(line))
    return tokens


def parse_lp(text: str) -> MilpModel:
    """Parse the LP dialect written by :func:`export_lp` back into a model.

    Reconstructs an equivalent model: same variables (by name), bounds,
    integrality, constraints and objective.  Also accepts the common
    section-keyword variants so externally produced files load too.
    """
    tokens = _tokenize_lp(text)
    model = MilpModel("parsed")
    bounds: dict[str, list[float]] = {}
    binaries: set[str] = set()
    order: list[str] = []

    def var_id(name: str) -> int:
        if name not in model._var_ids:
            model.add_variable(name, -math.inf, math.inf)
            order.append(name)
        return model._var_ids[name]

    i, n = 0, len(tokens)
    section = None
    maximize = False
    exprs: list[tuple[str, dict[int, float], str, float]] = []

    def read_expr(stop_at_relation: bool) -> tuple[dict[int, float], float, str | None, float]:
        nonlocal i
        coeffs: dict[int, float] = {}
        const = 0.0
        sign = 1.0
        pending: float | None = None
        while i < n:
            tok = tokens[i]
            low = tok.lower()
            if tok in ("<=", ">=", "="):
                if not stop_at_relation:
                    break
                if pending is not None:
                    const += pending
                    pending = None
                i += 1
                rhs_sign = 1.0
                if tokens[i] == "-":
                    rhs_sign, i = -1.0, i + 1
                elif tokens[i] == "+":
                    i += 1
                rhs = rhs_sign * float(tokens[i])
                i += 1
                return coeffs, const, tok, rhs
            if low in _SECTIONS and pending is None and sign == 1.0:
                break
            if tok in ("+", "-"):
                if pending is not None:  # a bare constant term ended here
                    const += pending
                    pending = None
                if tok == "-":
                    sign = -sign
            elif re.match(r"^[0-9.]", tok):
                if pending is not None:
                    const += pending
                pending = sign * float(tok)
                sign = 1.0
            else:
                coeff = pending if pending is not None else sign
                vid = var_id(tok)
                coeffs[vid] = coeffs.get(vid, 0.0) + coeff
                pending = None
                sign = 1.0
            i += 1
        if pending is not None:
            const += pending
        return coeffs, const, None, 0.0

    while i < n:
        tok = tokens[i]
        low = tok.lower()
        if low in _SECTIONS:
            kind = _SECTIONS[low]
            if kind == "st" and low == "subject":
                i += 1  # swallow "To"
            if kind == "obj_max":
                maximize = True
                kind = "obj"
            if kind == "end":
                break
            section = kind
            i += 1
            continue
        if section == "obj":
            if i + 1 < n and tokens[i + 1] == ":":
                i += 2
            coeffs, const, _, _ = read_expr(stop_at_relation=False)
            for vid, c in coeffs.items():
                model.add_objective_term(vid, -c if maximize else c)
            model.objective_constant = -const if maximize else const
        elif section == "st":
            name = f"c{len(exprs)}"
            if i + 1 < n and tokens[i + 1] == ":":
                name, i = tok, i + 2
            coeffs, const, sense, rhs = read_expr(stop_at_relation=True)
            if sense is None:
                raise MilpError(f"constraint {name!r}: missing relation")
            exprs.append((name, coeffs, sense, rhs - const))
        elif section == "bounds":
            # forms: lo <= x <= hi | x <= hi | x >= lo | x = v | x free
            start = i
            if re.match(r"^[0-9.+-]", tok):
                lo_sign = 1.0
                if tok == "-":
                    lo_sign, i = -1.0, i + 1
                elif tok == "+":
                    i += 1
                lo = lo_sign * float(tokens[i])
                i += 1
                assert tokens[i] == "<="
                name = tokens[i + 1]
                i += 2
                bounds.setdefault(name, [-math.inf, math.inf])[0] = lo
                if i < n and tokens[i] == "<=":
                    hi_sign = 1.0
                    i += 1
                    if tokens[i] == "-":
                        hi_sign, i = -1.0, i + 1
                    bounds[name][1] = hi_sign * float(tokens[i])
                    i += 1
            else:
                name = tok
                nxt = tokens[i + 1].lower() if i + 1 < n else ""
                if nxt == "free":
                    bounds[name] = [-math.inf, math.inf]
                    i += 2
                elif nxt in ("<=", ">=", "="):
                    rel = tokens[i + 1]
                    v_sign = 1.0
                    j = i + 2
                    if tokens[j] == "-":
                        v_sign, j = -1.0, j + 1
                    val = v_sign * float(tokens[j])
                    i = j + 1
                    entry = bounds.setdefault(name, [-math.inf, math.inf])
                    if rel == "<=":
                        entry[1] = val
                    elif rel == ">=":
                        entry[0] = val
                    else:
                        entry[0] = entry[1] = val
                else:
                    raise MilpError(f"cannot parse bound near token {start}: {tok!r}")
            continue
        elif section == "bin":
            binaries.add(tok)
            var_id(tok)
            i += 1
            continue
        else:
            i += 1
            continue

    for name, lohi in bounds.items():
        vid = var_id(name)
        model.variables[vid].lower, model.variables[vid].upper = lohi
    for name in binaries:
        v = model.variables[model._var_ids[name]]
        v.binary = True
        v.lower = max(v.lower, 0.0) if math.isfinite(v.lower) else 0.0
        v.upper = min(v.upper, 1.0) if math.isfinite(v.upper) else 1.0
    for v in model.variables:
        if not v.binary and v.name not in bounds:
            v.lower, v.upper = 0.0, math.inf  # LP-format default
    for name, coeffs, sense, rhs in exprs:
        model.add_constraint(name, coeffs, sense, rhs)
    return model


# ---------------------------------------------------------------------------
# solution text format: one `name value` pair per line


def format_solution(assignment: dict[str, float]) -> str:
    return "".join(f"{name} {repr(value)}\n" for name, value in assignment.items())


def parse_solution_text(text: str, expected: list[str]) -> dict[str, float]:
    """Parse `name value` lines; extra names are dropped, missing names raise."""
    values: dict[str, float] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 2:
            raise MilpError(f"solution line {lineno}: expected 'name value', got {line!r}")
        try:
            values[parts[0]] = float(parts[1])
        except ValueError:
            raise MilpError(f"solution line {lineno}: bad number {parts[1]!r}") from None
    missing = [name for name in expected if name not in values]
    if missing:
        raise MilpError(f"solution missing variable(s): {', '.join(missing[:5])}"
                        + ("..." if len(missing) > 5 else ""))
    return {name: values[name] for name in expected}
