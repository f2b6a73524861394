"""Standalone LP-file solver used as a subprocess solver backend.

Usage: ``gridrestore-lp model.lp solution.txt [--gap G] [--time-limit S]``

Reads an LP-format file, solves it with the in-process HiGHS adapter and
writes ``name value`` lines (preceded by ``# status`` / ``# objective``
comments).  This makes any machine with this package installed a conforming
external solver for the subprocess adapter.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .milp import format_solution, parse_lp
from .solve import ScipyHighsAdapter, SolveOptions


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="gridrestore-lp", description=__doc__)
    ap.add_argument("lp_file")
    ap.add_argument("solution_file")
    ap.add_argument("--gap", type=float, default=0.0001)
    ap.add_argument("--time-limit", type=float, default=600.0)
    args = ap.parse_args(argv)

    model = parse_lp(Path(args.lp_file).read_text())
    options = SolveOptions(gap=args.gap, time_limit_s=args.time_limit, polish=False)
    result = ScipyHighsAdapter().solve(model, Path(args.lp_file), options)

    out = [f"# status {result.status}"]
    if result.objective_value is not None:
        out.append(f"# objective {result.objective_value!r}")
    body = "" if result.assignment is None else format_solution(result.assignment)
    Path(args.solution_file).write_text("\n".join(out) + "\n" + body)

    if result.status in ("optimal", "feasible_gap"):
        return 0
    if result.status == "infeasible":
        return 3
    return 4


if __name__ == "__main__":
    sys.exit(main())
