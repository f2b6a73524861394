"""Command-line front end.

Subcommands::

    gridrestore analyze --feeder f.json                 # graph report
    gridrestore plan    --feeder f.json --scenario s.json [--steps N]
    gridrestore audit   --feeder f.json --scenario s.json --plan plan.json
    gridrestore sweep   --feeder f.json --scenario s.json --sweep spec.json

Every run writes machine-readable artifacts (JSON/CSV/LP) into --out-dir
with a manifest.  Exit codes: 0 success, 2 validation error, 3 infeasible,
4 solver error, 5 audit failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

from . import audit as audit_mod
from .feeder import FeederFormatError, FeederModel, ScenarioConfig, load_feeder, validate
from .formulation import FormulationError, assemble
from .graphs import GraphError, analyze_subgraph, connected_subgraphs, eccentricity
from .solve import SolveOptions, get_adapter, solve

logger = logging.getLogger(__name__)

EXIT_OK, EXIT_VALIDATION, EXIT_INFEASIBLE, EXIT_SOLVER, EXIT_AUDIT = 0, 2, 3, 4, 5

SWEEP_PARAMETERS = ("nondispatchable_capacity_factor", "dr_lower_bound_factor", "n_steps")


@dataclass(frozen=True)
class SweepSpec:
    parameter: str
    values: tuple[float, ...]

    def check(self) -> None:
        if self.parameter not in SWEEP_PARAMETERS:
            raise ValueError(f"sweep parameter must be one of {SWEEP_PARAMETERS}")
        if not self.values:
            raise ValueError("sweep values must be non-empty")
        for v in self.values:
            if self.parameter == "nondispatchable_capacity_factor" and v <= 0:
                raise ValueError(f"capacity factor must be positive, got {v}")
            if self.parameter == "dr_lower_bound_factor" and not (0.0 <= v <= 1.0):
                raise ValueError(f"DR lower-bound factor must be in [0, 1], got {v}")
            if self.parameter == "n_steps" and (v != int(v) or v < 1):
                raise ValueError(f"n_steps sweep values must be integers >= 1, got {v}")


def load_scenario(path: str | None) -> ScenarioConfig:
    if path is None:
        return ScenarioConfig()
    doc = json.loads(Path(path).read_text())
    if not isinstance(doc, dict):
        raise ValueError("scenario file must be a JSON object")
    fields = {f.name for f in dataclasses.fields(ScenarioConfig)}
    unknown = doc.keys() - fields
    if unknown:
        raise ValueError(f"scenario file has unknown field(s): {', '.join(sorted(unknown))}")
    if doc.get("load_unbalance_limit") is None:
        doc.pop("load_unbalance_limit", None)
    if doc.get("dg_phase_unbalance_limit") is None:
        doc.pop("dg_phase_unbalance_limit", None)
    cfg = ScenarioConfig(**doc)
    cfg.check()
    return cfg


def load_sweep(path: str) -> SweepSpec:
    doc = json.loads(Path(path).read_text())
    spec = SweepSpec(parameter=doc["parameter"], values=tuple(doc["values"]))
    spec.check()
    return spec


def apply_sweep_value(model: FeederModel, config: ScenarioConfig,
                      parameter: str, value: float) -> tuple[FeederModel, ScenarioConfig]:
    if parameter == "n_steps":
        return model, replace(config, n_steps=int(value))
    if parameter == "dr_lower_bound_factor":
        loads = tuple(
            replace(l, dr_min_fraction=value * l.dr_max_fraction) if l.controllable_dr else l
            for l in model.loads
        )
        return replace(model, loads=loads), config
    if parameter == "nondispatchable_capacity_factor":
        ders = []
        for d in model.ders:
            if d.kind != "pq_nondispatchable":
                ders.append(d)
                continue
            fp = None if d.forecast_p is None else d.forecast_p * value
            fq = None if d.forecast_q is None else d.forecast_q * value
            ders.append(replace(
                d, p_min=d.p_min * value, p_max=d.p_max * value,
                q_min=d.q_min * value, q_max=d.q_max * value,
                forecast_p=fp, forecast_q=fq,
            ))
        return replace(model, ders=tuple(ders)), config
    raise ValueError(f"unknown sweep parameter {parameter!r}")


# ---------------------------------------------------------------------------
# analyze


def run_analyze(feeder_path: str, out_dir: str | None = None) -> tuple[int, dict]:
    try:
        model = load_feeder(feeder_path)
    except FeederFormatError as exc:
        return EXIT_VALIDATION, {"error": str(exc)}
    report: dict = {"feeder": feeder_path, "subgraphs": []}
    for i, sub in enumerate(connected_subgraphs(model)):
        entry: dict = {"subgraph": i, "n_nodes": len(sub.nodes), "n_branches": len(sub.branches)}
        try:
            graph, est = analyze_subgraph(sub)
        except GraphError as exc:
            entry["error"] = str(exc)
            report["subgraphs"].append(entry)
            continue
        entry["blocks"] = [
            {"id": blk.id, "nodes": list(blk.nodes), "hosts_black_start": blk.hosts_black_start}
            for blk in graph.blocks
        ]
        entry["edges"] = [{"from_block": u, "to_block": v, "branch": b} for u, v, b in graph.edges]
        entry["eccentricity"] = {str(blk.id): eccentricity(graph, blk.id) for blk in graph.blocks}
        entry["rsr"] = est.rsr
        entry["rsd"] = est.rsd
        entry["n_black_start"] = est.n_black_start
        entry["conservative_steps"] = est.conservative
        entry["generous_steps"] = est.generous
        report["subgraphs"].append(entry)
    if out_dir:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "analyze.json").write_text(json.dumps(report, indent=1))
    return EXIT_OK, report


# ---------------------------------------------------------------------------
# plan


def run_plan(feeder_path: str, scenario_path: str | None, out_dir: str,
             steps: int | None = None, solver: str | None = None,
             solver_path: str | None = None, gap: float | None = None,
             time_limit: float | None = None) -> tuple[int, dict]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    try:
        model = load_feeder(feeder_path)
        config = load_scenario(scenario_path)
    except (FeederFormatError, ValueError) as exc:
        return EXIT_VALIDATION, {"error": str(exc)}
    report = validate(model)
    if not report.ok:
        return EXIT_VALIDATION, {"error": f"feeder invalid:\n{report}"}
    if steps is not None:
        config = replace(config, n_steps=steps)
    if gap is not None:
        config = replace(config, optimality_gap=gap)
    if time_limit is not None:
        config = replace(config, solver_time_limit_s=time_limit)
    try:
        adapter = get_adapter(solver, solver_path)
    except Exception as exc:
        return EXIT_VALIDATION, {"error": str(exc)}

    manifest: dict = {"feeder": feeder_path, "scenario": scenario_path, "subgraphs": []}
    worst = EXIT_OK
    planned = 0
    for i, sub in enumerate(connected_subgraphs(model)):
        tag = f"sg{i}"
        entry: dict = {"subgraph": i, "n_nodes": len(sub.nodes)}
        sub_dir = out / tag
        sub_dir.mkdir(exist_ok=True)
        try:
            problem = assemble(sub, config)
        except (FormulationError, GraphError) as exc:
            entry["status"] = "not_restorable"
            entry["error"] = str(exc)
            manifest["subgraphs"].append(entry)
            continue
        entry["n_steps"] = problem.n_steps
        entry["n_variables"] = problem.model.n_variables
        entry["n_constraints"] = problem.model.n_constraints
        (sub_dir / "provenance.txt").write_text(problem.provenance_report() + "\n")
        options = SolveOptions(gap=config.optimality_gap, time_limit_s=config.solver_time_limit_s)
        result = solve(problem, options, adapter, lp_path=sub_dir / "model.lp")
        entry["status"] = result.status
        entry["wall_time_s"] = round(result.wall_time_s, 3)
        entry["solver"] = result.solver
        if result.status == "infeasible":
            worst = max(worst, EXIT_INFEASIBLE)
            manifest["subgraphs"].append(entry)
            continue
        if not result.feasible:
            entry["error"] = result.message
            worst = max(worst, EXIT_SOLVER)
            manifest["subgraphs"].append(entry)
            continue
        plan, audit_report = audit_mod.extract_and_audit(result, problem)
        (sub_dir / "plan.json").write_text(plan.to_json())
        (sub_dir / "summary.csv").write_text(audit_mod.summarize(plan))
        (sub_dir / "audit.json").write_text(audit_report.to_json())
        entry["objective_kw_steps"] = round(plan.objective_kw_steps, 6)
        entry["reported_gap"] = result.reported_gap
        entry["audit_ok"] = audit_report.ok
        entry["final_step_kw"] = round(plan.steps[-1].served_p_total(), 6) if plan.steps else 0.0
        planned += 1
        if not audit_report.ok:
            worst = max(worst, EXIT_AUDIT)
        manifest["subgraphs"].append(entry)
    if planned == 0 and worst == EXIT_OK:
        worst = EXIT_VALIDATION
        manifest["error"] = "no subgraph could be planned (no black-start droop DG reachable)"
    (out / "manifest.json").write_text(json.dumps(manifest, indent=1))
    return worst, manifest


# ---------------------------------------------------------------------------
# audit


def run_audit(feeder_path: str, scenario_path: str | None, plan_path: str) -> tuple[int, dict]:
    try:
        model = load_feeder(feeder_path)
        config = load_scenario(scenario_path)
        plan = audit_mod.RestorationPlan.from_json(Path(plan_path).read_text())
    except (FeederFormatError, ValueError, OSError, KeyError) as exc:
        return EXIT_VALIDATION, {"error": str(exc)}
    report = audit_mod.audit(plan, model, config)
    return (EXIT_OK if report.ok else EXIT_AUDIT), json.loads(report.to_json())


# ---------------------------------------------------------------------------
# sweep


def _sweep_point(payload: dict) -> dict:
    """One sweep evaluation; runs in a worker process."""
    model = load_feeder(payload["feeder"])
    config = load_scenario(payload["scenario"])
    if payload.get("steps") is not None:
        config = replace(config, n_steps=payload["steps"])
    model, config = apply_sweep_value(model, config, payload["parameter"], payload["value"])
    row = {"value": payload["value"], "status": "", "objective_kw_steps": "",
           "n_variables": "", "wall_time_s": ""}
    t0 = time.perf_counter()
    try:
        subs = connected_subgraphs(model)
        if len(subs) != 1:
            row["status"] = "error:disconnected"
            return row
        problem = assemble(subs[0], config)
        row["n_variables"] = problem.model.n_variables
        adapter = get_adapter(payload.get("solver"), payload.get("solver_path"))
        options = SolveOptions(gap=config.optimality_gap, time_limit_s=config.solver_time_limit_s)
        result = solve(problem, options, adapter)
        row["status"] = result.status
        row["wall_time_s"] = round(time.perf_counter() - t0, 3)
        if result.feasible:
            plan, audit_report = audit_mod.extract_and_audit(result, problem)
            row["objective_kw_steps"] = round(plan.objective_kw_steps, 6)
            if not audit_report.ok:
                row["status"] = "audit_failed"
    except (FormulationError, GraphError, FeederFormatError) as exc:
        row["status"] = f"error:{exc}"
        row["wall_time_s"] = round(time.perf_counter() - t0, 3)
    return row


def run_sweep(feeder_path: str, scenario_path: str | None, sweep_path: str, out_dir: str,
              jobs: int = 1, steps: int | None = None, solver: str | None = None,
              solver_path: str | None = None) -> tuple[int, list[dict]]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    try:
        spec = load_sweep(sweep_path)
        load_feeder(feeder_path)  # fail fast on a bad document
        load_scenario(scenario_path)
    except (FeederFormatError, ValueError, KeyError) as exc:
        return EXIT_VALIDATION, [{"error": str(exc)}]
    payloads = [
        {"feeder": feeder_path, "scenario": scenario_path, "parameter": spec.parameter,
         "value": v, "steps": steps, "solver": solver, "solver_path": solver_path}
        for v in spec.values
    ]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_sweep_point, payloads))
    else:
        rows = [_sweep_point(p) for p in payloads]
    header = ["value", "objective_kw_steps", "status", "n_variables", "wall_time_s"]
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(str(row.get(k, "")) for k in header))
    csv_text = "\n".join(lines) + "\n"
    (out / f"sweep_{spec.parameter}.csv").write_text(csv_text)
    return EXIT_OK, rows


# ---------------------------------------------------------------------------
# argument parsing


def make_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="gridrestore",
                                 description="black-start restoration planning for islanded microgrids")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, scenario=True):
        p.add_argument("--feeder", required=True, help="feeder document (JSON)")
        if scenario:
            p.add_argument("--scenario", default=None, help="scenario settings (JSON)")
        p.add_argument("--out-dir", default="gridrestore_out")

    p = sub.add_parser("analyze", help="graph report: bus blocks, eccentricities, step estimates")
    common(p, scenario=False)

    p = sub.add_parser("plan", help="build, solve and audit a restoration plan")
    common(p)
    p.add_argument("--steps", type=int, default=None,
                   help="restoration steps (default: generous graph estimate)")
    p.add_argument("--solver", default=None, help="scipy | glpk | subprocess")
    p.add_argument("--solver-path", default=None, help="command for the subprocess adapter")
    p.add_argument("--gap", type=float, default=None)
    p.add_argument("--time-limit", type=float, default=None)

    p = sub.add_parser("audit", help="re-audit a stored plan")
    common(p)
    p.add_argument("--plan", required=True)

    p = sub.add_parser("sweep", help="re-solve over a parameter sweep")
    common(p)
    p.add_argument("--sweep", required=True, help="sweep spec (JSON: parameter, values)")
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--solver", default=None)
    p.add_argument("--solver-path", default=None)
    return ap


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    args = make_parser().parse_args(argv)
    if args.command == "analyze":
        code, report = run_analyze(args.feeder, args.out_dir)
        print(json.dumps(report, indent=1))
        return code
    if args.command == "plan":
        code, manifest = run_plan(args.feeder, args.scenario, args.out_dir,
                                  steps=args.steps, solver=args.solver,
                                  solver_path=args.solver_path, gap=args.gap,
                                  time_limit=args.time_limit)
        print(json.dumps(manifest, indent=1))
        return code
    if args.command == "audit":
        code, report = run_audit(args.feeder, args.scenario, args.plan)
        print(json.dumps(report, indent=1))
        return code
    if args.command == "sweep":
        code, rows = run_sweep(args.feeder, args.scenario, args.sweep, args.out_dir,
                               jobs=args.jobs, steps=args.steps, solver=args.solver,
                               solver_path=args.solver_path)
        print(json.dumps(rows, indent=1))
        return code
    return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
