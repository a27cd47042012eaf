"""Command line front end: solve, verify, probes, echo-scenario.

Exit status contract: 0 exactly when the run converged / the certification
or all probes passed.  Reports are plain text with every tolerance and
iteration budget echoed; series go to long-format CSV
(time_cell, series_name, value) for external plotting.
"""

from __future__ import annotations

import argparse
import csv
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .economy import (
    Economy,
    assemble_qvi,
    check_concavity,
    check_growth_condition,
    default_caps,
    survivability_check,
)
from .grids import GridFunction, PriceCurve, make_grid
from .qvi import QVIParams, solve_qvi, solve_qvi_truncated
from .scenario import Scenario, build_economy, echo_scenario, load_scenario, solver_params
from .verify import (
    budget_residuals,
    certify_equilibrium,
    coercivity_probe,
    market_clearing_residual,
    pseudomonotonicity_probe,
    walras_residual,
)


def _write_series_csv(path: Path, series: dict) -> None:
    """series maps name -> 1-d array over cells; rows are (cell, name, value)."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["time_cell", "series_name", "value"])
        for name in series:
            for k, v in enumerate(series[name]):
                writer.writerow([k, name, repr(float(v))])


def _read_series_csv(path: Path) -> dict:
    series = {}
    with open(path, "r", newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != ["time_cell", "series_name", "value"]:
            raise ValueError(f"{path}: expected header time_cell,series_name,value")
        for row in reader:
            series.setdefault(row["series_name"], []).append(
                (int(row["time_cell"]), float(row["value"]))
            )
    out = {}
    for name, pairs in series.items():
        pairs.sort()
        out[name] = np.array([v for _, v in pairs])
    return out


def _price_series(p: PriceCurve) -> dict:
    return {f"price[{j}]": p.values[:, j] for j in range(p.components)}


def _allocation_series(blocks) -> dict:
    out = {}
    for i, b in enumerate(blocks):
        for j in range(b.components):
            out[f"alloc[{i}].good[{j}]"] = b.values[:, j]
    return out


def _params_lines(params: QVIParams) -> list:
    return [f"  {k}: {v}" for k, v in asdict(params).items() if k != "start_price"]


def _solve_report_text(scn_path, scn: Scenario, eco: Economy, caps, params, report, cert) -> str:
    lines = [
        "qvex solve report",
        f"scenario: {scn_path}",
        f"grid: horizon={scn.horizon} cells={scn.cells} goods={scn.goods} agents={eco.n_agents}",
        f"caps: {np.asarray(caps).tolist()} (cap_slack={scn.cap_slack})",
        "parameters:",
        *_params_lines(params),
        f"converged: {report.converged}",
        f"iterations: {report.iterations}",
        f"outer_residual: {report.outer_residual:.6e}",
        f"inner_residuals: {[f'{r:.3e}' for r in report.inner_residuals]}",
        f"truncation_radius_used: {report.truncation_radius_used}",
    ]
    if report.message:
        lines.append(f"message: {report.message}")
    blocks = report.agent_allocations()
    clearing = market_clearing_residual(eco, blocks)
    budgets = budget_residuals(eco, report.price, blocks)
    lines += [
        f"market_clearing_integrals: {[f'{c:.6e}' for c in clearing]}",
        f"budget_gaps: {[f'{b:.6e}' for b in budgets]}",
        f"walras_aggregate: {walras_residual(eco, report.price, blocks):.6e}",
        f"survivability: {survivability_check(eco)}",
        f"certification (tol {cert.tolerance:g}): {'pass' if cert.verdict else 'fail'}",
    ]
    lines += [f"  {k}: {v:.6e}" for k, v in cert.residuals.items()]
    lines += [
        "",
        "prices (rows = cells):",
    ]
    for k in range(scn.cells):
        lines.append("  " + " ".join(f"{v:.10f}" for v in report.price.values[k]))
    for i, b in enumerate(blocks):
        lines.append(f"allocation of agent {i} (rows = cells):")
        for k in range(scn.cells):
            lines.append("  " + " ".join(f"{v:.10f}" for v in b.values[k]))
    return "\n".join(lines) + "\n"


def run_solve(scn_path: str, out_dir: str, **overrides) -> int:
    scn = load_scenario(scn_path)
    eco = build_economy(scn)
    caps = default_caps(eco, scn.cap_slack)
    prob = assemble_qvi(eco, caps)
    radius_schedule = overrides.pop("radius_schedule", None) or scn.solver.radius_schedule
    params = solver_params(scn, **overrides)

    if radius_schedule:
        report = solve_qvi_truncated(prob, radius_schedule, params)
    else:
        report = solve_qvi(prob, params)

    # every emitted pair is certified against the equilibrium definition
    cert = certify_equilibrium(
        eco,
        report.price,
        report.agent_allocations(),
        tol=10.0 * params.outer_tol,
        seed=params.seed,
    )
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.txt").write_text(
        _solve_report_text(scn_path, scn, eco, caps, params, report, cert), encoding="utf-8"
    )
    _write_series_csv(out / "prices.csv", _price_series(report.price))
    _write_series_csv(out / "allocations.csv", _allocation_series(report.agent_allocations()))
    return 0 if report.converged and cert.verdict else 1


def _candidate_from_csv(scn: Scenario, price_path, alloc_path, n_agents):
    price_series = _read_series_csv(Path(price_path))
    alloc_series = _read_series_csv(Path(alloc_path))
    grid = make_grid(scn.horizon, scn.cells)

    expected_p = [f"price[{j}]" for j in range(scn.goods)]
    if sorted(price_series) != sorted(expected_p):
        raise ValueError(f"price CSV series mismatch: got {sorted(price_series)}")
    cols = [price_series[name] for name in expected_p]
    if any(len(c) != scn.cells for c in cols):
        raise ValueError("price CSV cell count does not match the scenario grid")
    price = PriceCurve(grid, np.column_stack(cols))

    blocks = []
    for i in range(n_agents):
        names = [f"alloc[{i}].good[{j}]" for j in range(scn.goods)]
        missing = [n for n in names if n not in alloc_series]
        if missing:
            raise ValueError(f"allocation CSV is missing series {missing}")
        cols = [alloc_series[n] for n in names]
        if any(len(c) != scn.cells for c in cols):
            raise ValueError("allocation CSV cell count does not match the scenario grid")
        blocks.append(GridFunction(grid, np.column_stack(cols)))
    extra = set(alloc_series) - {f"alloc[{i}].good[{j}]" for i in range(n_agents) for j in range(scn.goods)}
    if extra:
        raise ValueError(f"allocation CSV has unexpected series {sorted(extra)}")
    return price, blocks


def run_verify(scn_path: str, price_path: str, alloc_path: str, out_dir: str, tol: float) -> int:
    scn = load_scenario(scn_path)
    eco = build_economy(scn)
    try:
        price, blocks = _candidate_from_csv(scn, price_path, alloc_path, eco.n_agents)
    except ValueError as exc:
        print(f"candidate rejected: {exc}", file=sys.stderr)
        return 2
    report = certify_equilibrium(eco, price, blocks, tol=tol, seed=scn.solver.seed)

    lines = [
        "qvex certification ledger",
        f"scenario: {scn_path}",
        f"candidate: {price_path}, {alloc_path}",
        f"tolerance: {tol}",
        f"seed: {scn.solver.seed}",
        f"samples: {report.samples_used}",
        f"verdict: {'pass' if report.verdict else 'fail'}",
        "residuals:",
    ]
    lines += [f"  {k}: {v:.6e}" for k, v in report.residuals.items()]
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "certification.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
    print(lines[6])
    return 0 if report.verdict else 1


def run_probes(scn_path: str, out_dir: str, seed: int) -> int:
    scn = load_scenario(scn_path)
    eco = build_economy(scn)
    caps = default_caps(eco, scn.cap_slack)
    prob = assemble_qvi(eco, caps)
    uniform = PriceCurve.uniform(eco.grid, eco.goods)

    reports = []
    for i, agent in enumerate(eco.agents):
        g = check_growth_condition(agent, samples=300, seed=seed + i)
        g.name = f"growth[{i}]"
        c = check_concavity(agent, samples=300, seed=seed + 100 + i)
        c.name = f"concavity[{i}]"
        reports += [g, c]
    sets = prob.constraint_map(uniform)
    for i, (op, s, w) in enumerate(zip(prob.agent_operators, sets, prob.warm_starts)):
        r = pseudomonotonicity_probe(op, s, w, pairs=150, seed=seed + 200 + i, scale=2.0)
        r.name = f"pseudomonotonicity[{i}]"
        reports.append(r)
    # caps bound the feasible set, so any sampled norm stays below this radius
    r_d = 1.0 + float(np.sqrt(eco.n_agents * np.sum(np.asarray(caps) ** 2) / eco.grid.dt))
    cr = coercivity_probe(prob, uniform, r_d, samples=48, seed=seed + 500)
    cr.name = "coercivity"
    reports.append(cr)

    lines = [f"qvex probe report for {scn_path}", f"seed: {seed}"]
    lines += [r.summary() for r in reports]
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "probes.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
    for r in reports:
        print(r.summary())
    return 0 if all(r.verdict for r in reports) else 1


def _parse_radius_schedule(text):
    if text is None:
        return None
    try:
        sched = tuple(float(tok) for tok in text.split(",") if tok.strip())
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad radius schedule {text!r}") from exc
    if not sched:
        raise argparse.ArgumentTypeError("empty radius schedule")
    return sched


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qvex", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--scenario", required=True, help="scenario YAML file")
        p.add_argument("--out", default="qvex-out", help="output directory")

    p_solve = sub.add_parser("solve", help="solve a scenario and emit report + CSV series")
    common(p_solve)
    p_solve.add_argument("--seed", type=int, default=None)
    p_solve.add_argument("--sequential", action="store_true", help="force single-threaded inner solves")
    p_solve.add_argument("--tol", type=float, default=None, help="override outer tolerance")
    p_solve.add_argument("--max-iter", type=int, default=None, help="override outer iteration budget")
    p_solve.add_argument(
        "--radius-schedule",
        type=_parse_radius_schedule,
        default=None,
        help="comma-separated increasing radii; enables the truncated solve",
    )

    p_verify = sub.add_parser("verify", help="certify an externally supplied candidate")
    common(p_verify)
    p_verify.add_argument("--price", required=True, help="candidate prices CSV")
    p_verify.add_argument("--allocation", required=True, help="candidate allocations CSV")
    p_verify.add_argument("--tol", type=float, default=1e-6)

    p_probes = sub.add_parser("probes", help="run the structural probes on a scenario")
    common(p_probes)
    p_probes.add_argument("--seed", type=int, default=None)

    p_echo = sub.add_parser("echo-scenario", help="print the scenario with defaults filled")
    p_echo.add_argument("--scenario", required=True)
    p_echo.add_argument("--out", default=None, help="write to file instead of stdout")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "solve":
            overrides = {}
            if args.seed is not None:
                overrides["seed"] = args.seed
            if args.sequential:
                overrides["parallel"] = False
            if args.tol is not None:
                overrides["outer_tol"] = args.tol
            if args.max_iter is not None:
                overrides["max_outer"] = args.max_iter
            return run_solve(
                args.scenario, args.out, radius_schedule=args.radius_schedule, **overrides
            )
        if args.command == "verify":
            return run_verify(args.scenario, args.price, args.allocation, args.out, args.tol)
        if args.command == "probes":
            scn = load_scenario(args.scenario)
            seed = args.seed if args.seed is not None else scn.solver.seed
            return run_probes(args.scenario, args.out, seed)
        if args.command == "echo-scenario":
            text = echo_scenario(load_scenario(args.scenario))
            if args.out:
                Path(args.out).write_text(text, encoding="utf-8")
            else:
                sys.stdout.write(text)
            return 0
    except Exception as exc:  # surfaced as diagnostics, not tracebacks
        print(f"qvex: error: {exc}", file=sys.stderr)
        return 2
    return 2


if __name__ == "__main__":
    sys.exit(main())
