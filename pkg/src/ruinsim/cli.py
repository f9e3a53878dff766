"""Command line entry point: ``ruinsim run|reproduce|tail``.

Exit codes: 0 success, 2 invalid configuration, 3 model hypothesis violated.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .config import ConfigError, ExperimentConfig, load_config
from .distributions import RngStream
from .estimators import (
    GoldieProblem,
    HypothesisViolation,
    asymptotic_ruin_growth,
    asymptotic_ruin_runoff,
    compound_tail,
    estimate_goldie_constant,
    growth_hypotheses,
    runoff_compound_problem,
    runoff_hypotheses,
    simulate_fixed_point,
    single_claim_decomposition,
)
from .montecarlo import hybrid_ruin_grid, mc_ruin_grid
from .report import CSV_COLUMNS, EstimateReport

EXIT_OK, EXIT_CONFIG, EXIT_HYPOTHESIS = 0, 2, 3

TABLES = {"table5.1": "table51", "table5.2": "table52"}
DESK_REPS, PAPER_REPS = 10**6, 10**7

# estimators that rely on the asymptotic theory and so need its hypotheses
_RUNOFF_THEORY = {"asymptotic-runoff", "hybrid", "compound-tail"}
_RUNOFF_ONLY = _RUNOFF_THEORY | {"decomposition"}


@dataclass
class RunResult:
    config: ExperimentConfig
    reports: list[EstimateReport]
    checks: dict[float, dict] = field(default_factory=dict)
    rates: dict[float, dict] = field(default_factory=dict)

    def by_method(self, method: str, lam: Optional[float] = None) -> dict[float, EstimateReport]:
        return {r.u: r for r in self.reports if r.method == method and (lam is None or r.lam == lam)}


def _require(checks: dict) -> None:
    for name, ok in checks.items():
        if ok is False:
            raise HypothesisViolation(name)


def _prechecks(spec, estimators: Sequence[str]) -> tuple[dict, dict]:
    """Hypothesis checks and solved rates for one model; raises on a violation."""
    est = set(estimators)
    if spec.regime == "growth":
        if est & _RUNOFF_ONLY:
            raise HypothesisViolation("run-off model", f"{sorted(est & _RUNOFF_ONLY)} need a run-off model")
        if "asymptotic-growth" not in est:
            return {}, {}
        checks, sol = growth_hypotheses(spec)
        _require(checks)
        return checks, {"rho": sol.rate, "mu": sol.mu, "beta": spec.beta_1()}
    if "asymptotic-growth" in est:
        raise HypothesisViolation("growth model", "asymptotic-growth needs a growth model")
    if not est & _RUNOFF_THEORY:
        return {}, {}
    checks, sol = runoff_hypotheses(spec)
    _require(checks)
    return checks, {"rho": sol.rate, "mu": sol.mu, "beta": spec.beta_2()}


def _growth_reports(spec, cfg: ExperimentConfig) -> list[EstimateReport]:
    constant = None
    if spec.positivity_possible():
        gen = RngStream(cfg.goldie_seed, 0).generator
        problem = GoldieProblem.from_growth(spec)
        samples = simulate_fixed_point(problem, burn_in=cfg.goldie_burn_in, n_samples=cfg.goldie_samples, rng=gen)
        constant = estimate_goldie_constant(problem, samples, gen)
    out = []
    for u in cfg.u_grid:
        rep = asymptotic_ruin_growth(spec, u, constant=constant)
        rep.seed = cfg.goldie_seed
        out.append(rep)
    return out


def _compound_reports(spec, cfg: ExperimentConfig) -> list[EstimateReport]:
    problem = runoff_compound_problem(spec)
    out = []
    for u in cfg.u_grid:
        res = compound_tail(problem, math.log(u))
        out.append(
            EstimateReport(
                method="compound-tail",
                estimate=res.refined_estimate,
                u=u,
                lam=spec.lam,
                probability=False,
                hypothesis_checks=res.hypothesis_checks,
                extras={"rho": res.rho, "mu": res.mu, "crude": res.log_rate_estimate},
            )
        )
    return out


def _decomposition_reports(spec, cfg: ExperimentConfig) -> list[EstimateReport]:
    out = []
    for j, u in enumerate(cfg.u_grid):
        res = single_claim_decomposition(spec, u, cfg.decomposition_n_max, rng=RngStream(cfg.mc.seed, 1000 + j).generator)
        out.append(
            EstimateReport(
                method="decomposition",
                estimate=res.total,
                u=u,
                lam=spec.lam,
                seed=cfg.mc.seed,
                probability=False,
                extras={"method": res.method, "peak_year": res.peak_year, "unreported_mass": res.truncation_bound},
            )
        )
    return out


def run_experiment(cfg: ExperimentConfig) -> RunResult:
    """Run every configured estimator on every λ of the grid."""
    result = RunResult(cfg, [])
    for lam in cfg.lambda_grid:
        spec = replace(cfg.model, lam=lam)
        checks, rates = _prechecks(spec, cfg.estimators)
        result.checks[lam], result.rates[lam] = checks, rates
        for method in cfg.estimators:
            if method == "mc":
                result.reports += mc_ruin_grid(spec, cfg.u_grid, cfg.mc)
            elif method == "hybrid":
                result.reports += hybrid_ruin_grid(spec, cfg.u_grid, cfg.lam0, cfg.mc)
            elif method == "asymptotic-runoff":
                result.reports += [asymptotic_ruin_runoff(spec, u) for u in cfg.u_grid]
            elif method == "asymptotic-growth":
                result.reports += _growth_reports(spec, cfg)
            elif method == "compound-tail":
                result.reports += _compound_reports(spec, cfg)
            elif method == "decomposition":
                result.reports += _decomposition_reports(spec, cfg)
    return result


def ratio_rows(result: RunResult) -> list[dict]:
    """Per (λ, u): closed form, simulation, hybrid and their quotients where available."""
    rows = []
    for lam in result.config.lambda_grid:
        e1 = result.by_method("asymptotic-runoff", lam) or result.by_method("asymptotic-growth", lam)
        e2 = result.by_method("mc", lam)
        e3 = result.by_method("hybrid", lam)
        for u in result.config.u_grid:
            row = {"u": u, "lambda": lam}
            for key, src in (("E1", e1), ("E2", e2), ("E3", e3)):
                if u in src:
                    row[key] = src[u].estimate
            if "E1" in row and "E2" in row and row["E1"] > 0:
                row["E2/E1"] = row["E2"] / row["E1"]
            if "E2" in row and "E3" in row and row["E2"] > 0:
                row["E3/E2"] = row["E3"] / row["E2"]
            rows.append(row)
    return rows


def format_ratio_table(rows: list[dict]) -> str:
    keys = ["u", "lambda", "E1", "E2", "E2/E1", "E3", "E3/E2"]
    keys = [k for k in keys if any(k in r for r in rows)]
    lines = ["  ".join(f"{k:>11}" for k in keys)]
    for r in rows:
        cells = []
        for k in keys:
            v = r.get(k)
            if v is None:
                cells.append(f"{'-':>11}")
            elif k in ("E2/E1", "E3/E2"):
                cells.append(f"{v:>11.3f}")
            elif k in ("u", "lambda"):
                cells.append(f"{v:>11g}")
            else:
                cells.append(f"{v:>11.3e}")
        lines.append("  ".join(cells))
    return "\n".join(lines)


def render_csv(reports: Sequence[EstimateReport]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in reports:
        w.writerow(r.to_csv_row())
    return buf.getvalue()


def render_report(result: RunResult) -> str:
    cfg = result.config
    parts = [
        f"experiment: {cfg.name}",
        f"ruinsim version: {__version__}",
        f"mc seed: {cfg.mc.seed}",
        f"replications: {cfg.mc.replications}",
        f"workers: {cfg.mc.workers}",
        f"estimators: {', '.join(cfg.estimators)}",
        "config:",
        cfg.to_json(),
    ]
    for lam in cfg.lambda_grid:
        parts.append(f"\n== lambda = {lam:g}")
        for name, ok in result.checks.get(lam, {}).items():
            parts.append(f"check {name}: {ok}")
        for name, v in result.rates.get(lam, {}).items():
            parts.append(f"{name}: {v:.12g}")
    parts.append("\n== summary")
    parts.append(format_ratio_table(ratio_rows(result)))
    for r in result.reports:
        parts.append("\n-- " + r.method)
        parts.append(r.to_text())
    return "\n".join(parts) + "\n"


def _write_outputs(result: RunResult, out_dir: Optional[str]) -> tuple[Path, Path]:
    cfg = result.config
    base = Path(out_dir) if out_dir else Path(".")
    csv_path = Path(cfg.output_csv) if cfg.output_csv and not out_dir else base / f"{cfg.name}.csv"
    rep_path = Path(cfg.output_report) if cfg.output_report and not out_dir else base / f"{cfg.name}_report.txt"
    csv_path.parent.mkdir(parents=True, exist_ok=True)
    rep_path.parent.mkdir(parents=True, exist_ok=True)
    csv_path.write_text(render_csv(result.reports))
    rep_path.write_text(render_report(result))
    return csv_path, rep_path


def _with_mc(cfg: ExperimentConfig, reps: Optional[int], workers: Optional[int], seed: Optional[int]) -> ExperimentConfig:
    mc = cfg.mc
    if reps is not None:
        mc = replace(mc, replications=reps)
    if workers is not None:
        mc = replace(mc, workers=workers)
    if seed is not None:
        mc = replace(mc, seed=seed)
    return replace(cfg, mc=mc)


def tail_plotdata(cfg: ExperimentConfig, points: Optional[int] = None) -> tuple[list[dict], Optional[float]]:
    """Simulated and closed-form ruin probabilities on a u grid, plus the log-log slope."""
    spec = cfg.model
    if spec.regime != "runoff":
        raise HypothesisViolation("run-off model", "tail data needs a run-off model")
    _prechecks(spec, ["asymptotic-runoff"])
    u_grid = list(cfg.u_grid)
    if points is not None and len(u_grid) > 1:
        u_grid = list(np.geomspace(min(u_grid), max(u_grid), points))
    sims = mc_ruin_grid(spec, u_grid, cfg.mc)
    rows = []
    for u, sim in zip(u_grid, sims):
        asym = asymptotic_ruin_runoff(spec, u).estimate
        rows.append({"u": u, "mc": sim.estimate, "mc_se": sim.std_error, "asymptotic": asym, "ratio": sim.estimate / asym})
    return rows, log_slope([r["u"] for r in rows], [r["mc"] for r in rows])


def log_slope(u: Sequence[float], p: Sequence[float]) -> Optional[float]:
    """Least-squares slope of log p against log u over the positive estimates."""
    u, p = np.asarray(u, float), np.asarray(p, float)
    keep = p > 0
    if keep.sum() < 2:
        return None
    return float(np.polyfit(np.log(u[keep]), np.log(p[keep]), 1)[0])


def _cmd_run(args) -> int:
    cfg = _with_mc(load_config(args.config), args.reps, args.workers, args.seed)
    result = run_experiment(cfg)
    csv_path, rep_path = _write_outputs(result, args.out)
    print(format_ratio_table(ratio_rows(result)))
    print(f"wrote {csv_path} and {rep_path}")
    return EXIT_OK


def _cmd_reproduce(args) -> int:
    cfg = load_config(TABLES[args.table])
    reps = args.reps if args.reps is not None else (PAPER_REPS if args.paper_scale else DESK_REPS)
    cfg = _with_mc(cfg, reps, args.workers, args.seed)
    result = run_experiment(cfg)
    csv_path, rep_path = _write_outputs(result, args.out)
    print(f"{args.table}: lambda = {cfg.model.lam:g}, {reps} replications, seed {cfg.mc.seed}")
    print(format_ratio_table(ratio_rows(result)))
    print(f"wrote {csv_path} and {rep_path}")
    return EXIT_OK


def _cmd_tail(args) -> int:
    cfg = _with_mc(load_config(args.config), args.reps, args.workers, args.seed)
    rows, slope = tail_plotdata(cfg, args.points)
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=["u", "mc", "mc_se", "asymptotic", "ratio"], lineterminator="\n")
    w.writeheader()
    w.writerows(rows)
    text = buf.getvalue()
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    if slope is not None:
        print(f"slope of log E2 vs log u: {slope:.4f}", file=sys.stderr if not args.out else sys.stdout)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ruinsim", description="Ruin probability experiments.")
    p.add_argument("--version", action="version", version=f"ruinsim {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def mc_opts(sp):
        sp.add_argument("--reps", type=int, help="override the number of replications")
        sp.add_argument("--workers", type=int, help="worker processes for the simulation")
        sp.add_argument("--seed", type=int, help="override the simulation seed")

    run = sub.add_parser("run", help="run a config file or bundled preset")
    run.add_argument("config", help="path to a JSON config, or a preset name (table51, table52)")
    run.add_argument("--out", help="directory for the CSV and report (default: paths in the config, else .)")
    mc_opts(run)
    run.set_defaults(func=_cmd_run)

    rep = sub.add_parser("reproduce", help="reproduce a published table")
    rep.add_argument("table", choices=sorted(TABLES))
    rep.add_argument("--paper-scale", action="store_true", help=f"use {PAPER_REPS:.0e} replications instead of {DESK_REPS:.0e}")
    rep.add_argument("--out", help="output directory")
    mc_opts(rep)
    rep.set_defaults(func=_cmd_reproduce)

    tail = sub.add_parser("tail", help="simulated vs closed-form tail on a u grid")
    tail.add_argument("config")
    tail.add_argument("--points", type=int, help="replace the u grid by this many log-spaced points")
    tail.add_argument("--out", help="CSV output path (default stdout)")
    mc_opts(tail)
    tail.set_defaults(func=_cmd_tail)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ValueError as exc:
        if isinstance(exc, HypothesisViolation):
            print(exc, file=sys.stderr)
            return EXIT_HYPOTHESIS
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
