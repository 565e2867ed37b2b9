"""Command-line entry point: fit, assess, allocate, sensitivity, report, simulate."""

from __future__ import annotations

import argparse
import math
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import reports
from .aggregate import corporate_annual_loss_mixture
from .allocate import (
    Enumeration,
    Scenario,
    StrategyEvaluator,
    enumerate_strategies,
    sensitivity_sweep,
)
from .calibrate import (
    Calibration,
    calibrate,
    generate_synthetic_incidents,
    read_incidents,
    severity_pools,
    write_incidents,
)
from .config import ModelParameters, RunConfig, _triple_key, bundled, load_config, write_parameter_file
from .dist import convolve, scale_severity, tail_summary
from .errors import ConfigError, CyberAllocError, DataError, InsufficientDataError

MAX_REJECT_SHARE = 0.01
STRATEGY_COLUMNS = 8


@dataclass
class FitResult:
    calibration: Calibration
    parameters: ModelParameters
    pools: dict
    rejected: list


def _write(out: Path, stem: str, text: str, tsv: str) -> None:
    out.mkdir(parents=True, exist_ok=True)
    (out / f"{stem}.txt").write_text(text, encoding="utf-8")
    (out / f"{stem}.tsv").write_text(tsv, encoding="utf-8")


def _ceiling(cfg: RunConfig, pools: dict) -> float:
    spec = cfg.loss_ceiling
    if spec is None:
        return math.inf
    if spec == "observed":
        positive = [x for losses in pools.values() for x in losses if x > 0]
        return max(positive) if positive else math.inf
    return float(spec)


# ---------------------------------------------------------------------------
# stages


def run_fit(cfg: RunConfig) -> FitResult:
    if cfg.incident_file is None:
        raise DataError("the config names no incident file to fit")
    ingest = read_incidents(cfg.incident_file, cfg.cascade)
    for lineno, msg in ingest.rejected:
        print(f"{cfg.incident_file}:{lineno}: rejected: {msg}", file=sys.stderr)
    if ingest.reject_share > MAX_REJECT_SHARE:
        raise DataError(f"{len(ingest.rejected)} rows rejected ({ingest.reject_share:.1%} of the file)")
    calib = calibrate(ingest.records, cfg.cascade)
    pools = severity_pools(ingest.records, cfg.cascade)
    upper = _ceiling(cfg, pools)
    params = ModelParameters(
        cfg.cascade,
        {t: r.severity_model(upper=upper) for t, r in calib.severity.items()},
        {p: r.frequency_model() for p, r in calib.frequency.items()},
        None if calib.corporate_frequency is None else calib.corporate_frequency.frequency_model(),
        calib.mixture,
    )
    return FitResult(calib, params, pools, ingest.rejected)


def fit_report(cfg: RunConfig, fit: FitResult) -> tuple[str, str]:
    first, last = fit.calibration.window
    tables = [
        reports.pool_summary_table(cfg.cascade, fit.pools),
        reports.severity_fit_table(cfg.cascade, fit.calibration.severity),
        reports.frequency_fit_table(cfg.cascade, fit.calibration),
    ]
    mix = fit.calibration.mixture
    if mix is not None:
        t = reports.Table("Threat mixture", list(cfg.cascade.threats))
        t.add("p", mix.p.tolist(), "param")
        tables.append(t)
    tables[-1].notes.append(f"observation window {first}-{last}")
    tables[-1].notes.extend(fit.calibration.notes)
    return reports.render(tables)


def _ensure_parameters(cfg: RunConfig) -> RunConfig:
    if cfg.parameters is None:
        cfg.parameters = run_fit(cfg).parameters
    return cfg


def assessment_report(cfg: RunConfig) -> tuple[str, str]:
    """Per investment option: pair and corporate loss summaries."""
    _ensure_parameters(cfg)
    problem = cfg.problem()
    losses = problem.losses
    ev = StrategyEvaluator(losses)
    level = problem.weights.level
    tables = []
    pair_cols = [(i, k) for (i, k) in reports.pair_order(cfg.cascade) if not losses.loss_free(i, k)]
    for inv in problem.investment_options():
        theta = np.where(np.array(inv, dtype=bool), problem.menu.theta_low, 1.0)
        label = ", ".join(f"{x:g}" for x in theta)
        cols = [f"S{i + 1}{k + 1}" for i, k in pair_cols] + ["S (pairs)"]
        has_mix = losses.mixture is not None and losses.corporate_frequency is not None
        if has_mix:
            cols.append("S (mixture)")
        t = reports.Table(f"Annual losses at theta = ({label})", cols)
        dists = [ev.pair_loss(theta, i, k) for i, k in pair_cols]
        total = dists[0] if dists else None
        for d in dists[1:]:
            total = convolve(total, d)
        summaries = dists + ([total] if total is not None else [])
        if has_mix:
            summaries.append(corporate_annual_loss_mixture(losses, theta))
        analytic = []
        for i, k in pair_cols:
            freq = losses.frequencies[(i, k)]
            ez = sum(scale_severity(losses.severities[(i, j, k)], float(theta[j])).mean()
                     for j in losses.pair_controls(i, k))
            analytic.append(freq.mean * ez)
        analytic.append(sum(analytic))
        if has_mix:
            analytic.append(math.nan)
        tails = [tail_summary(d, level) for d in summaries]
        t.add("mean", [d.mean() for d in summaries], "money")
        t.add("mean (closed form)", analytic, "money")
        t.add(f"VaR {level:g}", [x.var for x in tails], "money")
        t.add(f"TVaR {level:g}", [x.mean for x in tails], "money")
        ded = [float(problem.deductibles[p]) for p in pair_cols]
        prem = [ev.pair_state(theta, i, k, d, level).premium if math.isfinite(d) else math.nan
                for (i, k), d in zip(pair_cols, ded)]
        prem += [float(np.nansum(prem))] + ([math.nan] if has_mix else [])
        t.add("net premium", prem, "money")
        t.add("lattice points", [len(d) for d in summaries])
        tables.append(t)
    lost = [f"({cfg.cascade.threats[i]}, {cfg.cascade.assets[k]})" for i, k in losses.pairs if losses.loss_free(i, k)]
    if lost and tables:
        tables[-1].notes.append("loss-free pairs: " + ", ".join(lost))
    return reports.render(tables)


def allocation_report(cfg: RunConfig, budget="config") -> tuple[str, str, Enumeration]:
    _ensure_parameters(cfg)
    problem = cfg.problem(budget)
    res = enumerate_strategies(problem)
    distinct = res.distinct(problem.losses)
    budget_mode = problem.budget is not None
    mode = f"budget {reports.millions(problem.budget)} million" if budget_mode else "no budget constraint"
    top = reports.strategy_table(cfg.cascade, distinct[:STRATEGY_COLUMNS],
                                 f"Best strategies, {mode}", budget_mode)
    top.notes.append(f"{len(res.outcomes)} strategies evaluated, {res.n_feasible} feasible")
    ranking = reports.ranking_table(cfg.cascade, res.outcomes, "Full ranking")
    text, tsv = reports.render([top, ranking])
    return text, tsv, res


def sensitivity_report(cfg: RunConfig, names: list[str] | None = None, budget="config"):
    _ensure_parameters(cfg)
    scenarios: list[Scenario] = [cfg.scenario(n) for n in names] if names else list(cfg.scenarios)
    problem = cfg.problem()
    if budget != "config":
        budgets = [budget]
    elif cfg.sensitivity_budgets is not None:
        budgets = cfg.sensitivity_budgets
    else:
        budgets = [cfg.budget]
    rows = sensitivity_sweep(problem, scenarios, budgets)
    text, tsv = reports.render([reports.sensitivity_table(cfg.cascade, rows)])
    return text, tsv, rows


# ---------------------------------------------------------------------------
# argument handling


def _budget_arg(value: str):
    if value == "config":
        return value
    if value.lower() in ("none", "unlimited", "inf"):
        return None
    try:
        b = float(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"budget must be a number or 'unlimited', got {value!r}") from None
    if b < 0:
        raise argparse.ArgumentTypeError("budget must be non-negative")
    return b


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cyberalloc", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, default=None,
                        help="run config (JSON); defaults to the bundled case study")
    common.add_argument("--out", type=Path, default=Path("out"), help="output directory")
    common.add_argument("--step", type=float, default=None, help="lattice step in currency units")
    common.add_argument("--seed", type=int, default=None, help="seed for synthetic data")
    common.add_argument("--budget", type=_budget_arg, default="config",
                        help="total budget override, or 'unlimited'")
    common.add_argument("--scenario", action="append", default=None,
                        help="run only this scenario (repeatable)")
    for name, text in [
        ("fit", "fit severity and frequency models to an incident file"),
        ("assess", "annual loss summaries for every investment option"),
        ("allocate", "rank all investment x insurance strategies"),
        ("sensitivity", "optimal strategy per scenario"),
        ("report", "every stage in one run"),
        ("simulate", "write a synthetic incident file from the configured parameters"),
    ]:
        sub.add_parser(name, parents=[common], help=text)
    return parser


def _load(args) -> RunConfig:
    cfg = load_config(args.config or bundled("case_study.json"))
    if args.step is not None:
        if not args.step > 0:
            raise ConfigError("step must be positive")
        cfg.step = args.step
    if args.seed is not None:
        cfg.seed = args.seed
        cfg.synthetic["seed"] = args.seed
    return cfg


def _simulate(cfg: RunConfig, out: Path) -> Path:
    params = cfg.require_parameters()
    syn = cfg.synthetic
    industry = {
        _triple_key(cfg.cascade, label): int(n) for label, n in dict(syn.get("industry_positive", {})).items()
    }
    records = generate_synthetic_incidents(
        cfg.cascade,
        params.severities,
        params.frequencies,
        int(syn.get("years", 21)),
        int(syn.get("seed", cfg.seed)),
        int(syn.get("start_year", 1997)),
        industry,
    )
    out.mkdir(parents=True, exist_ok=True)
    path = out / "incidents.csv"
    write_incidents(path, records)
    return path


def run(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    cfg = _load(args)
    out: Path = args.out
    cmd = args.command
    if cmd == "simulate":
        path = _simulate(cfg, out)
        print(f"wrote {path}")
        return 0
    if cmd in ("fit", "report") and (cmd == "fit" or cfg.incident_file is not None):
        fit = run_fit(cfg)
        text, tsv = fit_report(cfg, fit)
        _write(out, "fits", text, tsv)
        write_parameter_file(out / "parameters.json", cfg.cascade_block, fit.parameters)
        cfg.parameters = fit.parameters
        if cmd == "fit":
            return 0
    if cmd in ("assess", "report"):
        _write(out, "assessment", *assessment_report(cfg))
    if cmd in ("allocate", "report"):
        text, tsv, _ = allocation_report(cfg, args.budget)
        _write(out, "strategies", text, tsv)
    if cmd in ("sensitivity", "report"):
        text, tsv, _ = sensitivity_report(cfg, args.scenario, args.budget)
        _write(out, "sensitivity", text, tsv)
    return 0


def main(argv: list[str] | None = None) -> int:
    try:
        return run(argv)
    except InsufficientDataError as exc:
        print(f"error: insufficient data: {exc}", file=sys.stderr)
        return exc.exit_code
    except CyberAllocError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
