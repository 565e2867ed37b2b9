"""Plain-text report tables with tab-delimited twins.

Text output shows currency in millions to two decimals (half-to-even);
the delimited twin carries the unrounded base-unit values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from decimal import ROUND_HALF_EVEN, Decimal
from typing import Sequence

import numpy as np

from .allocate import StrategyOutcome, SweepRow
from .calibrate import Calibration, FitReport
from .cascade import CascadeModel

MILLION = Decimal(1_000_000)


def millions(x: float) -> str:
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return "-"
    d = (Decimal(float(x)) / MILLION).quantize(Decimal("0.01"), rounding=ROUND_HALF_EVEN)
    if d == 0:
        d = abs(d)
    return str(d)


def _fmt(value, kind: str) -> str:
    if value is None:
        return "-"
    if kind == "money":
        return millions(value)
    if kind == "flag":
        return "yes" if value else "no"
    if kind == "float":
        return "-" if math.isnan(value) else f"{value:.2f}"
    if kind == "param":
        return "-" if math.isnan(value) else f"{value:.4g}"
    if kind == "sci":
        return "-" if math.isnan(value) else f"{value:.2e}"
    return str(value)


def _raw(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


@dataclass
class Table:
    title: str
    columns: list[str]
    rows: list[tuple[str, str, list, str]] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)

    def add(self, label: str, values: Sequence, kind: str | list[str] = "text", group: str = "") -> None:
        if len(values) != len(self.columns):
            raise ValueError(f"row {label!r} has {len(values)} cells for {len(self.columns)} columns")
        self.rows.append((group, label, list(values), kind))

    def text(self) -> str:
        # a column name may span several header lines, split on "\n"
        parts = [c.split("\n") for c in self.columns]
        depth = max((len(p) for p in parts), default=1)
        headers = [["", ""] + [p[d] if d < len(p) else "" for p in parts] for d in range(depth)]
        body = []
        last_group = None
        for group, label, values, kind in self.rows:
            shown = group if group != last_group else ""
            last_group = group
            kinds = kind if isinstance(kind, list) else [kind] * len(values)
            body.append([shown, label] + [_fmt(v, c) for v, c in zip(values, kinds)])
        widths = [max(len(r[c]) for r in headers + body) for c in range(len(headers[0]))]
        has_group = widths[0] > 0

        def line(cells):
            left = [cells[0].ljust(widths[0])] if has_group else []
            left.append(cells[1].ljust(widths[1]))
            right = [c.rjust(w) for c, w in zip(cells[2:], widths[2:])]
            return "  ".join(left + right).rstrip()

        rule = "-" * max(len(line(h)) for h in headers + body)
        out = [self.title, rule] + [line(h) for h in headers] + [rule] + [line(r) for r in body] + [rule]
        out += self.notes
        return "\n".join(out) + "\n"

    def tsv(self) -> str:
        out = ["\t".join(["table", "group", "row"] + [c.replace("\n", " ") for c in self.columns])]
        for group, label, values, _ in self.rows:
            out.append("\t".join([self.title, group, label] + [_raw(v) for v in values]))
        return "\n".join(out) + "\n"


def render(tables: Sequence[Table]) -> tuple[str, str]:
    text = "\n".join(t.text() for t in tables)
    tsv = "".join(t.tsv() for t in tables)
    return text, tsv


# ---------------------------------------------------------------------------
# fits


def pool_summary_table(cascade: CascadeModel, pools: dict) -> Table:
    triples = sorted(pools)
    cols = [f"X{i + 1}{j + 1}{k + 1}" for i, j, k in triples]
    t = Table("Raw loss pools", cols)
    data = [np.asarray(pools[p], dtype=float) for p in triples]
    pos = [x[x > 0] for x in data]
    t.add("Total observations", [x.size for x in data])
    t.add("Zero losses", [int((x == 0).sum()) for x in data])
    t.add("Non-zero losses", [x.size for x in pos])
    for name, fn in [("Minimum", np.min), ("First quartile", lambda x: np.quantile(x, 0.25)),
                     ("Median", np.median), ("Third quartile", lambda x: np.quantile(x, 0.75)),
                     ("Maximum", np.max), ("Mean", np.mean)]:
        t.add(f"Non-zero {name.lower()}", [float(fn(x)) if x.size else math.nan for x in pos], "sci")
    return t


def severity_fit_table(cascade: CascadeModel, fits: dict[tuple, FitReport]) -> Table:
    triples = sorted(fits)
    cols = [f"X{i + 1}{j + 1}{k + 1}" for i, j, k in triples]
    t = Table("Severity fits (zero mass q, positive part by family)", cols)
    t.add("q", [fits[p].q for p in triples], "float")
    names = {"lognormal": ("log-mean", "log-sd"), "weibull": ("shape", "scale"), "pareto": ("shape", "scale")}
    for fam, (a, b) in names.items():
        if not all(_has(fits[p], fam) for p in triples):
            continue
        cands = [fits[p].candidate(fam) for p in triples]
        t.add(a, [c.params[0] for c in cands], "param", fam)
        t.add(b, [c.params[1] for c in cands], "param", fam)
        t.add("AIC", [c.aic for c in cands], "float", fam)
    t.add("selected", [fits[p].selected + (" (tie)" if fits[p].tie else "") for p in triples])
    return t


def _has(report: FitReport, family: str) -> bool:
    try:
        report.candidate(family)
        return True
    except KeyError:
        return False


def frequency_fit_table(cascade: CascadeModel, calib: Calibration) -> Table:
    keys = [("N", calib.corporate_frequency)] + [
        (f"N{i + 1}{k + 1}", calib.frequency[(i, k)]) for (i, k) in sorted(calib.frequency)
    ]
    keys = [(name, r) for name, r in keys if r is not None]
    t = Table("Frequency fits (annual counts)", [name for name, _ in keys])
    reports = [r for _, r in keys]
    if all(_has(r, "poisson") for r in reports):
        t.add("mean", [r.candidate("poisson").params[0] for r in reports], "param", "poisson")
        t.add("AIC", [r.candidate("poisson").aic for r in reports], "float", "poisson")
    if all(_has(r, "negative_binomial") for r in reports):
        nb = [r.candidate("negative_binomial") for r in reports]
        t.add("size", [c.params[0] for c in nb], "param", "negative binomial")
        t.add("mean", [c.params[1] for c in nb], "param", "negative binomial")
        t.add("AIC", [c.aic for c in nb], "float", "negative binomial")
    t.add("years", [r.n_total for r in reports])
    t.add("selected", [r.selected + (" (tie)" if r.tie else "") for r in reports])
    for r in reports:
        for c in r.candidates:
            if c.note and c.note not in t.notes:
                t.notes.append(c.note)
    return t


# ---------------------------------------------------------------------------
# strategies


def pair_order(cascade: CascadeModel) -> list[tuple[int, int]]:
    """Pairs listed asset by asset, threats inside."""
    return [(i, k) for k in range(cascade.n) for i in range(cascade.l)]


def strategy_table(cascade: CascadeModel, outcomes: Sequence[StrategyOutcome], title: str,
                   budget_mode: bool) -> Table:
    cols = [str(p + 1) for p in range(len(outcomes))]
    t = Table(title, cols)
    m = cascade.m
    for j in range(m):
        t.add(f"theta_{j + 1}", [o.theta[j] for o in outcomes], "float", "Controls")
    for j in range(m):
        t.add(f"M_{j + 1}", [o.M[j] for o in outcomes], "money", "Investment (millions)")
    pairs = pair_order(cascade)
    for i, k in pairs:
        t.add(f"({cascade.threats[i]}, {cascade.assets[k]})", [o.insured(i, k) for o in outcomes], "flag",
              "Insurance")
    for i, k in pairs:
        t.add(f"pi_{i + 1}{k + 1}", [o.premiums[i, k] for o in outcomes], "money", "Premiums (millions)")
    for i, k in pairs:
        t.add(f"K_{i + 1}{k + 1}", [o.reserves.K[i, k] for o in outcomes], "money", "Reserves (millions)")
    g = "Objective (millions)"
    t.add("g_c", [o.g_c for o in outcomes], "money", g)
    t.add("g_I", [o.g_I for o in outcomes], "money", g)
    t.add("g_r", [o.g_r for o in outcomes], "money", g)
    t.add("Total", [o.total for o in outcomes], "money", g)
    if budget_mode:
        t.add("Total cost", [o.cash_cost for o in outcomes], "money", "Budget")
        t.add("Feasible", [o.feasible for o in outcomes], "flag", "Budget")
    return t


def ranking_table(cascade: CascadeModel, outcomes: Sequence[StrategyOutcome], title: str) -> Table:
    cols = ["invest", "insure", "M", "pi", "K", "g_c", "g_I", "g_r", "total", "cash", "feasible"]
    kinds = ["text", "text"] + ["money"] * 8 + ["flag"]
    t = Table(title, cols)
    for rank, o in enumerate(outcomes, 1):
        insured = ",".join(f"{i + 1}{k + 1}" for i, k in pair_order(cascade) if o.insured(i, k)) or "none"
        row = ["".join(str(x) for x in o.investment), insured, o.investment_total, o.premium_total,
               o.reserve_total, o.g_c, o.g_I, o.g_r, o.total, o.cash_cost, o.feasible]
        t.add(str(rank), row, kinds)
    return t


# ---------------------------------------------------------------------------
# sensitivity


def budget_label(beta: float | None) -> str:
    return "unlimited" if beta is None else f"budget {millions(beta)}M"


def sensitivity_table(cascade: CascadeModel, rows: Sequence[SweepRow]) -> Table:
    cols = [f"{r.scenario.label}\n{budget_label(r.budget)}" for r in rows]
    t = Table("Optimal strategy per scenario", cols)
    best = [r.best for r in rows]

    def pick(fn):
        return [None if b is None else fn(b) for b in best]

    for j in range(cascade.m):
        t.add(f"theta_{j + 1}", pick(lambda b: b.theta[j]), "float", "Controls")
    for i, k in pair_order(cascade):
        t.add(f"({cascade.threats[i]}, {cascade.assets[k]})", pick(lambda b: b.insured(i, k)), "flag", "Insurance")
    for i, k in pair_order(cascade):
        t.add(f"K_{i + 1}{k + 1}", pick(lambda b: b.reserves.K[i, k]), "money", "Reserves (millions)")
    t.add("Total", pick(lambda b: b.total), "money", "Objective (millions)")
    t.add("Total cost", pick(lambda b: b.cash_cost), "money", "Objective (millions)")
    t.add("Feasible strategies", [r.n_feasible for r in rows], "text", "Enumeration")
    return t
