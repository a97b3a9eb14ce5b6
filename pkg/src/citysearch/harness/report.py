"""Suite aggregation (means, CIs, completion curves, per-relation tables) and file output."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

CSV_COLUMNS = ("trial_id", "baseline", "depth", "seed", "steps", "success",
               "discounted_reward", "relations")


def mean_ci(values) -> tuple[float, float, float]:
    """Mean and normal-approximation 95% interval (mean +- 1.96 SE)."""
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        return float("nan"), float("nan"), float("nan")
    m = float(v.mean())
    if v.size < 2:
        return m, m, m
    half = 1.96 * float(v.std(ddof=1)) / math.sqrt(v.size)
    return m, m - half, m + half


def completion_curve(results, max_steps: int = 200) -> list:
    """Tasks completed within each step limit 1..max_steps."""
    counts = np.zeros(max_steps + 1, dtype=int)
    for r in results:
        if r.success and r.steps <= max_steps:
            counts[r.steps] += 1
    return np.cumsum(counts)[1:].tolist()


@dataclass
class ConditionSummary:
    baseline: str
    depth: int
    n: int
    mean: float
    ci_low: float
    ci_high: float
    successes: int
    curve: list = field(repr=False, default_factory=list)


@dataclass
class SuiteReport:
    conditions: dict                  # (baseline, depth) -> ConditionSummary
    prepositions: list                # rows: relation, depth, baseline, n, mean, ci_low, ci_high
    gaps: dict                        # (a, b, depth) -> (mean, lo, hi) of paired differences
    failures: list
    max_steps: int = 200

    def summary(self, baseline, depth) -> ConditionSummary:
        return self.conditions[(baseline, depth)]


def _trial_key(r):
    # trial ids are "<task>|<baseline>|d<depth>"; the task part pairs baselines
    return r.trial_id.split("|")[0]


def paired_gap(results, a: str, b: str, depth: int):
    ra = {_trial_key(r): r.discounted_reward for r in results if r.baseline == a and r.depth == depth}
    rb = {_trial_key(r): r.discounted_reward for r in results if r.baseline == b and r.depth == depth}
    keys = sorted(set(ra) & set(rb))
    return mean_ci([ra[k] - rb[k] for k in keys])


def aggregate(results, max_steps: int = 200, failures=()) -> SuiteReport:
    ok = [r for r in results if not r.error]
    conditions = {}
    for key in sorted({(r.baseline, r.depth) for r in ok}):
        rs = [r for r in ok if (r.baseline, r.depth) == key]
        m, lo, hi = mean_ci([r.discounted_reward for r in rs])
        conditions[key] = ConditionSummary(key[0], key[1], len(rs), m, lo, hi,
                                           sum(r.success for r in rs), completion_curve(rs, max_steps))
    rows = []
    for rel in sorted({rel for r in ok for rel in r.relations}):
        for (baseline, depth) in sorted(conditions):
            rs = [r for r in ok if r.baseline == baseline and r.depth == depth and rel in r.relations]
            if rs:
                m, lo, hi = mean_ci([r.discounted_reward for r in rs])
                rows.append({"relation": rel, "depth": depth, "baseline": baseline, "n": len(rs),
                             "mean": m, "ci_low": lo, "ci_high": hi})
    gaps = {}
    baselines = sorted({b for b, _ in conditions})
    for depth in sorted({d for _, d in conditions}):
        for a in baselines:
            for b in baselines:
                if a != b and a == "slu" and (a, depth) in conditions and (b, depth) in conditions:
                    gaps[(a, b, depth)] = paired_gap(ok, a, b, depth)
    return SuiteReport(conditions, rows, gaps, list(failures), max_steps)


def _fmt(x: float) -> str:
    return f"{x:.6f}"


def results_csv(results) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in sorted(results, key=lambda r: r.trial_id):
        w.writerow([r.trial_id, r.baseline, r.depth, r.seed, r.steps, int(r.success),
                    _fmt(r.discounted_reward), ";".join(r.relations)])
    return buf.getvalue()


def prepositions_csv(report: SuiteReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["relation", "depth", "baseline", "n", "mean", "ci_low", "ci_high"])
    for row in report.prepositions:
        w.writerow([row["relation"], row["depth"], row["baseline"], row["n"],
                    _fmt(row["mean"]), _fmt(row["ci_low"]), _fmt(row["ci_high"])])
    return buf.getvalue()


def field_csv(field_flat, width: int) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["x", "y", "probability"])
    for idx, p in enumerate(field_flat):
        w.writerow([idx % width, idx // width, f"{p:.12g}"])
    return buf.getvalue()


def summary_dict(report: SuiteReport) -> dict:
    return {
        "conditions": [
            {"baseline": c.baseline, "depth": c.depth, "n": c.n, "mean": c.mean,
             "ci95": [c.ci_low, c.ci_high], "successes": c.successes}
            for c in report.conditions.values()
        ],
        "paired_gaps": [
            {"a": a, "b": b, "depth": d, "mean": m, "ci95": [lo, hi]}
            for (a, b, d), (m, lo, hi) in sorted(report.gaps.items())
        ],
        "failures": report.failures,
    }


def format_table(report: SuiteReport) -> str:
    lines = [f"{'baseline':<10} {'depth':>5} {'n':>4} {'mean':>9} {'95% CI':>21} {'found':>6}"]
    for c in report.conditions.values():
        lines.append(f"{c.baseline:<10} {c.depth:>5} {c.n:>4} {c.mean:>9.2f} "
                     f"[{c.ci_low:>8.2f}, {c.ci_high:>8.2f}] {c.successes:>6}")
    for (a, b, d), (m, lo, hi) in sorted(report.gaps.items()):
        lines.append(f"gap {a}-{b} depth {d}: {m:.2f} [{lo:.2f}, {hi:.2f}]")
    return "\n".join(lines)
