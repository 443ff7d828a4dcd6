"""Evaluation metrics, multi-seed aggregation, and distribution reports.

Pearson correlation uses a two-pass (mean-subtracted) computation: the
single-pass formula loses precision on near-constant prediction vectors,
which heavy imbalance makes common. A zero-variance input yields None
rather than 0 or an exception, and reports print it as "n/a".
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from .scorebin import NUM_CLASSES, bin_indices

STD_CONVENTION = "sample std over runs (n-1 denominator, n = seed count)"


def pearson(preds, targets) -> float | None:
    """Sample Pearson correlation; None if either input has zero variance."""
    preds = np.asarray(preds, dtype=float)
    targets = np.asarray(targets, dtype=float)
    if preds.shape != targets.shape:
        raise ValueError(f"length mismatch: {preds.shape} vs {targets.shape}")
    if len(preds) < 2:
        raise ValueError("pearson needs at least 2 points")
    dp = preds - preds.mean()
    dt = targets - targets.mean()
    vp = float(np.sum(dp * dp))
    vt = float(np.sum(dt * dt))
    if vp == 0.0 or vt == 0.0:
        return None
    r = float(np.sum(dp * dt)) / math.sqrt(vp * vt)
    return min(1.0, max(-1.0, r))


def mse(preds, targets) -> float:
    preds = np.asarray(preds, dtype=float)
    targets = np.asarray(targets, dtype=float)
    if preds.shape != targets.shape:
        raise ValueError(f"length mismatch: {preds.shape} vs {targets.shape}")
    if len(preds) == 0:
        raise ValueError("mse needs at least 1 point")
    return float(np.mean((preds - targets) ** 2))


def score_histogram(values) -> list[int]:
    """Counts per score class over the 11-bin lattice."""
    return np.bincount(bin_indices(np.asarray(values)), minlength=NUM_CLASSES).tolist()


@dataclass
class AspectEval:
    """Single-run evaluation of one aspect."""

    pcc: float | None
    mse: float
    pred_histogram: list[int]
    target_histogram: list[int]
    pred_min: float
    pred_max: float
    pred_mean: float
    pred_sd: float
    best_pcc: float | None = None


@dataclass
class AspectAggregate:
    """Across-seed mean/std of one aspect's metrics."""

    pcc_mean: float | None
    pcc_std: float | None
    pcc_undefined: int
    mse_mean: float
    mse_std: float
    best_pcc_mean: float | None = None
    best_pcc_std: float | None = None


@dataclass
class EvalReport:
    """Evaluation over one or more seeds.

    ``runs[i]`` holds the per-aspect evaluation for ``seeds[i]``;
    ``aggregate`` is present once at least two runs were combined.
    """

    seeds: list[int]
    runs: list[dict[str, AspectEval]]
    aggregate: dict[str, AspectAggregate] | None = None
    std_convention: str = STD_CONVENTION

    @property
    def per_aspect(self) -> dict[str, AspectEval]:
        return self.runs[0]

    @property
    def aspect_names(self) -> list[str]:
        return list(self.runs[0].keys())

    def to_json(self, indent: int | None = 2) -> str:
        return json.dumps(asdict(self), indent=indent)


def evaluate_aspect(preds, targets) -> AspectEval:
    """PCC, MSE, score-class histograms, and prediction summary stats."""
    preds = np.asarray(preds, dtype=float)
    targets = np.asarray(targets, dtype=float)
    return AspectEval(
        pcc=pearson(preds, targets),
        mse=mse(preds, targets),
        pred_histogram=score_histogram(preds),
        target_histogram=score_histogram(targets),
        pred_min=float(preds.min()),
        pred_max=float(preds.max()),
        pred_mean=float(preds.mean()),
        pred_sd=float(preds.std()),
    )


def distribution_report(
    preds: dict[str, np.ndarray], targets: dict[str, np.ndarray]
) -> dict[str, AspectEval]:
    """Per-aspect prediction/target histograms plus prediction min/max/mean/sd."""
    if set(preds) != set(targets):
        raise ValueError(f"aspect sets differ: {sorted(preds)} vs {sorted(targets)}")
    out = {}
    for name in preds:
        if len(preds[name]) == 0:
            raise ValueError(f"aspect {name!r}: empty prediction array")
        out[name] = evaluate_aspect(preds[name], targets[name])
    return out


def _mean_std(values: list[float]) -> tuple[float, float]:
    arr = np.asarray(values, dtype=float)
    std = float(arr.std(ddof=1)) if len(arr) > 1 else 0.0
    return float(arr.mean()), std


def aggregate_runs(reports: list[EvalReport]) -> EvalReport:
    """Combine single-seed reports into one with across-seed mean/std.

    Undefined PCC values are excluded from the mean/std and counted in
    ``pcc_undefined``.
    """
    if len(reports) < 2:
        raise ValueError("aggregation needs at least 2 reports")
    aspect_names = reports[0].aspect_names
    for rep in reports[1:]:
        if rep.aspect_names != aspect_names:
            raise ValueError(
                f"aspect sets differ across reports: {aspect_names} vs {rep.aspect_names}"
            )

    runs = [run for rep in reports for run in rep.runs]
    seeds = [s for rep in reports for s in rep.seeds]
    aggregate: dict[str, AspectAggregate] = {}
    for name in aspect_names:
        evals = [run[name] for run in runs]
        defined = [e.pcc for e in evals if e.pcc is not None]
        pcc_mean, pcc_std = _mean_std(defined) if defined else (None, None)
        mse_mean, mse_std = _mean_std([e.mse for e in evals])
        best_defined = [e.best_pcc for e in evals if e.best_pcc is not None]
        best_mean, best_std = _mean_std(best_defined) if best_defined else (None, None)
        aggregate[name] = AspectAggregate(
            pcc_mean=pcc_mean,
            pcc_std=pcc_std,
            pcc_undefined=len(evals) - len(defined),
            mse_mean=mse_mean,
            mse_std=mse_std,
            best_pcc_mean=best_mean,
            best_pcc_std=best_std,
        )
    return EvalReport(seeds=seeds, runs=runs, aggregate=aggregate)


def fmt_value(value: float | None, digits: int = 3) -> str:
    """Format a metric for tables; undefined values print as "n/a"."""
    return "n/a" if value is None else f"{value:.{digits}f}"


def format_report_table(report: EvalReport) -> str:
    """Aligned plain-text table: aspects in rows, PCC/MSE mean±std in columns."""
    lines = [f"std convention: {report.std_convention}"]
    header = f"{'aspect':<20} {'PCC':>16} {'best PCC':>16} {'MSE':>16}"
    lines.append(header)
    lines.append("-" * len(header))
    for name in report.aspect_names:
        if report.aggregate is not None:
            agg = report.aggregate[name]
            pcc = f"{fmt_value(agg.pcc_mean)}±{fmt_value(agg.pcc_std)}"
            if agg.pcc_undefined:
                pcc += f" ({agg.pcc_undefined} n/a)"
            best = f"{fmt_value(agg.best_pcc_mean)}±{fmt_value(agg.best_pcc_std)}"
            mse_s = f"{agg.mse_mean:.4f}±{agg.mse_std:.4f}"
        else:
            ev = report.per_aspect[name]
            pcc = fmt_value(ev.pcc)
            best = fmt_value(ev.best_pcc)
            mse_s = f"{ev.mse:.4f}"
        lines.append(f"{name:<20} {pcc:>16} {best:>16} {mse_s:>16}")
    return "\n".join(lines)


def histogram_csv(evals: dict[str, AspectEval]) -> str:
    """Histogram dump, one row per aspect per kind, bins as columns."""
    lines = ["aspect,kind," + ",".join(f"bin{k}" for k in range(NUM_CLASSES))]
    for name, ev in evals.items():
        lines.append(f"{name},pred," + ",".join(str(c) for c in ev.pred_histogram))
        lines.append(f"{name},target," + ",".join(str(c) for c in ev.target_histogram))
    return "\n".join(lines) + "\n"
