"""Metrics, bootstrap confidence intervals, and reference-table comparison.

Macro-F1 is the headline metric because the test sets are imbalanced. Intervals
are percentile bootstraps over per-run scores: a setting is run with several
seeds, each run yields one macro-F1, and the CI resamples those run scores. An
item-level bootstrap over test examples is available as an alternative.
"""

from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .corpus import HS_LABELS
from .errors import ConfigError, DataFormatError


@dataclass
class RunScore:
    """Scores of a single run: one prediction per gold item."""

    macro_f1: float
    per_class_f1: dict[str, float]
    missing_classes: list[str]


def _per_class_f1(predictions: list[str], gold: list[str], label: str) -> float:
    tp = sum(1 for p, g in zip(predictions, gold) if p == label and g == label)
    fp = sum(1 for p, g in zip(predictions, gold) if p == label and g != label)
    fn = sum(1 for p, g in zip(predictions, gold) if p != label and g == label)
    if tp == 0:
        return 0.0
    precision = tp / (tp + fp)
    recall = tp / (tp + fn)
    return 2.0 * precision * recall / (precision + recall)


def score_run(predictions: list[str], gold: list[str]) -> RunScore:
    """Per-class and macro F1 over the binary labels.

    A class that never occurs in either predictions or gold has no defined F1 and
    contributes 0 to the macro average; such classes are listed in
    missing_classes so reports can flag the convention.
    """
    if len(predictions) != len(gold):
        raise ConfigError(
            f"prediction/gold length mismatch: {len(predictions)} vs {len(gold)}"
        )
    if not gold:
        raise ConfigError("cannot score an empty prediction set")
    for seq_name, seq in (("predictions", predictions), ("gold", gold)):
        for label in seq:
            if label not in HS_LABELS:
                raise ConfigError(f"unknown label '{label}' in {seq_name}")
    per_class = {label: _per_class_f1(predictions, gold, label) for label in HS_LABELS}
    missing = [
        label
        for label in HS_LABELS
        if label not in predictions and label not in gold
    ]
    macro = sum(per_class.values()) / len(HS_LABELS)
    return RunScore(macro_f1=macro, per_class_f1=per_class, missing_classes=missing)


def macro_f1(predictions: list[str], gold: list[str]) -> float:
    return score_run(predictions, gold).macro_f1


def _percentile(sorted_values: np.ndarray, q: float) -> float:
    """Linear-interpolation percentile on a pre-sorted array, q in [0, 1]."""
    n = len(sorted_values)
    if n == 1:
        return float(sorted_values[0])
    pos = q * (n - 1)
    i = int(np.floor(pos))
    g = pos - i
    if i + 1 >= n:
        return float(sorted_values[-1])
    return float(sorted_values[i] + (sorted_values[i + 1] - sorted_values[i]) * g)


def bootstrap_ci(
    run_scores: list[float],
    resamples: int = 10000,
    alpha: float = 0.05,
    seed: int = 0,
) -> tuple[float, float]:
    """Percentile bootstrap interval for the mean of run_scores.

    Draws B index matrices of shape (B, n) with numpy's default_rng(seed), takes
    the row means, and reads the alpha/2 and 1-alpha/2 percentiles by linear
    interpolation. Each endpoint is then clamped into [min(scores), max(scores)]:
    resampled means are convex combinations, so the clamp only strips float
    rounding dust (a mean like (x+x+x)/3 can land one ulp outside). Deterministic
    for a seed.
    """
    if not run_scores:
        raise ConfigError("bootstrap needs at least one score")
    if resamples < 1:
        raise ConfigError(f"resample count must be >= 1, got {resamples}")
    if not 0.0 < alpha < 1.0:
        raise ConfigError(f"alpha must be in (0, 1), got {alpha}")
    scores = np.asarray(run_scores, dtype=np.float64)
    n = len(scores)
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, n, size=(resamples, n))
    means = np.sort(scores[idx].mean(axis=1))
    lo_bound, hi_bound = float(scores.min()), float(scores.max())
    low = min(max(_percentile(means, alpha / 2.0), lo_bound), hi_bound)
    high = min(max(_percentile(means, 1.0 - alpha / 2.0), lo_bound), hi_bound)
    return low, high


def bootstrap_ci_items(
    predictions: list[str],
    gold: list[str],
    resamples: int = 10000,
    alpha: float = 0.05,
    seed: int = 0,
) -> tuple[float, float]:
    """Item-level alternative: resample test items and recompute macro-F1 each time."""
    if len(predictions) != len(gold):
        raise ConfigError(
            f"prediction/gold length mismatch: {len(predictions)} vs {len(gold)}"
        )
    if not gold:
        raise ConfigError("cannot bootstrap an empty prediction set")
    if resamples < 1:
        raise ConfigError(f"resample count must be >= 1, got {resamples}")
    if not 0.0 < alpha < 1.0:
        raise ConfigError(f"alpha must be in (0, 1), got {alpha}")
    n = len(gold)
    rng = np.random.default_rng(seed)
    stats = np.empty(resamples, dtype=np.float64)
    for b in range(resamples):
        idx = rng.integers(0, n, size=n)
        stats[b] = score_run([predictions[i] for i in idx], [gold[i] for i in idx]).macro_f1
    stats.sort()
    return _percentile(stats, alpha / 2.0), _percentile(stats, 1.0 - alpha / 2.0)


@dataclass
class MetricReport:
    """Aggregate over the runs of one experiment cell."""

    macro_f1: float
    per_class_f1: dict[str, float]
    ci_low: float
    ci_high: float
    runs: int
    run_scores: list[float] = field(default_factory=list)
    missing_classes: list[str] = field(default_factory=list)

    def to_record(self) -> dict[str, Any]:
        return {
            "macro_f1": self.macro_f1,
            "per_class_f1": self.per_class_f1,
            "ci_low": self.ci_low,
            "ci_high": self.ci_high,
            "runs": self.runs,
            "run_scores": self.run_scores,
            "missing_classes": self.missing_classes,
        }


def aggregate_runs(
    runs: list[RunScore],
    resamples: int = 10000,
    alpha: float = 0.05,
    seed: int = 0,
) -> MetricReport:
    """Average per-run scores and attach a bootstrap CI over the run scores."""
    if not runs:
        raise ConfigError("cannot aggregate zero runs")
    scores = [r.macro_f1 for r in runs]
    low, high = bootstrap_ci(scores, resamples=resamples, alpha=alpha, seed=seed)
    per_class = {
        label: sum(r.per_class_f1[label] for r in runs) / len(runs) for label in HS_LABELS
    }
    missing = sorted({label for r in runs for label in r.missing_classes})
    return MetricReport(
        macro_f1=sum(scores) / len(scores),
        per_class_f1=per_class,
        ci_low=low,
        ci_high=high,
        runs=len(runs),
        run_scores=scores,
        missing_classes=missing,
    )


# Cells are keyed (variant tag, dataset code, n) on both sides of a comparison.
CellKey = tuple[str, str, int]


@dataclass
class DifferenceTable:
    rows: list[str]
    columns: list[tuple[str, int]]
    diffs: dict[tuple[str, tuple[str, int]], float]
    row_averages: dict[str, float | None]
    column_averages: dict[tuple[str, int], float | None]
    warnings: list[str] = field(default_factory=list)


def compare_to_reference(
    ours: dict[CellKey, float], reference: dict[CellKey, float]
) -> DifferenceTable:
    """Per-cell (ours - reference) differences in the row=variant,
    column=(dataset, N) layout, with row and column averages over the cells
    present on both sides. Cells missing from either side stay blank."""
    for key, value in reference.items():
        if not 0.0 <= value <= 1.0:
            raise DataFormatError(
                f"reference value for {key} is {value}, outside [0, 1]"
            )
    rows = sorted({k[0] for k in ours} | {k[0] for k in reference})
    columns = sorted({(k[1], k[2]) for k in ours} | {(k[1], k[2]) for k in reference})
    diffs: dict[tuple[str, tuple[str, int]], float] = {}
    for (variant, dataset, n), value in ours.items():
        ref = reference.get((variant, dataset, n))
        if ref is not None:
            diffs[(variant, (dataset, n))] = value - ref
    row_averages: dict[str, float | None] = {}
    for row in rows:
        values = [d for (r, _), d in diffs.items() if r == row]
        row_averages[row] = sum(values) / len(values) if values else None
    column_averages: dict[tuple[str, int], float | None] = {}
    for col in columns:
        values = [d for (_, c), d in diffs.items() if c == col]
        column_averages[col] = sum(values) / len(values) if values else None
    warnings = []
    if not diffs:
        warnings.append("no overlapping cells between results and reference")
    return DifferenceTable(
        rows=rows,
        columns=columns,
        diffs=diffs,
        row_averages=row_averages,
        column_averages=column_averages,
        warnings=warnings,
    )
