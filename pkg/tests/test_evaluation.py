import random
from fractions import Fraction

import numpy as np
import pytest

from hsnli.evaluation import (
    MetricReport,
    aggregate_runs,
    bootstrap_ci,
    bootstrap_ci_items,
    compare_to_reference,
    macro_f1,
    score_run,
)
from hsnli.errors import ConfigError, DataFormatError

H, N = "hate", "not_hate"


def exact_macro_f1(predictions, gold):
    """Rational-arithmetic second implementation of the metric."""
    total = Fraction(0)
    for label in (H, N):
        tp = sum(1 for p, g in zip(predictions, gold) if p == label and g == label)
        fp = sum(1 for p, g in zip(predictions, gold) if p == label and g != label)
        fn = sum(1 for p, g in zip(predictions, gold) if p != label and g == label)
        if tp == 0:
            continue
        precision = Fraction(tp, tp + fp)
        recall = Fraction(tp, tp + fn)
        total += 2 * precision * recall / (precision + recall)
    return float(total / 2)


def test_macro_f1_goldens():
    assert macro_f1([H, N, H, N], [H, N, H, N]) == 1.0
    assert macro_f1([N, H, N, H], [H, N, H, N]) == 0.0
    assert macro_f1([H, N, H, N], [H, H, N, N]) == 0.5


def test_macro_f1_matches_exact_oracle_on_random_vectors():
    rng = random.Random(21)
    for _ in range(300):
        size = rng.randrange(1, 40)
        gold = [rng.choice((H, N)) for _ in range(size)]
        pred = [rng.choice((H, N)) for _ in range(size)]
        assert abs(macro_f1(pred, gold) - exact_macro_f1(pred, gold)) < 1e-9


def test_macro_f1_matches_sklearn():
    sklearn_metrics = pytest.importorskip("sklearn.metrics")
    rng = random.Random(22)
    for _ in range(100):
        size = rng.randrange(2, 50)
        gold = [rng.choice((H, N)) for _ in range(size)]
        pred = [rng.choice((H, N)) for _ in range(size)]
        ours = macro_f1(pred, gold)
        theirs = sklearn_metrics.f1_score(
            gold, pred, labels=[H, N], average="macro", zero_division=0
        )
        assert abs(ours - theirs) < 1e-9


def test_macro_f1_symmetric_under_class_swap():
    rng = random.Random(23)
    swap = {H: N, N: H}
    for _ in range(50):
        size = rng.randrange(1, 30)
        gold = [rng.choice((H, N)) for _ in range(size)]
        pred = [rng.choice((H, N)) for _ in range(size)]
        assert macro_f1(pred, gold) == pytest.approx(
            macro_f1([swap[p] for p in pred], [swap[g] for g in gold])
        )


def test_score_run_flags_missing_class():
    run = score_run([H, H], [H, H])
    assert run.missing_classes == [N]
    assert run.per_class_f1[N] == 0.0
    assert run.macro_f1 == 0.5


def test_score_run_validation():
    with pytest.raises(ConfigError):
        score_run([H], [H, N])
    with pytest.raises(ConfigError):
        score_run([], [])
    with pytest.raises(ConfigError):
        score_run(["spam"], [H])


def test_bootstrap_constant_scores():
    low, high = bootstrap_ci([0.7] * 10, resamples=500, seed=1)
    assert low == high == 0.7


def test_bootstrap_deterministic_and_bounded():
    rng = random.Random(31)
    for trial in range(20):
        scores = [rng.random() for _ in range(rng.randrange(1, 15))]
        a = bootstrap_ci(scores, resamples=400, seed=trial)
        b = bootstrap_ci(scores, resamples=400, seed=trial)
        assert a == b
        low, high = a
        assert min(scores) <= low <= high <= max(scores)


def test_bootstrap_matches_independent_implementation():
    """Loop-per-resample oracle with numpy percentile; must agree exactly."""
    scores = [0.41, 0.55, 0.50, 0.62, 0.48, 0.39, 0.58, 0.44, 0.52, 0.61]
    seed, B, alpha = 7, 10000, 0.05
    low, high = bootstrap_ci(scores, resamples=B, alpha=alpha, seed=seed)

    arr = np.asarray(scores)
    rng = np.random.default_rng(seed)
    means = np.empty(B)
    for b in range(B):
        idx = rng.integers(0, len(arr), size=len(arr))
        means[b] = np.mean(arr[idx])
    clamp = lambda v: min(max(v, min(scores)), max(scores))
    expected_low = clamp(float(np.percentile(means, 100 * alpha / 2)))
    expected_high = clamp(float(np.percentile(means, 100 * (1 - alpha / 2))))
    assert low == expected_low
    assert high == expected_high


def test_bootstrap_validation():
    with pytest.raises(ConfigError):
        bootstrap_ci([], resamples=10)
    with pytest.raises(ConfigError):
        bootstrap_ci([0.5], resamples=0)
    with pytest.raises(ConfigError):
        bootstrap_ci([0.5], alpha=1.0)


def test_item_bootstrap_bounds():
    gold = [H, H, H, N, N, N, H, N]
    pred = [H, H, N, N, N, H, H, N]
    low, high = bootstrap_ci_items(pred, gold, resamples=300, seed=5)
    assert 0.0 <= low <= high <= 1.0
    assert bootstrap_ci_items(pred, gold, resamples=300, seed=5) == (low, high)


def test_aggregate_runs_report_invariants():
    runs = [
        score_run([H, N, H, N], [H, N, H, N]),
        score_run([H, N, H, N], [H, H, N, N]),
        score_run([H, N, N, N], [H, N, H, N]),
    ]
    report = aggregate_runs(runs, resamples=1000, seed=3)
    assert report.runs == 3
    mean = sum(report.run_scores) / 3
    assert report.ci_low <= mean <= report.ci_high
    assert 0.0 <= report.ci_low <= report.ci_high <= 1.0
    rec = report.to_record()
    assert rec["runs"] == 3 and len(rec["run_scores"]) == 3


def test_compare_to_reference_diffs_and_averages():
    ours = {
        ("X", "DS1", 20): 0.60,
        ("X", "DS2", 20): 0.70,
        ("X", "DS1", 200): 0.80,
    }
    reference = {
        ("X", "DS1", 20): 0.63,
        ("X", "DS2", 20): 0.70,
        ("X", "DS1", 200): 0.81,
        ("X", "DS2", 200): 0.50,  # ours missing: blank, not zero
    }
    table = compare_to_reference(ours, reference)
    assert table.diffs[("X", ("DS1", 20))] == pytest.approx(-0.03)
    assert table.diffs[("X", ("DS2", 20))] == pytest.approx(0.0)
    assert ("X", ("DS2", 200)) not in table.diffs
    expected_row = (-0.03 + 0.0 + (0.80 - 0.81)) / 3
    assert table.row_averages["X"] == pytest.approx(expected_row)
    assert table.column_averages[("DS2", 200)] is None
    assert table.warnings == []


def test_compare_to_reference_avg_diff_arithmetic():
    """A row of diffs {-0.03, -0.03, -0.01, -0.01, 0.00} averages to -0.016."""
    datasets = ["D1", "D2", "D3", "D4", "D5"]
    ref_vals = [0.50, 0.60, 0.70, 0.40, 0.30]
    diffs = [-0.03, -0.03, -0.01, -0.01, 0.00]
    reference = {("M", d, 20): v for d, v in zip(datasets, ref_vals)}
    ours = {("M", d, 20): v + diff for (d, v), diff in zip(zip(datasets, ref_vals), diffs)}
    table = compare_to_reference(ours, reference)
    assert table.row_averages["M"] == pytest.approx(-0.016)


def test_compare_to_reference_rejects_bad_units():
    with pytest.raises(DataFormatError):
        compare_to_reference({("X", "D", 20): 0.5}, {("X", "D", 20): 66.0})


def test_compare_to_reference_empty_intersection_warns():
    table = compare_to_reference({("X", "D", 20): 0.5}, {("M", "E", 200): 0.5})
    assert table.diffs == {}
    assert table.warnings
