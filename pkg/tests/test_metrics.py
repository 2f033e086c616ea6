"""Assignment matching and accuracy summaries."""

import itertools

import numpy as np
import pytest

from ambiloc.geometry import Direction, angular_distance
from ambiloc.metrics import (
    EvalRecord,
    Summary,
    match_errors,
    report_csv,
    summarize,
)

A = Direction(0.0, 0.0)
B = Direction(90.0, 0.0)
C = Direction(0.0, 60.0)


def exhaustive_best_total(truth, estimates):
    small, large = truth, estimates
    if len(estimates) < len(truth):
        small, large = estimates, truth
    best = float("inf")
    for perm in itertools.permutations(range(len(large)), len(small)):
        total = sum(
            angular_distance(small[i], large[j]) for i, j in enumerate(perm)
        )
        best = min(best, total)
    return best


class TestMatchErrors:
    def test_identical_lists_any_order_all_zero(self):
        truth = [A, B, C]
        for perm in itertools.permutations(truth):
            errors = match_errors(truth, list(perm))
            np.testing.assert_allclose(errors, 0.0, atol=1e-9)

    def test_single_shifted_pair(self):
        errors = match_errors([A], [Direction(5.0, 0.0)])
        assert errors == [pytest.approx(5.0)]

    def test_greedy_differs_from_optimal(self):
        # greedy pairs truth0 with the 10-degree estimate, forcing truth1
        # to a 120-degree one (total 130); optimal total is 40
        truth = [Direction(0.0, 0.0), Direction(30.0, 0.0)]
        est = [Direction(10.0, 0.0), Direction(-120.0, 0.0)]
        greedy_first = angular_distance(truth[0], est[0])
        assert greedy_first == pytest.approx(10.0)
        errors = match_errors(truth, est)
        assert sum(errors) == pytest.approx(exhaustive_best_total(truth, est))

    @pytest.mark.parametrize("n_truth,n_est", [(1, 1), (1, 3), (2, 2), (3, 2), (3, 3)])
    def test_total_is_optimal_for_random_lists(self, n_truth, n_est):
        rng = np.random.default_rng(n_truth * 10 + n_est)
        for _ in range(20):
            truth = [
                Direction(float(rng.uniform(-180, 180)), float(rng.uniform(-90, 90)))
                for _ in range(n_truth)
            ]
            est = [
                Direction(float(rng.uniform(-180, 180)), float(rng.uniform(-90, 90)))
                for _ in range(n_est)
            ]
            errors = match_errors(truth, est)
            assert len(errors) == min(n_truth, n_est)
            assert sum(errors) == pytest.approx(exhaustive_best_total(truth, est))

    def test_empty_truth_and_empty_estimates(self):
        assert match_errors([], [A]) == []
        assert match_errors([A], []) == []

    def test_rejects_oversized_lists(self):
        with pytest.raises(ValueError):
            match_errors([A, B, C, A], [B])
        with pytest.raises(ValueError):
            match_errors([A], [A, B, C, B])


class TestEvalRecord:
    def test_evaluate_fills_errors(self):
        rec = EvalRecord.evaluate("s0", [A, B], [B, A])
        assert rec.errors == (pytest.approx(0.0), pytest.approx(0.0))

    def test_rejects_inconsistent_error_count(self):
        with pytest.raises(ValueError):
            EvalRecord("s0", (A,), (B,), errors=())

    def test_rejects_out_of_range_error(self):
        with pytest.raises(ValueError):
            EvalRecord("s0", (A,), (B,), errors=(190.0,))


def fixture_records(errors):
    # records carrying prescribed single-source matched errors
    out = []
    for i, e in enumerate(errors):
        est = Direction(float(e), 0.0)
        out.append(EvalRecord.evaluate(f"s{i}", [A], [est]))
    return out


class TestSummarize:
    def test_hand_computed_fixture(self):
        summary = summarize(fixture_records([5.0, 12.0, 30.0]))
        assert summary.accuracy[10.0] == pytest.approx(1 / 3)
        assert summary.accuracy[15.0] == pytest.approx(2 / 3)
        assert summary.mean_error == pytest.approx(15.666666, abs=1e-4)
        assert summary.median_error == pytest.approx(12.0)

    def test_all_zero_errors(self):
        summary = summarize(fixture_records([0.0, 0.0]))
        for tol in (10.0, 15.0, 20.0):
            assert summary.accuracy[tol] == 1.0
        assert summary.mean_error == 0.0
        assert summary.median_error == 0.0

    def test_single_record_mean_equals_median(self):
        summary = summarize(fixture_records([7.5]))
        assert summary.mean_error == summary.median_error == pytest.approx(7.5)

    def test_accuracy_monotone_in_tolerance(self):
        rng = np.random.default_rng(8)
        summary = summarize(
            fixture_records(list(rng.uniform(0, 60, 40))),
            tolerances=(5.0, 10.0, 15.0, 20.0, 30.0),
        )
        values = [summary.accuracy[t] for t in (5.0, 10.0, 15.0, 20.0, 30.0)]
        assert values == sorted(values)

    def test_strictly_less_than_tolerance(self):
        summary = summarize(fixture_records([10.0]))
        assert summary.accuracy[10.0] == 0.0

    def test_per_sequence_mode(self):
        # one sequence misses a source entirely: pooled scores the matched
        # pair, per-sequence scores the whole sequence as wrong
        good = EvalRecord.evaluate("g", [A, B], [A, B])
        partial = EvalRecord.evaluate("p", [A, B], [A])
        pooled = summarize([good, partial])
        strict = summarize([good, partial], per_sequence=True)
        assert pooled.accuracy[10.0] == pytest.approx(1.0)
        assert strict.accuracy[10.0] == pytest.approx(0.5)

    def test_precision_recall_side_report(self):
        rec = EvalRecord.evaluate("s", [A, B], [A])
        summary = summarize([rec])
        assert summary.recall == pytest.approx(0.5)
        assert summary.precision == pytest.approx(1.0)
        assert summary.matched_count == 1

    def test_rejects_empty(self):
        with pytest.raises(ValueError):
            summarize([])


class TestReportCsv:
    def test_columns(self):
        summary = summarize(fixture_records([5.0, 12.0, 30.0]))
        text = report_csv([("reduced", 1, summary)])
        lines = text.strip().split("\n")
        assert lines[0] == "model,n_sources,acc_lt_10,acc_lt_15,mean_deg,median_deg"
        assert lines[1] == "reduced,1,33.3,66.7,15.67,12.00"
