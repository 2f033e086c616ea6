"""Angular-error evaluation over decoded sequences.

Truth and estimate lists are matched by exhaustive minimum-total-error
assignment (lists are capped at 3 sources, so at most 6 candidate
assignments exist). Accuracy pools matched per-source errors across all
sequences by default; an all-sources-correct-per-sequence variant sits
behind a flag. Unmatched sources never enter the angular statistics; they
surface in the precision/recall fields instead.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from ambiloc.geometry import Direction, angular_distance

MAX_SOURCES = 3
DEFAULT_TOLERANCES = (10.0, 15.0, 20.0)


def match_errors(
    truth: list[Direction], estimates: list[Direction]
) -> list[float]:
    """Per-source errors in degrees under the best injective assignment.

    The smaller list maps injectively into the larger; all assignments are
    enumerated and the one with the lowest total error wins. Errors follow
    the smaller list's order.
    """
    if len(truth) > MAX_SOURCES or len(estimates) > MAX_SOURCES:
        raise ValueError(f"source lists are capped at {MAX_SOURCES}")
    if not truth or not estimates:
        return []
    small, large = truth, estimates
    if len(estimates) < len(truth):
        small, large = estimates, truth
    best: list[float] | None = None
    best_total = float("inf")
    for perm in itertools.permutations(range(len(large)), len(small)):
        errors = [
            angular_distance(small[i], large[j]) for i, j in enumerate(perm)
        ]
        total = sum(errors)
        if total < best_total:
            best_total = total
            best = errors
    assert best is not None
    return best


@dataclass(frozen=True)
class EvalRecord:
    """One decoded sequence with its matched angular errors."""

    sequence_id: str
    truth: tuple[Direction, ...]
    estimates: tuple[Direction, ...]
    errors: tuple[float, ...] = field(default=())

    @classmethod
    def evaluate(
        cls,
        sequence_id: str,
        truth: list[Direction],
        estimates: list[Direction],
    ) -> "EvalRecord":
        return cls(
            sequence_id=sequence_id,
            truth=tuple(truth),
            estimates=tuple(estimates),
            errors=tuple(match_errors(list(truth), list(estimates))),
        )

    def __post_init__(self) -> None:
        if len(self.errors) != min(len(self.truth), len(self.estimates)):
            raise ValueError("matched error count must equal min list size")
        if any(not 0.0 <= e <= 180.0 for e in self.errors):
            raise ValueError("angular errors must lie in [0, 180] degrees")


@dataclass(frozen=True)
class Summary:
    accuracy: dict[float, float]
    mean_error: float
    median_error: float
    precision: float
    recall: float
    matched_count: int
    per_sequence: bool = False


def summarize(
    records: list[EvalRecord],
    tolerances: tuple[float, ...] = DEFAULT_TOLERANCES,
    per_sequence: bool = False,
) -> Summary:
    """Accuracy below each tolerance plus mean/median matched error.

    Pooled mode scores every matched source once; per-sequence mode counts
    a sequence only when every truth source is matched below tolerance.
    """
    if not records:
        raise ValueError("no records to summarize")
    pooled = [e for rec in records for e in rec.errors]
    total_truth = sum(len(rec.truth) for rec in records)
    total_est = sum(len(rec.estimates) for rec in records)
    matched = len(pooled)

    accuracy: dict[float, float] = {}
    for tol in tolerances:
        if per_sequence:
            good = sum(
                1
                for rec in records
                if len(rec.errors) == len(rec.truth) == len(rec.estimates)
                and all(e < tol for e in rec.errors)
            )
            accuracy[tol] = good / len(records)
        else:
            accuracy[tol] = (
                sum(1 for e in pooled if e < tol) / matched if matched else 0.0
            )

    return Summary(
        accuracy=accuracy,
        mean_error=float(np.mean(pooled)) if pooled else float("nan"),
        median_error=float(np.median(pooled)) if pooled else float("nan"),
        precision=matched / total_est if total_est else 0.0,
        recall=matched / total_truth if total_truth else 0.0,
        matched_count=matched,
        per_sequence=per_sequence,
    )


def report_csv(rows: list[tuple[str, int, Summary]]) -> str:
    """Accuracy table: model, n_sources, acc<10, acc<15, mean, median."""
    lines = ["model,n_sources,acc_lt_10,acc_lt_15,mean_deg,median_deg"]
    for model, n_sources, summary in rows:
        lines.append(
            f"{model},{n_sources},"
            f"{100.0 * summary.accuracy.get(10.0, float('nan')):.1f},"
            f"{100.0 * summary.accuracy.get(15.0, float('nan')):.1f},"
            f"{summary.mean_error:.2f},{summary.median_error:.2f}"
        )
    return "\n".join(lines) + "\n"
