"""The four segmentation metrics, per-class means, and Dice aggregation.

All metrics are computed from exact integer pixel counts; division happens
last, in double precision. Zero denominators yield 0 by convention for all
four metrics.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Optional

from .errors import DomainError, EmptyAggregateError


@dataclass(frozen=True)
class PixelCounts:
    intersection: int
    union: int
    predicted_sum: int
    ground_truth_sum: int

    def __post_init__(self):
        if min(self.intersection, self.union, self.predicted_sum, self.ground_truth_sum) < 0:
            raise DomainError("pixel counts must be non-negative")
        if self.intersection > min(self.predicted_sum, self.ground_truth_sum):
            raise DomainError("intersection exceeds a mask sum")
        if self.union != self.predicted_sum + self.ground_truth_sum - self.intersection:
            raise DomainError("union inconsistent with sums and intersection")


def iou(counts: PixelCounts) -> float:
    return counts.intersection / counts.union if counts.union > 0 else 0.0


def dice(counts: PixelCounts) -> float:
    denom = counts.predicted_sum + counts.ground_truth_sum
    return 2.0 * counts.intersection / denom if denom > 0 else 0.0


def precision(counts: PixelCounts) -> float:
    return counts.intersection / counts.predicted_sum if counts.predicted_sum > 0 else 0.0


def recall(counts: PixelCounts) -> float:
    return (
        counts.intersection / counts.ground_truth_sum if counts.ground_truth_sum > 0 else 0.0
    )


@dataclass(frozen=True)
class ExampleMetrics:
    example_id: str
    class_id: str
    iou: float
    dice: float
    precision: float
    recall: float

    @classmethod
    def from_counts(cls, example_id: str, class_id: str, counts: PixelCounts) -> "ExampleMetrics":
        return cls(
            example_id=example_id,
            class_id=class_id,
            iou=iou(counts),
            dice=dice(counts),
            precision=precision(counts),
            recall=recall(counts),
        )

    def to_json_obj(self) -> dict:
        return {
            "example_id": self.example_id,
            "class_id": self.class_id,
            "iou": self.iou,
            "dice": self.dice,
            "precision": self.precision,
            "recall": self.recall,
        }


@dataclass(frozen=True)
class ClassSummary:
    class_id: str
    n: int
    mean_dice: Optional[float] = None
    mean_iou: Optional[float] = None
    mean_precision: Optional[float] = None
    mean_recall: Optional[float] = None

    def __post_init__(self):
        if self.n < 0:
            raise DomainError("example count must be >= 0")
        if self.n >= 1 and self.mean_dice is None:
            raise DomainError("means required when n >= 1")

    def to_json_obj(self) -> dict:
        return {
            "class_id": self.class_id,
            "n": self.n,
            "mean_dice": self.mean_dice,
            "mean_iou": self.mean_iou,
            "mean_precision": self.mean_precision,
            "mean_recall": self.mean_recall,
        }

    @classmethod
    def from_json_obj(cls, obj: dict) -> "ClassSummary":
        return cls(
            class_id=obj["class_id"],
            n=int(obj["n"]),
            mean_dice=obj.get("mean_dice"),
            mean_iou=obj.get("mean_iou"),
            mean_precision=obj.get("mean_precision"),
            mean_recall=obj.get("mean_recall"),
        )


@dataclass(frozen=True)
class AggregateScores:
    wmdc: float
    mdc: float
    N: int
    C: int

    def to_json_obj(self) -> dict:
        return {"wmdc": self.wmdc, "mdc": self.mdc, "N": self.N, "C": self.C}


def class_mean(examples: list[ExampleMetrics], class_id: str = "") -> ClassSummary:
    """Arithmetic mean of each metric over one class's examples.

    An empty list yields a ClassSummary with n=0 and undefined means; such
    summaries are reported but excluded from aggregation.
    """
    if not examples:
        return ClassSummary(class_id=class_id, n=0)
    class_id = examples[0].class_id
    for ex in examples:
        if ex.class_id != class_id:
            raise DomainError(
                f"mixed classes in class_mean: {class_id!r} vs {ex.class_id!r}"
            )
    n = len(examples)
    return ClassSummary(
        class_id=class_id,
        n=n,
        mean_dice=sum(e.dice for e in examples) / n,
        mean_iou=sum(e.iou for e in examples) / n,
        mean_precision=sum(e.precision for e in examples) / n,
        mean_recall=sum(e.recall for e in examples) / n,
    )


def aggregate(
    summaries: Iterable[ClassSummary],
    include: Optional[Iterable[str]] = None,
) -> AggregateScores:
    """Weighted and unweighted mean Dice over class summaries.

    wmdc weights each class mean by its example count n_i; mdc is the plain
    mean over class means. ``include`` optionally restricts the class set
    (e.g. tissue classes only, excluding instruments). Classes with n=0 are
    skipped.
    """
    include_set = set(include) if include is not None else None
    kept = [
        s
        for s in summaries
        if s.n >= 1 and (include_set is None or s.class_id in include_set)
    ]
    if not kept:
        raise EmptyAggregateError("no classes with examples after filtering")
    total_n = sum(s.n for s in kept)
    wmdc = sum(s.n * s.mean_dice for s in kept) / total_n
    mdc = sum(s.mean_dice for s in kept) / len(kept)
    return AggregateScores(wmdc=wmdc, mdc=mdc, N=total_n, C=len(kept))
