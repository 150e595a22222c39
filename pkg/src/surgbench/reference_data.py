"""Loader for the embedded published reference tables.

The JSON asset carries per-class Dice values for the zero-shot backbone
comparison, the fine-tuned data-scale/test results with prior-SOTA scores,
and the headline summary numbers. It is versioned and editable without code
changes; per-group notes record known inconsistencies in the source.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from typing import Optional

from .metrics import ClassSummary

ASSET_NAME = "reference_tables.json"


def class_key(dataset: str, class_id: str) -> str:
    return f"{dataset}/{class_id}"


@dataclass(frozen=True)
class ReferenceClass:
    dataset: str
    class_id: str
    n_val: int
    n_test: int
    scale_dice: dict  # data scale -> dice
    prior_sota_dice: Optional[float]
    prior_sota_model: str
    medsam_dice: Optional[float]
    test_dice_1pt: Optional[float]
    test_dice_10pt: Optional[float]
    unseen: bool

    @property
    def key(self) -> str:
        return class_key(self.dataset, self.class_id)


@dataclass(frozen=True)
class ReferenceTable:
    classes: tuple[ReferenceClass, ...]
    footer: dict

    def by_key(self) -> dict:
        return {c.key: c for c in self.classes}


def load_reference(path: Optional[str] = None) -> dict:
    if path is not None:
        with open(path) as f:
            return json.load(f)
    return json.loads(
        (resources.files("surgbench") / "assets" / ASSET_NAME).read_text()
    )


def load_comparison_table(path: Optional[str] = None) -> ReferenceTable:
    """The fine-tuned-vs-prior-SOTA table as a ReferenceTable."""
    raw = load_reference(path)
    block = raw["finetuned_comparison"]
    scales = block["data_scales"]
    classes = tuple(
        ReferenceClass(
            dataset=c["dataset"],
            class_id=c["class_id"],
            n_val=c["n_val"],
            n_test=c["n_test"],
            scale_dice=dict(zip(scales, c["scale_dice"])),
            prior_sota_dice=c["prior_sota_dice"],
            prior_sota_model=c["prior_sota_model"],
            medsam_dice=c["medsam_dice"],
            test_dice_1pt=c["test_dice_1pt"],
            test_dice_10pt=c["test_dice_10pt"],
            unseen=c["unseen"],
        )
        for c in block["classes"]
    )
    return ReferenceTable(classes=classes, footer=block["footer"])


def zero_shot_summaries(
    backbone: str, prompt_count: int, path: Optional[str] = None
) -> list[ClassSummary]:
    """Per-class summaries for one zero-shot backbone column.

    ``backbone`` is "hiera_large" or "hiera_base_plus". Feeding the result to
    :func:`surgbench.metrics.aggregate` reproduces the printed footer rows.
    """
    raw = load_reference(path)
    block = raw["zero_shot_validation"]
    counts = raw["prompt_counts"]
    idx = counts.index(prompt_count)
    return [
        ClassSummary(
            class_id=class_key(c["dataset"], c["class_id"]),
            n=c["n"],
            mean_dice=c[backbone][idx],
        )
        for c in block["classes"]
    ]


def test_summaries(prompt_count: int, path: Optional[str] = None) -> list[ClassSummary]:
    """Per-class test-subset summaries from the comparison table (1 or 10 points)."""
    table = load_comparison_table(path)
    field = {1: "test_dice_1pt", 10: "test_dice_10pt"}[prompt_count]
    out = []
    for c in table.classes:
        dice = getattr(c, field)
        if dice is None:
            continue
        out.append(ClassSummary(class_id=c.key, n=c.n_test, mean_dice=dice))
    return out
