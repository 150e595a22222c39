#!/usr/bin/env python3
"""Print the embedded reference tables and their recomputed aggregate rows.

Useful for eyeballing the published per-class numbers and checking that the
aggregation code reproduces the printed footers from the per-class rows.
"""

import argparse

from surgbench.metrics import aggregate
from surgbench.reference_data import (
    load_comparison_table,
    load_reference,
    test_summaries,
    zero_shot_summaries,
)


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument(
        "--table",
        default="all",
        choices=("zero-shot", "comparison", "all"),
    )
    args = parser.parse_args()

    raw = load_reference()

    if args.table in ("zero-shot", "all"):
        print("Zero-shot validation (recomputed from per-class rows):")
        for backbone in ("hiera_large", "hiera_base_plus"):
            cells = []
            for k in raw["prompt_counts"]:
                agg = aggregate(zero_shot_summaries(backbone, k))
                cells.append(f"{k}pt W={agg.wmdc:.3f} M={agg.mdc:.3f}")
            print(f"  {backbone}: " + " | ".join(cells))
        print()

    if args.table in ("comparison", "all"):
        table = load_comparison_table()
        print(f"Fine-tuned comparison ({len(table.classes)} classes):")
        for c in table.classes:
            sota = "  n/a" if c.prior_sota_dice is None else f"{c.prior_sota_dice:.2f}"
            t10 = "  n/a" if c.test_dice_10pt is None else f"{c.test_dice_10pt:.2f}"
            flag = " *" if c.unseen else ""
            print(f"  {c.key:45s} prior={sota} test@10pt={t10}{flag}")
        for k in (1, 10):
            agg = aggregate(test_summaries(k))
            print(f"  test subset @ {k}pt: WMDC={agg.wmdc:.3f} MDC={agg.mdc:.3f}")
        print("  (* = class unseen during fine-tuning)")


if __name__ == "__main__":
    main()
