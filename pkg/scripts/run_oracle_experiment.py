#!/usr/bin/env python3
"""Run the oracle prompt-count sweep over a manifest and render the table.

With a clean oracle every score is 1.0; --perturb degrades the oracle in a
controlled way (dilate:N, erode:N, translate:N) to exercise the metric
pipeline with nontrivial numbers.
"""

import argparse
import sys

from surgbench.dataset import load_manifest
from surgbench.predictor import OraclePredictor, PerturbationSpec
from surgbench.runner import RunConfig, render_markdown, render_report, run_eval


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--manifest", required=True)
    parser.add_argument("--split", default="val", choices=("val", "test"))
    parser.add_argument("--prompts", default="1,2,4,6,8,10")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--perturb", default="none", help="none | dilate:N | erode:N | translate:N")
    parser.add_argument("--workers", type=int, default=4)
    parser.add_argument("--out", default=None, help="report base path (writes .json/.md/.csv)")
    args = parser.parse_args()

    config = RunConfig(
        manifest=args.manifest,
        split=args.split,
        prompt_counts=tuple(int(k) for k in args.prompts.split(",")),
        run_seed=args.seed,
        predictor=f"oracle:{args.perturb}" if args.perturb != "none" else "oracle",
        workers=args.workers,
    )
    predictor = OraclePredictor(PerturbationSpec.parse(args.perturb))
    manifest = load_manifest(args.manifest)
    report = run_eval(config, predictor, manifest)

    sys.stdout.write(render_markdown(report))
    if report.failures:
        print(f"\n{len(report.failures)} failures recorded")
    if args.out:
        for path in render_report(report, args.out, formats=("json", "md", "csv")):
            print(f"wrote {path}")


if __name__ == "__main__":
    main()
