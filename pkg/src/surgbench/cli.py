"""Command-line entry points.

Subcommands: ingest, split, eval, compare, report, video-eval.
Exit codes: 0 success, 2 invalid run (failure threshold), 3 config error.
"""

from __future__ import annotations

import argparse
import json
import sys

from . import dataset as ds
from . import runner as rn
from . import video as vd
from .errors import ConfigError, InvalidRunError, SurgbenchError
from .predictor import HttpPredictor, OraclePredictor, PerturbationSpec, StubPredictor
from .reference_data import load_comparison_table

EXIT_OK = 0
EXIT_INVALID_RUN = 2
EXIT_CONFIG = 3


def build_predictor(spec: str):
    if spec.startswith(("http://", "https://")):
        return HttpPredictor(spec)
    if spec == "oracle" or spec.startswith("oracle:"):
        _, _, pert = spec.partition(":")
        return OraclePredictor(PerturbationSpec.parse(pert))
    if spec.startswith("stub:"):
        return StubPredictor(spec.split(":", 1)[1])
    raise ConfigError(f"unknown predictor spec {spec!r}")


def cmd_ingest(args) -> int:
    manifest = ds.load_manifest(args.manifest)
    min_area_datasets = set(args.min_area_dataset) if args.min_area_dataset else None
    report = ds.apply_qc(
        list(manifest.records),
        min_area=args.qc_min_area,
        min_area_datasets=min_area_datasets,
    )
    with open(args.out, "w") as f:
        json.dump(report.to_json_obj(), f, indent=2, sort_keys=True)
    print(f"kept {report.kept_count}, rejected {len(report.rejected)} -> {args.out}")
    return EXIT_OK


def cmd_split(args) -> int:
    manifest = ds.load_manifest(args.manifest)
    split = ds.split_patientwise(manifest, seed=args.seed)
    ds.save_manifest(split, args.out)
    counts = {s: len(split.for_split(s)) for s in ds.SPLITS}
    print(f"split {counts} -> {args.out}")
    return EXIT_OK


def cmd_eval(args) -> int:
    config = rn.RunConfig.from_toml(args.config)
    manifest = ds.load_manifest(config.manifest)
    predictor = build_predictor(config.predictor)
    report = rn.run_eval(config, predictor, manifest)
    with open(args.out, "w") as f:
        f.write(report.to_json())
    for k in sorted(int(c) for c in report.aggregates):
        agg = report.aggregates[str(k)]
        print(f"prompts={k}: WMDC={agg.wmdc:.4f} MDC={agg.mdc:.4f} N={agg.N} C={agg.C}")
    print(f"report -> {args.out}")
    return EXIT_OK


def cmd_compare(args) -> int:
    with open(args.report) as f:
        report = rn.RunReport.from_json(f.read())
    reference = load_comparison_table(args.reference)
    comparison = rn.compare_to_reference(report, reference, prompt_count=args.prompts)
    for row in comparison.rows:
        sota = "n/a" if row.prior_sota_dice is None else f"{row.prior_sota_dice:.2f}"
        print(
            f"{row.class_key}: {rn.round2(row.report_dice):.2f} vs {sota} "
            f"({row.delta_str}){' [unseen]' if row.unseen else ''}"
        )
    for ck in comparison.unmatched_report:
        print(f"unmatched in reference: {ck}")
    print(f"above or establishing SOTA: {comparison.headline}")
    if comparison.n_unseen:
        print(f"unseen classes at SOTA: {comparison.n_unseen_above}/{comparison.n_unseen}")
    return EXIT_OK


def cmd_report(args) -> int:
    with open(getattr(args, "in")) as f:
        report = rn.RunReport.from_json(f.read())
    base = getattr(args, "in")
    if base.endswith(".json"):
        base = base[: -len(".json")]
    formats = tuple(args.format.split(","))
    written = rn.render_report(report, base, formats=formats, baseline_wmdc=args.baseline_wmdc)
    for path in written:
        print(f"wrote {path}")
    return EXIT_OK


def parse_prompt_range(text: str) -> list[int]:
    if ".." in text:
        lo, hi = text.split("..")
        return list(range(int(lo), int(hi) + 1))
    return [int(t) for t in text.split(",")]


def cmd_video_eval(args) -> int:
    clips = vd.load_clips(args.clips)
    if args.endpoint:
        tracker = vd.HttpTracker(args.endpoint)
    else:
        tracker = vd.EchoTracker()
    result = vd.run_video_eval(
        clips,
        prompt_counts=parse_prompt_range(args.prompts),
        run_seed=args.seed,
        tracker=tracker,
        include_frame0=not args.exclude_frame0,
    )
    with open(args.out, "w") as f:
        json.dump(result, f, indent=2, sort_keys=True)
    for row in result["by_class"]:
        print(
            f"{row['class_id']} @ {row['prompt_count']} pts: "
            f"dice={row['mean_dice']:.4f} over {row['n_frames']} frames"
        )
    print(f"video report -> {args.out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="surgbench")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="run QC over a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--qc-min-area", type=int, default=ds.DEFAULT_MIN_AREA)
    p.add_argument(
        "--min-area-dataset",
        action="append",
        help="restrict the area floor to these dataset ids (repeatable); default all",
    )
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("split", help="assign patient-wise splits")
    p.add_argument("--manifest", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("eval", help="run an evaluation sweep")
    p.add_argument("--config", required=True, help="TOML run config")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("compare", help="compare a report against the reference table")
    p.add_argument("--report", required=True)
    p.add_argument("--reference", default=None, help="override the embedded reference JSON")
    p.add_argument("--prompts", type=int, default=10)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("report", help="render a JSON report to md/csv")
    p.add_argument("--in", required=True, dest="in")
    p.add_argument("--format", default="md,csv")
    p.add_argument("--baseline-wmdc", type=float, default=None)
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("video-eval", help="score mask propagation over clips")
    p.add_argument("--clips", required=True)
    p.add_argument("--prompts", default="1..10")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--endpoint", default=None, help="tracking endpoint; default echo tracker")
    p.add_argument("--exclude-frame0", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_video_eval)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InvalidRunError as exc:
        print(f"invalid run: {exc}", file=sys.stderr)
        return EXIT_INVALID_RUN
    except SurgbenchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
