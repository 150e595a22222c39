"""Experiment orchestration: prompt-count sweeps, reports, SOTA comparison.

run_eval drives the full loop (sample prompts, predict, score, roll up);
everything it produces is deterministic for a fixed (config, predictor), so
report JSON is byte-identical across runs once provenance timestamps are set
aside.
"""

from __future__ import annotations

import csv
import datetime
import io
import json
import re
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal
from typing import Callable, Optional

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .dataset import DatasetManifest
from .errors import (
    ConfigError,
    DomainError,
    InvalidRunError,
    PredictionFailure,
    SurgbenchError,
)
from .masks import BinaryMask, pixel_counts, read_mask
from .metrics import AggregateScores, ClassSummary, ExampleMetrics, aggregate, class_mean
from .prompts import PromptSet, derive_seed, sample_points
from .reference_data import ReferenceTable, class_key

DEFAULT_PROMPT_COUNTS = (1, 2, 4, 6, 8, 10)
DEFAULT_FAILURE_THRESHOLD = 0.05
DEFAULT_WORKERS = 4


def round2(value: float) -> float:
    """2-decimal round-half-up, applied only at render time."""
    return float(Decimal(repr(value)).quantize(Decimal("0.01"), rounding=ROUND_HALF_UP))


def relative_improvement(old: float, new: float) -> float:
    """(new - old) / old, as a fraction."""
    if old == 0:
        raise DomainError("relative improvement undefined for a zero baseline")
    return (new - old) / old


@dataclass(frozen=True)
class RunConfig:
    manifest: str
    split: str = "val"
    prompt_counts: tuple[int, ...] = DEFAULT_PROMPT_COUNTS
    run_seed: int = 0
    predictor: str = "oracle"  # builtin spec ("oracle", "oracle:dilate:1", "stub:DIR") or http(s) URL
    class_filter: Optional[tuple[str, ...]] = None  # None = all classes
    data_scale: str = "n/a"  # one of 50/100/200/400/full/n/a
    checkpoint: str = ""
    failure_threshold: float = DEFAULT_FAILURE_THRESHOLD
    workers: int = DEFAULT_WORKERS

    def __post_init__(self):
        if self.split not in ("val", "test"):
            raise ConfigError(f"split must be val or test, got {self.split!r}")
        counts = tuple(sorted(set(int(k) for k in self.prompt_counts)))
        if not counts or counts[0] < 1 or counts[-1] > 10:
            raise ConfigError(f"prompt_counts must be a nonempty subset of 1..10, got {counts}")
        object.__setattr__(self, "prompt_counts", counts)
        if self.class_filter is not None:
            object.__setattr__(self, "class_filter", tuple(self.class_filter))

    def to_json_obj(self) -> dict:
        return {
            "manifest": self.manifest,
            "split": self.split,
            "prompt_counts": list(self.prompt_counts),
            "run_seed": self.run_seed,
            "predictor": self.predictor,
            "class_filter": list(self.class_filter) if self.class_filter else None,
            "data_scale": self.data_scale,
            "checkpoint": self.checkpoint,
            "failure_threshold": self.failure_threshold,
            "workers": self.workers,
        }

    @classmethod
    def from_json_obj(cls, obj: dict) -> "RunConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(obj) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        kwargs = dict(obj)
        if "prompt_counts" in kwargs:
            kwargs["prompt_counts"] = tuple(kwargs["prompt_counts"])
        if kwargs.get("class_filter"):
            kwargs["class_filter"] = tuple(kwargs["class_filter"])
        if "manifest" not in kwargs:
            raise ConfigError("config is missing 'manifest'")
        return cls(**kwargs)

    @classmethod
    def from_toml(cls, path: str) -> "RunConfig":
        try:
            with open(path, "rb") as f:
                obj = tomllib.load(f)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"invalid TOML in {path}: {exc}") from exc
        return cls.from_json_obj(obj)


@dataclass(frozen=True)
class EvalExample:
    """One predictor call: a record at one prompt count, with its GT mask."""

    record: "SampleRecord"
    gt: BinaryMask
    prompts: PromptSet
    prompt_count: int

    @property
    def request_id(self) -> str:
        r = self.record
        return f"{r.dataset_id}|{r.image_ref}|{r.class_id}|k{self.prompt_count}"


@dataclass
class RunReport:
    config: dict
    class_summaries: dict  # class_key -> {prompt_count(str) -> ClassSummary}
    aggregates: dict  # prompt_count(str) -> AggregateScores
    failures: list  # [{"example_id":..., "reason":...}]
    provenance: dict = field(default_factory=dict)
    examples: list = field(default_factory=list)  # ExampleMetrics JSON objects, optional

    def wmdc(self, prompt_count: int) -> float:
        return self.aggregates[str(prompt_count)].wmdc

    @property
    def max_prompt_count(self) -> int:
        return max(int(k) for k in self.aggregates)

    def class_dice(self, prompt_count: int) -> dict:
        return {
            ck: by_k[str(prompt_count)].mean_dice
            for ck, by_k in self.class_summaries.items()
            if str(prompt_count) in by_k and by_k[str(prompt_count)].n >= 1
        }

    def to_json_obj(self) -> dict:
        return {
            "config": self.config,
            "class_summaries": {
                ck: {k: s.to_json_obj() for k, s in by_k.items()}
                for ck, by_k in self.class_summaries.items()
            },
            "aggregates": {k: a.to_json_obj() for k, a in self.aggregates.items()},
            "failures": self.failures,
            "provenance": self.provenance,
        }

    def to_json(self, include_provenance: bool = True) -> str:
        obj = self.to_json_obj()
        if not include_provenance:
            obj.pop("provenance")
        return json.dumps(obj, sort_keys=True, indent=2)

    @classmethod
    def from_json_obj(cls, obj: dict) -> "RunReport":
        return cls(
            config=obj["config"],
            class_summaries={
                ck: {k: ClassSummary.from_json_obj(s) for k, s in by_k.items()}
                for ck, by_k in obj["class_summaries"].items()
            },
            aggregates={
                k: AggregateScores(wmdc=a["wmdc"], mdc=a["mdc"], N=a["N"], C=a["C"])
                for k, a in obj["aggregates"].items()
            },
            failures=obj["failures"],
            provenance=obj.get("provenance", {}),
        )

    @classmethod
    def from_json(cls, text: str) -> "RunReport":
        return cls.from_json_obj(json.loads(text))


def _evaluate_record(record, config: RunConfig, predictor: Callable):
    """Metrics for one record at every prompt count; failures per prompt count."""
    results = []
    failures = []
    gt = read_mask(record.mask_ref)
    max_k = max(config.prompt_counts)
    state = derive_seed(config.run_seed, record.dataset_id, record.image_ref, record.class_id)
    full_prompts = sample_points(gt, max_k, state)
    ck = class_key(record.dataset_id, record.class_id)
    example_id = f"{record.dataset_id}|{record.image_ref}|{record.class_id}"
    for k in config.prompt_counts:
        example = EvalExample(
            record=record, gt=gt, prompts=full_prompts.prefix(k), prompt_count=k
        )
        try:
            pred = predictor(example)
            counts = pixel_counts(pred, gt)
        except PredictionFailure as exc:
            failures.append(
                {"example_id": example.request_id, "reason": exc.reason, "message": str(exc)}
            )
            continue
        metrics = ExampleMetrics.from_counts(example_id=example_id, class_id=ck, counts=counts)
        results.append((ck, k, metrics))
    return results, failures


def run_eval(
    config: RunConfig,
    predictor: Callable,
    manifest: DatasetManifest,
    collect_examples: bool = False,
) -> RunReport:
    """Evaluate every example in the configured split at every prompt count.

    Records are processed by a bounded worker pool; results are merged in
    canonical (dataset, image, class) order, so the report is independent of
    completion order. A failure fraction above the threshold invalidates the
    run (InvalidRunError).
    """
    records = sorted(manifest.for_split(config.split), key=lambda r: r.key)
    if config.class_filter is not None:
        allowed = set(config.class_filter)
        records = [
            r
            for r in records
            if r.class_id in allowed or class_key(r.dataset_id, r.class_id) in allowed
        ]
    if not records:
        raise SurgbenchError(f"no records in split {config.split!r}")

    all_results = []
    all_failures = []
    with ThreadPoolExecutor(max_workers=max(1, config.workers)) as pool:
        for results, failures in pool.map(
            lambda r: _evaluate_record(r, config, predictor), records
        ):
            all_results.extend(results)
            all_failures.extend(failures)

    attempted = len(records) * len(config.prompt_counts)
    if attempted and len(all_failures) / attempted > config.failure_threshold:
        raise InvalidRunError(
            f"{len(all_failures)}/{attempted} examples failed, above the "
            f"{config.failure_threshold:.0%} threshold"
        )

    per_cell: dict = {}
    for ck, k, metrics in all_results:
        per_cell.setdefault(ck, {}).setdefault(k, []).append(metrics)

    class_summaries = {}
    for ck in sorted(per_cell):
        class_summaries[ck] = {
            str(k): class_mean(sorted(ex, key=lambda m: m.example_id), class_id=ck)
            for k, ex in sorted(per_cell[ck].items())
        }
    aggregates = {}
    for k in config.prompt_counts:
        summaries = [
            by_k[str(k)] for by_k in class_summaries.values() if str(k) in by_k
        ]
        aggregates[str(k)] = aggregate(summaries)

    report = RunReport(
        config=config.to_json_obj(),
        class_summaries=class_summaries,
        aggregates=aggregates,
        failures=sorted(all_failures, key=lambda f: f["example_id"]),
        provenance={
            "created_at": datetime.datetime.now(datetime.timezone.utc).isoformat(),
            "run_seed": config.run_seed,
        },
    )
    if collect_examples:
        report.examples = [
            m.to_json_obj() | {"prompt_count": k}
            for ck, k, m in sorted(all_results, key=lambda t: (t[0], t[1], t[2].example_id))
        ]
    return report


def _checkpoint_order(label: str):
    nums = [int(n) for n in re.findall(r"\d+", label)]
    return (nums, label)


def _scale_order(label: str):
    try:
        return (0, int(label))
    except ValueError:
        return (1, label)


def select_best_checkpoint(reports: list[RunReport]) -> tuple[str, str]:
    """(data_scale, checkpoint) with the highest WMDC at the max prompt count.

    Ties go to the earliest checkpoint, then the smallest data scale. All
    reports must share the same split and prompt-count set.
    """
    if not reports:
        raise SurgbenchError("no reports to select from")
    splits = {r.config["split"] for r in reports}
    if len(splits) > 1:
        raise SurgbenchError(f"mixed splits in checkpoint selection: {sorted(splits)}")
    count_sets = {tuple(sorted(int(k) for k in r.aggregates)) for r in reports}
    if len(count_sets) > 1:
        raise SurgbenchError("reports disagree on prompt-count sets")
    k = max(count_sets.pop())
    best = min(
        reports,
        key=lambda r: (
            -r.wmdc(k),
            _checkpoint_order(r.config.get("checkpoint", "")),
            _scale_order(r.config.get("data_scale", "")),
        ),
    )
    return (best.config.get("data_scale", ""), best.config.get("checkpoint", ""))


@dataclass(frozen=True)
class ComparisonRow:
    class_key: str
    report_dice: float
    prior_sota_dice: Optional[float]
    prior_sota_model: str
    delta: Optional[float]
    unseen: bool

    @property
    def delta_str(self) -> str:
        if self.delta is None:
            return "n/a"
        return f"{round2(self.delta):+.2f}"


@dataclass(frozen=True)
class Comparison:
    rows: tuple[ComparisonRow, ...]
    unmatched_report: tuple[str, ...]
    unmatched_reference: tuple[str, ...]

    @property
    def n_classes(self) -> int:
        return len(self.rows)

    @property
    def n_above(self) -> int:
        """Classes strictly above prior SOTA, or with no prior score to beat."""
        return sum(
            1 for r in self.rows if r.prior_sota_dice is None or r.delta > 0
        )

    @property
    def n_meets(self) -> int:
        return sum(1 for r in self.rows if r.delta is not None and r.delta == 0)

    @property
    def n_unseen_above(self) -> int:
        return sum(
            1
            for r in self.rows
            if r.unseen and (r.prior_sota_dice is None or r.delta > 0)
        )

    @property
    def n_unseen(self) -> int:
        return sum(1 for r in self.rows if r.unseen)

    @property
    def headline(self) -> str:
        pct = 100.0 * self.n_above / self.n_classes if self.n_classes else 0.0
        return f"{self.n_above}/{self.n_classes} ({pct:.0f}%)"


def compare_to_reference(
    class_dice: dict | RunReport,
    reference: ReferenceTable,
    prompt_count: int = 10,
) -> Comparison:
    """Per-class deltas of report Dice vs prior SOTA, with headline tallies.

    ``class_dice`` is either a RunReport (dice taken at ``prompt_count``) or
    a plain {class_key: dice} mapping. Classes present on only one side are
    listed as unmatched, never silently dropped.
    """
    if isinstance(class_dice, RunReport):
        class_dice = class_dice.class_dice(prompt_count)
    ref_by_key = reference.by_key()
    rows = []
    for ck in sorted(class_dice):
        if ck not in ref_by_key:
            continue
        ref = ref_by_key[ck]
        dice = class_dice[ck]
        delta = None if ref.prior_sota_dice is None else dice - ref.prior_sota_dice
        rows.append(
            ComparisonRow(
                class_key=ck,
                report_dice=dice,
                prior_sota_dice=ref.prior_sota_dice,
                prior_sota_model=ref.prior_sota_model,
                delta=delta,
                unseen=ref.unseen,
            )
        )
    return Comparison(
        rows=tuple(rows),
        unmatched_report=tuple(sorted(set(class_dice) - set(ref_by_key))),
        unmatched_reference=tuple(sorted(set(ref_by_key) - set(class_dice))),
    )


WMDC_FOOTER_LABEL = "Weighted mean Dice coefficient"
MDC_FOOTER_LABEL = "Mean Dice coefficient"


def _check_footer_consistency(report: RunReport):
    # the rendered footer must equal aggregate() of the rendered class rows
    for k, agg in report.aggregates.items():
        summaries = [
            by_k[k] for by_k in report.class_summaries.values() if k in by_k and by_k[k].n >= 1
        ]
        recomputed = aggregate(summaries)
        if abs(recomputed.wmdc - agg.wmdc) > 1e-9 or abs(recomputed.mdc - agg.mdc) > 1e-9:
            raise SurgbenchError(
                f"report self-consistency failure at prompt count {k}: "
                f"footer {agg.wmdc}/{agg.mdc} vs rows {recomputed.wmdc}/{recomputed.mdc}"
            )


def render_markdown(report: RunReport, baseline_wmdc: Optional[float] = None) -> str:
    _check_footer_consistency(report)
    counts = sorted(int(k) for k in report.aggregates)
    lines = []
    header = ["Class (n)"] + [f"{k} pts" for k in counts]
    lines.append("| " + " | ".join(header) + " |")
    lines.append("|" + "---|" * len(header))
    for ck in sorted(report.class_summaries):
        by_k = report.class_summaries[ck]
        n = next(iter(by_k.values())).n
        cells = []
        for k in counts:
            s = by_k.get(str(k))
            cells.append(f"{round2(s.mean_dice):.2f}" if s and s.n >= 1 else "-")
        lines.append(f"| {ck} ({n}) | " + " | ".join(cells) + " |")
    wmdc_cells = [f"{round2(report.aggregates[str(k)].wmdc):.2f}" for k in counts]
    mdc_cells = [f"{round2(report.aggregates[str(k)].mdc):.2f}" for k in counts]
    lines.append(f"| **{WMDC_FOOTER_LABEL}** | " + " | ".join(wmdc_cells) + " |")
    lines.append(f"| **{MDC_FOOTER_LABEL}** | " + " | ".join(mdc_cells) + " |")
    if baseline_wmdc is not None:
        new = report.aggregates[str(max(counts))].wmdc
        gain = relative_improvement(baseline_wmdc, new)
        lines.append("")
        lines.append(
            f"Relative WMDC improvement over baseline {round2(baseline_wmdc):.2f}: "
            f"{100.0 * gain:.1f}%"
        )
    return "\n".join(lines) + "\n"


def render_csv(report: RunReport) -> str:
    _check_footer_consistency(report)
    counts = sorted(int(k) for k in report.aggregates)
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["class", "n"] + [f"dice_{k}pt" for k in counts])
    for ck in sorted(report.class_summaries):
        by_k = report.class_summaries[ck]
        n = next(iter(by_k.values())).n
        row = [ck, n]
        for k in counts:
            s = by_k.get(str(k))
            row.append(round2(s.mean_dice) if s and s.n >= 1 else "")
        writer.writerow(row)
    writer.writerow([WMDC_FOOTER_LABEL, ""] + [round2(report.aggregates[str(k)].wmdc) for k in counts])
    writer.writerow([MDC_FOOTER_LABEL, ""] + [round2(report.aggregates[str(k)].mdc) for k in counts])
    return buf.getvalue()


def render_report(
    report: RunReport,
    out_base: str,
    formats: tuple[str, ...] = ("json",),
    baseline_wmdc: Optional[float] = None,
) -> list[str]:
    """Write the report in the requested formats; returns written paths.

    JSON keeps full precision and round-trips; CSV/Markdown round to 2
    decimals (half-up) at render time only.
    """
    written = []
    for fmt in formats:
        path = f"{out_base}.{fmt}"
        if fmt == "json":
            text = report.to_json()
        elif fmt == "md":
            text = render_markdown(report, baseline_wmdc=baseline_wmdc)
        elif fmt == "csv":
            text = render_csv(report)
        else:
            raise ConfigError(f"unknown report format {fmt!r}")
        with open(path, "w") as f:
            f.write(text)
        written.append(path)
    return written
