"""Dataset manifests, quality control, patient-wise splitting, subset selection.

A manifest is a JSON Lines file of sample records plus a JSON header file
carrying per-dataset class color maps and split ratios. Records reference
image/mask files lazily; nothing is opened until QC or evaluation needs it.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field, replace
from typing import Optional

from .errors import InfeasibleSplitError, ManifestError
from .masks import ClassColorMap, image_size, read_mask
from .prompts import SplitMix64, fnv1a_64

SPLITS = ("train", "val", "test")
DEFAULT_MIN_AREA = 50


@dataclass(frozen=True)
class SampleRecord:
    dataset_id: str
    image_ref: str
    mask_ref: str
    class_id: str
    patient_id: str
    split: str = "unassigned"

    def __post_init__(self):
        if not self.patient_id:
            raise ManifestError(f"record {self.key} has an empty patient_id")
        if self.split not in SPLITS + ("unassigned",):
            raise ManifestError(f"record {self.key} has unknown split {self.split!r}")

    @property
    def key(self) -> tuple[str, str, str]:
        return (self.dataset_id, self.image_ref, self.class_id)

    def to_json_obj(self) -> dict:
        return {
            "dataset_id": self.dataset_id,
            "image_ref": self.image_ref,
            "mask_ref": self.mask_ref,
            "class_id": self.class_id,
            "patient_id": self.patient_id,
            "split": self.split,
        }

    @classmethod
    def from_json_obj(cls, obj: dict) -> "SampleRecord":
        try:
            return cls(
                dataset_id=obj["dataset_id"],
                image_ref=obj["image_ref"],
                mask_ref=obj["mask_ref"],
                class_id=obj["class_id"],
                patient_id=obj["patient_id"],
                split=obj.get("split", "unassigned"),
            )
        except KeyError as exc:
            raise ManifestError(f"record missing field {exc}") from exc


@dataclass(frozen=True)
class SplitRatios:
    """Per-dataset split targets: fractions of patients, or patient counts."""

    train: float
    val: float
    test: float
    kind: str = "fraction"  # "fraction" | "patients"

    def __post_init__(self):
        if self.kind not in ("fraction", "patients"):
            raise ManifestError(f"unknown ratio kind {self.kind!r}")
        if min(self.train, self.val, self.test) < 0:
            raise ManifestError("split ratios must be non-negative")
        if self.kind == "fraction" and abs(self.train + self.val + self.test - 1.0) > 1e-9:
            raise ManifestError(
                f"fractional ratios must sum to 1.0, got {self.train + self.val + self.test}"
            )

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.train, self.val, self.test)

    def target_patients(self, n_patients: int) -> tuple[float, float, float]:
        if self.kind == "patients":
            total = self.train + self.val + self.test
            if total != n_patients:
                raise ManifestError(
                    f"patient-count ratios sum to {total}, dataset has {n_patients} patients"
                )
            return self.as_tuple()
        return tuple(r * n_patients for r in self.as_tuple())

    def to_json_obj(self) -> dict:
        return {"kind": self.kind, "train": self.train, "val": self.val, "test": self.test}

    @classmethod
    def from_json_obj(cls, obj: dict) -> "SplitRatios":
        return cls(
            train=obj["train"], val=obj["val"], test=obj["test"], kind=obj.get("kind", "fraction")
        )


@dataclass(frozen=True)
class DatasetManifest:
    records: tuple[SampleRecord, ...]
    class_color_maps: dict = field(default_factory=dict)
    split_ratios: dict = field(default_factory=dict)

    def __post_init__(self):
        seen = set()
        for rec in self.records:
            if rec.key in seen:
                raise ManifestError(f"duplicate record key {rec.key}")
            seen.add(rec.key)
        object.__setattr__(self, "records", tuple(self.records))

    def for_split(self, split: str) -> list[SampleRecord]:
        return [r for r in self.records if r.split == split]

    def datasets(self) -> list[str]:
        return sorted({r.dataset_id for r in self.records})

    def classes(self) -> list[str]:
        return sorted({r.class_id for r in self.records})


@dataclass(frozen=True)
class QcReport:
    kept: tuple[SampleRecord, ...]
    rejected: tuple[tuple[SampleRecord, str], ...]

    @property
    def kept_count(self) -> int:
        return len(self.kept)

    def to_json_obj(self) -> dict:
        return {
            "kept": self.kept_count,
            "rejected": [
                {"record": rec.to_json_obj(), "reason": reason}
                for rec, reason in self.rejected
            ],
        }


def _default_header_path(manifest_path: str) -> str:
    base, _ = os.path.splitext(manifest_path)
    return base + ".header.json"


def load_manifest(path: str, header_path: Optional[str] = None) -> DatasetManifest:
    """Load a JSON Lines manifest plus its JSON header (color maps, ratios).

    The header defaults to ``<manifest stem>.header.json`` next to the
    manifest and is optional; records alone are enough for QC.
    """
    records = []
    try:
        with open(path) as f:
            for lineno, line in enumerate(f, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    obj = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise ManifestError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
                records.append(SampleRecord.from_json_obj(obj))
    except OSError as exc:
        raise ManifestError(f"cannot read manifest {path}: {exc}") from exc

    header_path = header_path or _default_header_path(path)
    color_maps = {}
    ratios = {}
    if os.path.exists(header_path):
        try:
            with open(header_path) as f:
                header = json.load(f)
        except (OSError, json.JSONDecodeError) as exc:
            raise ManifestError(f"cannot read manifest header {header_path}: {exc}") from exc
        for ds, entries in header.get("class_color_maps", {}).items():
            color_maps[ds] = ClassColorMap(entries=entries)
        for ds, obj in header.get("split_ratios", {}).items():
            ratios[ds] = SplitRatios.from_json_obj(obj)
    return DatasetManifest(records=tuple(records), class_color_maps=color_maps, split_ratios=ratios)


def save_manifest(manifest: DatasetManifest, path: str, header_path: Optional[str] = None):
    with open(path, "w") as f:
        for rec in manifest.records:
            f.write(json.dumps(rec.to_json_obj(), sort_keys=True) + "\n")
    header_path = header_path or _default_header_path(path)
    header = {
        "class_color_maps": {
            ds: {cid: list(enc) if isinstance(enc, tuple) else enc for cid, enc in cm.entries.items()}
            for ds, cm in manifest.class_color_maps.items()
        },
        "split_ratios": {ds: r.to_json_obj() for ds, r in manifest.split_ratios.items()},
    }
    with open(header_path, "w") as f:
        json.dump(header, f, indent=2, sort_keys=True)


def apply_qc(
    records: list[SampleRecord],
    min_area: int = DEFAULT_MIN_AREA,
    min_area_datasets: Optional[set] = None,
) -> QcReport:
    """Reject empty masks, size-mismatched masks, and masks below min_area.

    ``min_area_datasets`` restricts the area floor to specific datasets
    (empty-mask and size-mismatch checks always apply); None applies it
    everywhere. Unreadable files reject the record rather than aborting.
    """
    kept = []
    rejected = []
    for rec in sorted(records, key=lambda r: r.key):
        try:
            mask = read_mask(rec.mask_ref)
        except Exception:
            rejected.append((rec, "unreadable"))
            continue
        try:
            with open(rec.image_ref, "rb") as f:
                img_h, img_w = image_size(f.read())
        except Exception:
            rejected.append((rec, "unreadable"))
            continue
        if (mask.height, mask.width) != (img_h, img_w):
            rejected.append((rec, "size_mismatch"))
            continue
        area = mask.area
        if area == 0:
            rejected.append((rec, "empty_mask"))
            continue
        area_floor_applies = min_area_datasets is None or rec.dataset_id in min_area_datasets
        if area_floor_applies and area < min_area:
            rejected.append((rec, "min_area"))
            continue
        kept.append(rec)
    return QcReport(kept=tuple(kept), rejected=tuple(rejected))


def split_patientwise(manifest: DatasetManifest, seed: int) -> DatasetManifest:
    """Assign every record a split such that each patient lands in one bucket.

    Greedy bin balancing per dataset: patients sorted by descending record
    count (ties ordered by a seeded hash) are assigned one by one to the
    bucket with the largest remaining patient deficit, ties broken
    train -> val -> test. Deterministic for a fixed (manifest, seed).
    """
    assignment = {}
    for ds in manifest.datasets():
        ds_records = [r for r in manifest.records if r.dataset_id == ds]
        ratios = manifest.split_ratios.get(ds)
        if ratios is None:
            raise ManifestError(f"no split ratios defined for dataset {ds!r}")
        counts = {}
        for rec in ds_records:
            counts[rec.patient_id] = counts.get(rec.patient_id, 0) + 1
        patients = sorted(
            counts,
            key=lambda p: (-counts[p], fnv1a_64(f"{seed}|{ds}|{p}".encode("utf-8"))),
        )
        targets = ratios.target_patients(len(patients))
        nonzero_buckets = sum(1 for t in targets if t > 0)
        if len(patients) < nonzero_buckets:
            raise InfeasibleSplitError(
                f"dataset {ds!r}: {len(patients)} patients for {nonzero_buckets} nonzero buckets"
            )
        deficits = list(targets)
        for patient in patients:
            bucket = max(range(3), key=lambda i: (deficits[i], -i))
            deficits[bucket] -= 1
            assignment[(ds, patient)] = SPLITS[bucket]
    new_records = tuple(
        replace(rec, split=assignment[(rec.dataset_id, rec.patient_id)])
        for rec in manifest.records
    )
    return DatasetManifest(
        records=new_records,
        class_color_maps=manifest.class_color_maps,
        split_ratios=manifest.split_ratios,
    )


def select_training_subset(
    manifest: DatasetManifest,
    classes: list[str],
    per_class_n: int,
    seed: int,
) -> tuple[list[SampleRecord], dict]:
    """Pick up to per_class_n train records per class, uniformly, seeded.

    Returns (selection, shortfalls) where shortfalls maps class_id to the
    number of missing records for classes with fewer train records than
    requested. Determinism mirrors the prompt sampler: per-class splitmix64
    stream seeded from the run seed and class id.
    """
    manifest_classes = set(manifest.classes())
    unknown = [c for c in classes if c not in manifest_classes]
    if unknown:
        raise ManifestError(f"classes not in manifest: {unknown}")
    selection = []
    shortfalls = {}
    for class_id in classes:
        pool = sorted(
            (r for r in manifest.records if r.split == "train" and r.class_id == class_id),
            key=lambda r: r.key,
        )
        if per_class_n <= 0:
            continue
        if len(pool) < per_class_n:
            shortfalls[class_id] = per_class_n - len(pool)
            selection.extend(pool)
            continue
        rng = SplitMix64(fnv1a_64(f"{seed}|subset|{class_id}".encode("utf-8")))
        remaining = list(pool)
        for _ in range(per_class_n):
            idx = rng.next_u64() % len(remaining)
            selection.append(remaining.pop(idx))
    return selection, shortfalls
