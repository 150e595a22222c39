#!/usr/bin/env python3
"""Generate a synthetic segmentation dataset for harness smoke tests.

Each image gets one rectangular foreground mask per class, placed away from
the borders so morphological perturbations stay inside the frame. Writes
images, masks, and a manifest with patient-wise split assignments.
"""

import argparse
import os

import numpy as np
from PIL import Image

from surgbench.dataset import (
    DatasetManifest,
    SampleRecord,
    SplitRatios,
    save_manifest,
    split_patientwise,
)


def write_png(path, array):
    os.makedirs(os.path.dirname(path), exist_ok=True)
    Image.fromarray(np.asarray(array, dtype=np.uint8), mode="L").save(path)


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument("--images", type=int, default=40)
    parser.add_argument("--classes", type=int, default=3)
    parser.add_argument("--patients", type=int, default=10)
    parser.add_argument("--size", type=int, default=64)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    rng = np.random.default_rng(args.seed)
    margin = 8
    records = []
    for i in range(args.images):
        image_path = os.path.join(args.out, "images", f"img{i:04d}.png")
        write_png(image_path, rng.integers(0, 256, size=(args.size, args.size)))
        for c in range(args.classes):
            class_id = f"class{c}"
            h = int(rng.integers(6, 14))
            w = int(rng.integers(6, 14))
            r0 = int(rng.integers(margin, args.size - margin - h))
            c0 = int(rng.integers(margin, args.size - margin - w))
            bits = np.zeros((args.size, args.size), dtype=np.uint8)
            bits[r0 : r0 + h, c0 : c0 + w] = 255
            mask_path = os.path.join(args.out, "masks", class_id, f"img{i:04d}.png")
            write_png(mask_path, bits)
            records.append(
                SampleRecord(
                    dataset_id="synth",
                    image_ref=image_path,
                    mask_ref=mask_path,
                    class_id=class_id,
                    patient_id=f"pat{i % args.patients}",
                )
            )

    manifest = DatasetManifest(
        records=tuple(records),
        split_ratios={"synth": SplitRatios(train=0.6, val=0.2, test=0.2)},
    )
    manifest = split_patientwise(manifest, seed=args.seed)
    manifest_path = os.path.join(args.out, "manifest.jsonl")
    save_manifest(manifest, manifest_path)
    print(f"wrote {len(records)} records -> {manifest_path}")
    for split in ("train", "val", "test"):
        print(f"  {split}: {len(manifest.for_split(split))} records")


if __name__ == "__main__":
    main()
