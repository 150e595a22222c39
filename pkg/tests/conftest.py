import json
import os

import numpy as np
import pytest
from PIL import Image

from surgbench.dataset import DatasetManifest, SampleRecord, SplitRatios


def write_png(path, array, mode="L"):
    os.makedirs(os.path.dirname(path), exist_ok=True)
    Image.fromarray(np.asarray(array, dtype=np.uint8), mode=mode).save(path)


def png_bytes(array, mode="L"):
    import io

    buf = io.BytesIO()
    Image.fromarray(np.asarray(array, dtype=np.uint8), mode=mode).save(buf, format="PNG")
    return buf.getvalue()


def mask_png_bytes(bits):
    return png_bytes(np.asarray(bits, dtype=bool).astype(np.uint8) * 255)


def block_mask(size, r0, c0, height, width):
    bits = np.zeros((size, size), dtype=bool)
    bits[r0 : r0 + height, c0 : c0 + width] = True
    return bits


def build_synthetic_dataset(
    root,
    n_classes=3,
    n_images=20,
    size=32,
    dataset_id="synth",
    n_patients=5,
    assign_splits=True,
):
    """Images with one interior rectangular mask per class, plus a manifest.

    Rectangles stay >= 5 px away from the borders so dilation up to radius 4
    keeps strictly growing. Returns the manifest path.
    """
    classes = [f"class{c}" for c in range(n_classes)]
    records = []
    for i in range(n_images):
        image_path = os.path.join(root, "images", f"img{i:03d}.png")
        rng = np.random.default_rng(1000 + i)
        write_png(image_path, rng.integers(0, 256, size=(size, size)))
        for c, class_id in enumerate(classes):
            # distinct interior blocks per (image, class)
            r0 = 5 + (i + 3 * c) % 8
            c0 = 5 + (2 * i + 5 * c) % 8
            h = 4 + (i + c) % 4
            w = 4 + (i + 2 * c) % 4
            bits = block_mask(size, r0, c0, h, w)
            mask_path = os.path.join(root, "masks", class_id, f"img{i:03d}.png")
            write_png(mask_path, bits.astype(np.uint8) * 255)
            split = ("val" if i % 2 == 0 else "train") if assign_splits else "unassigned"
            records.append(
                SampleRecord(
                    dataset_id=dataset_id,
                    image_ref=image_path,
                    mask_ref=mask_path,
                    class_id=class_id,
                    patient_id=f"pat{i % n_patients}",
                    split=split,
                )
            )
    manifest = DatasetManifest(
        records=tuple(records),
        split_ratios={dataset_id: SplitRatios(train=0.6, val=0.2, test=0.2)},
    )
    manifest_path = os.path.join(root, "manifest.jsonl")
    from surgbench.dataset import save_manifest

    save_manifest(manifest, manifest_path)
    return manifest_path


@pytest.fixture(scope="session")
def synth_dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("synth_ds")
    manifest_path = build_synthetic_dataset(str(root))
    return manifest_path


def write_clip(root, clip_id, class_id, n_frames, size=6, shift_per_frame=0, block=(0, 0, 6, 4)):
    """Synthetic clip: GT block translating shift_per_frame columns per frame."""
    frame_refs = []
    mask_refs = []
    r0, c0, h, w = block
    for t in range(n_frames):
        frame_path = os.path.join(root, clip_id, f"frame{t}.png")
        mask_path = os.path.join(root, clip_id, f"mask{t}.png")
        write_png(frame_path, np.full((size, size), 128))
        bits = np.zeros((size, size), dtype=bool)
        c = c0 + t * shift_per_frame
        bits[r0 : r0 + h, c : c + w] = True
        write_png(mask_path, bits.astype(np.uint8) * 255)
        frame_refs.append(frame_path)
        mask_refs.append(mask_path)
    return {
        "clip_id": clip_id,
        "class_id": class_id,
        "frame_refs": frame_refs,
        "mask_refs": mask_refs,
        "fps": 30.0,
    }


def write_clips_manifest(path, clips):
    with open(path, "w") as f:
        for clip in clips:
            f.write(json.dumps(clip) + "\n")
    return path
