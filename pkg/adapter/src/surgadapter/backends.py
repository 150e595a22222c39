"""Segmentation backends behind the protocol server.

The oracle and stub backends exist so the full client/server stack can be
exercised without any model: the oracle answers from ground-truth mask
files, the stub from precomputed prediction files. The sam2 backends are
declared but require the external model package and a checkpoint.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Optional

from surgbench.masks import BinaryMask, read_mask

from .errors import BackendError

BACKENDS = ("sam2-image", "sam2-video", "oracle", "stub")


@dataclass(frozen=True)
class AdapterConfig:
    backend: str
    checkpoint: Optional[str] = None
    device: str = "cpu"
    multimask_selection: str = "highest-score"
    gt_dir: Optional[str] = None  # oracle backend
    stub_dir: Optional[str] = None  # stub backend

    def __post_init__(self):
        if self.backend not in BACKENDS:
            raise BackendError("bad_backend", f"unknown backend {self.backend!r}")
        if self.backend.startswith("sam2") and not self.checkpoint:
            raise BackendError("bad_backend", f"backend {self.backend} requires a checkpoint path")
        if self.multimask_selection != "highest-score":
            raise BackendError(
                "bad_backend", f"unknown multimask selection {self.multimask_selection!r}"
            )
        if self.backend == "oracle" and not self.gt_dir:
            raise BackendError("bad_backend", "oracle backend requires gt_dir")
        if self.backend == "stub" and not self.stub_dir:
            raise BackendError("bad_backend", "stub backend requires stub_dir")


class OracleBackend:
    """Answers from ground-truth masks laid out as gt_dir/dataset/class/image.png.

    Images live at gt_dir/dataset/images/image.png. The request carries no
    class id, so the class is inferred as the one whose mask contains every
    prompt point (per-class masks are disjoint by construction upstream).
    """

    supports_tracking = True

    def __init__(self, gt_dir: str):
        self.gt_dir = os.path.abspath(gt_dir)

    def _locate(self, image_path: str) -> tuple[str, str]:
        rel = os.path.relpath(os.path.abspath(image_path), self.gt_dir)
        parts = rel.split(os.sep)
        if len(parts) != 3 or parts[1] != "images" or parts[0] == "..":
            raise BackendError(
                "bad_image",
                f"image {image_path} is not under {self.gt_dir}/<dataset>/images/",
            )
        return parts[0], parts[2]

    def _class_dirs(self, dataset: str) -> list[str]:
        base = os.path.join(self.gt_dir, dataset)
        if not os.path.isdir(base):
            raise BackendError("bad_image", f"unknown dataset directory {base}")
        return sorted(
            d for d in os.listdir(base)
            if d != "images" and os.path.isdir(os.path.join(base, d))
        )

    def _resolve_class(self, dataset: str, name: str, points) -> str:
        candidates = []
        for class_id in self._class_dirs(dataset):
            mask_path = os.path.join(self.gt_dir, dataset, class_id, name)
            if not os.path.exists(mask_path):
                continue
            mask = read_mask(mask_path)
            if all(y < mask.height and x < mask.width and mask.bits[y, x] for x, y in points):
                candidates.append(class_id)
        if not candidates:
            raise BackendError(
                "oracle_no_match", f"no GT mask contains all prompt points for {dataset}/{name}"
            )
        return candidates[0]

    def predict(self, image_path: str, points) -> tuple[BinaryMask, float]:
        if image_path is None:
            raise BackendError("bad_image", "oracle backend needs an image path, not inline bytes")
        if not points:
            raise BackendError("bad_prompt", "oracle backend needs at least one prompt point")
        dataset, name = self._locate(image_path)
        class_id = self._resolve_class(dataset, name, points)
        return read_mask(os.path.join(self.gt_dir, dataset, class_id, name)), 1.0

    def track(self, frame_paths, points) -> list[BinaryMask]:
        if not points:
            raise BackendError("bad_prompt", "tracking needs at least one frame-0 prompt point")
        dataset, first = self._locate(frame_paths[0])
        class_id = self._resolve_class(dataset, first, points)
        masks = []
        for path in frame_paths:
            ds, name = self._locate(path)
            mask_path = os.path.join(self.gt_dir, ds, class_id, name)
            if not os.path.exists(mask_path):
                raise BackendError("oracle_no_match", f"no GT mask for frame {path}")
            masks.append(read_mask(mask_path))
        return masks


class StubBackend:
    """Answers from flat precomputed predictions: stub_dir/<image stem>.png."""

    supports_tracking = False

    def __init__(self, stub_dir: str):
        self.stub_dir = stub_dir

    def predict(self, image_path: str, points) -> tuple[BinaryMask, float]:
        if image_path is None:
            raise BackendError("bad_image", "stub backend needs an image path, not inline bytes")
        stem = os.path.splitext(os.path.basename(image_path))[0]
        path = os.path.join(self.stub_dir, stem + ".png")
        if not os.path.exists(path):
            raise BackendError("missing_prediction", path)
        return read_mask(path), 1.0


class Sam2Backend:
    """Placeholder for the real model wrapper: needs the external package."""

    supports_tracking = False

    def __init__(self, config: AdapterConfig):
        if not os.path.exists(config.checkpoint):
            raise BackendError("bad_backend", f"checkpoint not found: {config.checkpoint}")
        try:
            import sam2  # noqa: F401
        except ImportError as exc:
            raise BackendError(
                "bad_backend",
                "sam2 backends require the external model package to be installed",
            ) from exc
        raise BackendError("bad_backend", "sam2 backend wiring is not implemented in this build")


def build_backend(config: AdapterConfig):
    if config.backend == "oracle":
        return OracleBackend(config.gt_dir)
    if config.backend == "stub":
        return StubBackend(config.stub_dir)
    return Sam2Backend(config)
