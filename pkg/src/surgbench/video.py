"""Mask-propagation scoring for short clips.

The first frame of each clip is prompted with points sampled from its GT
mask; the tracker returns one mask per frame and each frame is scored with
Dice against its GT. Class-level aggregation is frame-weighted.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Optional

import requests

from .errors import (
    DomainError,
    ManifestError,
    PredictionFailure,
    ProtocolViolationError,
    SurgbenchError,
)
from .masks import BinaryMask, RleMask, decode_rle, pixel_counts, read_mask
from .metrics import dice
from .prompts import PromptSet, derive_seed, sample_points


@dataclass(frozen=True)
class ClipRecord:
    clip_id: str
    class_id: str
    frame_refs: tuple[str, ...]
    mask_refs: tuple[str, ...]
    fps: float = 0.0  # metadata only

    def __post_init__(self):
        if len(self.frame_refs) != len(self.mask_refs):
            raise ManifestError(f"clip {self.clip_id}: frame/mask list length mismatch")
        if len(self.frame_refs) < 2:
            raise ManifestError(f"clip {self.clip_id}: needs at least 2 frames")
        object.__setattr__(self, "frame_refs", tuple(self.frame_refs))
        object.__setattr__(self, "mask_refs", tuple(self.mask_refs))

    @classmethod
    def from_json_obj(cls, obj: dict) -> "ClipRecord":
        return cls(
            clip_id=obj["clip_id"],
            class_id=obj["class_id"],
            frame_refs=tuple(obj["frame_refs"]),
            mask_refs=tuple(obj["mask_refs"]),
            fps=obj.get("fps", 0.0),
        )


@dataclass(frozen=True)
class ClipScore:
    clip_id: str
    class_id: str
    prompt_count: int
    prompt_kind: str  # points | mask
    frame_dice: tuple[float, ...]

    @property
    def mean_dice(self) -> float:
        return sum(self.frame_dice) / len(self.frame_dice)

    def to_json_obj(self) -> dict:
        return {
            "clip_id": self.clip_id,
            "class_id": self.class_id,
            "prompt_count": self.prompt_count,
            "prompt_kind": self.prompt_kind,
            "frame_dice": list(self.frame_dice),
            "mean_dice": self.mean_dice,
        }


def load_clips(path: str) -> list[ClipRecord]:
    clips = []
    with open(path) as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                clips.append(ClipRecord.from_json_obj(json.loads(line)))
            except (json.JSONDecodeError, KeyError) as exc:
                raise ManifestError(f"{path}:{lineno}: {exc}") from exc
    return clips


# Trackers are callables: (clip, prompts) -> list[BinaryMask], one per frame.


class EchoTracker:
    """Returns the GT mask for every frame (perfect tracking oracle)."""

    def __call__(self, clip: ClipRecord, prompts: PromptSet) -> list[BinaryMask]:
        return [read_mask(ref) for ref in clip.mask_refs]


class FrozenTracker:
    """Returns the frame-0 GT mask for every frame (no propagation at all)."""

    def __call__(self, clip: ClipRecord, prompts: PromptSet) -> list[BinaryMask]:
        first = read_mask(clip.mask_refs[0])
        return [first for _ in clip.mask_refs]


class HttpTracker:
    """POST /v1/track with frame paths and frame-0 prompts."""

    def __init__(self, endpoint: str, timeout: float = 60.0):
        self.endpoint = endpoint
        self.timeout = timeout

    def __call__(self, clip: ClipRecord, prompts: PromptSet) -> list[BinaryMask]:
        body = {
            "request_id": clip.clip_id,
            "frames": list(clip.frame_refs),
            "prompts": prompts.to_json_obj(),
        }
        resp = requests.post(
            self.endpoint.rstrip("/") + "/v1/track", json=body, timeout=self.timeout
        )
        if resp.status_code != 200:
            try:
                err = resp.json().get("error", {})
            except ValueError:
                err = {}
            raise PredictionFailure(
                reason=err.get("code", f"http_{resp.status_code}"), message=str(err)
            )
        payload = resp.json()
        masks = [decode_rle(RleMask.from_json_obj(m)) for m in payload["masks"]]
        if len(masks) != len(clip.frame_refs):
            raise ProtocolViolationError(
                f"tracker returned {len(masks)} masks for {len(clip.frame_refs)} frames"
            )
        return masks


def run_clip(
    clip: ClipRecord,
    prompt_count: int,
    run_seed: int,
    tracker: Callable,
    include_frame0: bool = True,
) -> ClipScore:
    """Score one clip: prompt on frame 0, track, Dice per frame."""
    gt_masks = [read_mask(ref) for ref in clip.mask_refs]
    if gt_masks[0].area == 0:
        raise DomainError(f"clip {clip.clip_id}: empty first-frame GT mask")
    state = derive_seed(run_seed, "video", clip.clip_id, clip.class_id)
    prompts = sample_points(gt_masks[0], prompt_count, state)
    pred_masks = tracker(clip, prompts)
    if len(pred_masks) != len(gt_masks):
        raise ProtocolViolationError(
            f"clip {clip.clip_id}: {len(pred_masks)} predictions for {len(gt_masks)} frames"
        )
    start = 0 if include_frame0 else 1
    frame_dice = tuple(
        dice(pixel_counts(pred, gt))
        for pred, gt in zip(pred_masks[start:], gt_masks[start:])
    )
    return ClipScore(
        clip_id=clip.clip_id,
        class_id=clip.class_id,
        prompt_count=prompt_count,
        prompt_kind="points",
        frame_dice=frame_dice,
    )


def aggregate_clips(scores: list[ClipScore]) -> dict:
    """Frame-weighted mean Dice per (class_id, prompt_count).

    Returns {(class_id, prompt_count): {"mean_dice":..., "n_frames":...,
    "n_clips":..., "clip_weighted_mean":...}}; clip-weighted means are
    reported alongside for sensitivity.
    """
    if not scores:
        raise SurgbenchError("no clip scores to aggregate")
    groups: dict = {}
    for s in sorted(scores, key=lambda s: s.clip_id):
        groups.setdefault((s.class_id, s.prompt_count), []).append(s)
    out = {}
    for key, group in sorted(groups.items()):
        all_frames = [d for s in group for d in s.frame_dice]
        out[key] = {
            "mean_dice": sum(all_frames) / len(all_frames),
            "n_frames": len(all_frames),
            "n_clips": len(group),
            "clip_weighted_mean": sum(s.mean_dice for s in group) / len(group),
        }
    return out


def run_video_eval(
    clips: list[ClipRecord],
    prompt_counts: list[int],
    run_seed: int,
    tracker: Callable,
    include_frame0: bool = True,
) -> dict:
    """Full sweep; per-clip failures are recorded and skipped."""
    scores = []
    failures = []
    for clip in sorted(clips, key=lambda c: c.clip_id):
        for k in prompt_counts:
            try:
                scores.append(run_clip(clip, k, run_seed, tracker, include_frame0))
            except (PredictionFailure, ProtocolViolationError, SurgbenchError) as exc:
                failures.append({"clip_id": clip.clip_id, "prompt_count": k, "error": str(exc)})
    table = aggregate_clips(scores) if scores else {}
    return {
        "scores": [s.to_json_obj() for s in scores],
        "by_class": [
            {"class_id": class_id, "prompt_count": k, **vals}
            for (class_id, k), vals in table.items()
        ],
        "failures": failures,
        "run_seed": run_seed,
        "include_frame0": include_frame0,
    }
