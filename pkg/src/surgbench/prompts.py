"""Deterministic point-prompt sampling from ground-truth masks.

The whole pipeline's reproducibility hinges on this module, so the PRNG and
seed derivation are fixed, documented algorithms rather than library RNGs:

* seed derivation: FNV-1a 64 over ``"{run_seed}|{dataset_id}|{image_id}|{class_id}"``
* stream: splitmix64
* selection: without replacement over the row-major foreground pixel list;
  at step t the next u64 modulo (pool_size - t) indexes the remaining list.

Two independent implementations following this recipe agree bit-for-bit.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

from .errors import DomainError, EmptyPoolError
from .masks import BinaryMask, foreground_pixels

_MASK64 = 0xFFFFFFFFFFFFFFFF

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3

_SM64_INCREMENT = 0x9E3779B97F4A7C15
_SM64_MULT1 = 0xBF58476D1CE4E5B9
_SM64_MULT2 = 0x94D049BB133111EB


def fnv1a_64(data: bytes) -> int:
    h = _FNV_OFFSET
    for byte in data:
        h ^= byte
        h = (h * _FNV_PRIME) & _MASK64
    return h


def derive_seed(run_seed: int, dataset_id: str, image_id: str, class_id: str) -> int:
    """Per-example 64-bit PRNG state from the run seed and example identity."""
    for name, value in (("dataset_id", dataset_id), ("image_id", image_id), ("class_id", class_id)):
        if not value:
            raise DomainError(f"{name} must be a non-empty string")
    material = f"{run_seed}|{dataset_id}|{image_id}|{class_id}"
    return fnv1a_64(material.encode("utf-8"))


class SplitMix64:
    """splitmix64 stream generator."""

    def __init__(self, state: int):
        self.state = state & _MASK64

    def next_u64(self) -> int:
        self.state = (self.state + _SM64_INCREMENT) & _MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * _SM64_MULT1) & _MASK64
        z = ((z ^ (z >> 27)) * _SM64_MULT2) & _MASK64
        return z ^ (z >> 31)


@dataclass(frozen=True)
class PromptSet:
    """Ordered positive point prompts for one (image, class).

    Points are (x=column, y=row), all on foreground pixels of the source
    mask. ``shortfall`` is set when the mask had fewer foreground pixels than
    requested. By construction, the first j points for a given seed material
    equal the j-point set (prefix property).
    """

    points: tuple[tuple[int, int], ...]
    requested: int
    shortfall: bool = False

    def __len__(self) -> int:
        return len(self.points)

    def prefix(self, k: int) -> "PromptSet":
        if k >= len(self.points):
            return PromptSet(points=self.points, requested=k, shortfall=k > len(self.points))
        return PromptSet(points=self.points[:k], requested=k, shortfall=False)

    def to_json_obj(self) -> dict:
        return {"points": [{"x": x, "y": y, "label": 1} for x, y in self.points]}

    def to_json(self) -> str:
        return json.dumps(self.to_json_obj(), separators=(",", ":"))

    @classmethod
    def from_json_obj(cls, obj: dict) -> "PromptSet":
        pts = tuple((int(p["x"]), int(p["y"])) for p in obj["points"])
        return cls(points=pts, requested=len(pts))


def sample_points(mask: BinaryMask, k: int, state: int) -> PromptSet:
    """Draw min(k, area) distinct foreground points without replacement.

    The candidate pool is the row-major foreground pixel list; each draw
    removes its pick, so any k-point set extends the (k-1)-point set for the
    same state.
    """
    if k < 1:
        raise DomainError(f"k must be >= 1, got {k}")
    pool = foreground_pixels(mask)
    if not pool:
        raise EmptyPoolError("cannot sample prompts from an empty mask (QC should have removed it)")
    rng = SplitMix64(state)
    n = min(k, len(pool))
    picked = []
    for _ in range(n):
        idx = rng.next_u64() % len(pool)
        row, col = pool.pop(idx)
        picked.append((col, row))
    return PromptSet(points=tuple(picked), requested=k, shortfall=n < k)
