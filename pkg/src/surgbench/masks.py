"""Binary masks, image decoding, multi-class splitting, RLE codec, pixel counts.

Everything downstream (prompt sampling, metrics, predictors) is built on the
BinaryMask type defined here. All operations are pure; masks are frozen after
construction so they can be shared across worker threads freely.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import CorruptRleError, DimensionMismatchError, DomainError, MaskFormatError

DEFAULT_FOREGROUND_THRESHOLD = 128


@dataclass(frozen=True)
class BinaryMask:
    """Per-class foreground bitmap for one image/frame.

    ``bits`` is a read-only (height, width) bool array, True = foreground.
    """

    height: int
    width: int
    bits: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.height < 1 or self.width < 1:
            raise DomainError(f"mask dimensions must be >= 1, got {self.height}x{self.width}")
        bits = np.asarray(self.bits, dtype=bool)
        if bits.shape != (self.height, self.width):
            raise DomainError(
                f"bits shape {bits.shape} does not match {self.height}x{self.width}"
            )
        bits = bits.copy()
        bits.setflags(write=False)
        object.__setattr__(self, "bits", bits)

    @classmethod
    def from_array(cls, bits) -> "BinaryMask":
        arr = np.asarray(bits, dtype=bool)
        if arr.ndim != 2:
            raise DomainError(f"expected a 2-D bitmap, got ndim={arr.ndim}")
        return cls(height=arr.shape[0], width=arr.shape[1], bits=arr)

    @property
    def area(self) -> int:
        return int(self.bits.sum())

    def __eq__(self, other) -> bool:
        if not isinstance(other, BinaryMask):
            return NotImplemented
        return (
            self.height == other.height
            and self.width == other.width
            and bool(np.array_equal(self.bits, other.bits))
        )

    def __hash__(self):
        return hash((self.height, self.width, self.bits.tobytes()))


@dataclass(frozen=True)
class RleMask:
    """Column-major run-length encoding, alternating background/foreground runs.

    The first run is background; a mask starting with foreground carries a
    leading zero-length background run. ``sum(counts) == height * width``.
    """

    height: int
    width: int
    counts: tuple[int, ...]

    def __post_init__(self):
        counts = tuple(int(c) for c in self.counts)
        object.__setattr__(self, "counts", counts)
        if any(c < 0 for c in counts):
            raise CorruptRleError("negative run length")
        if any(c == 0 for c in counts[1:]):
            raise CorruptRleError("zero-length run after the first element")
        if sum(counts) != self.height * self.width:
            raise CorruptRleError(
                f"run lengths sum to {sum(counts)}, expected {self.height * self.width}"
            )

    def to_json_obj(self) -> dict:
        return {"size": [self.height, self.width], "counts": list(self.counts)}

    @classmethod
    def from_json_obj(cls, obj: dict) -> "RleMask":
        try:
            h, w = obj["size"]
            counts = obj["counts"]
        except (KeyError, TypeError, ValueError) as exc:
            raise CorruptRleError(f"malformed RLE object: {exc}") from exc
        return cls(height=int(h), width=int(w), counts=tuple(int(c) for c in counts))


@dataclass(frozen=True)
class ClassColorMap:
    """class_id -> label encoding: either a single 8-bit value or an RGB triple.

    Encodings must be unique across classes; matching is exact equality.
    """

    entries: dict

    def __post_init__(self):
        norm = {}
        for class_id, enc in self.entries.items():
            if isinstance(enc, (list, tuple)):
                if len(enc) != 3:
                    raise DomainError(f"RGB encoding for {class_id!r} must have 3 components")
                norm[class_id] = tuple(int(v) for v in enc)
            else:
                norm[class_id] = int(enc)
        seen = {}
        for class_id, enc in norm.items():
            if enc in seen:
                raise DomainError(
                    f"classes {seen[enc]!r} and {class_id!r} share encoding {enc!r}"
                )
            seen[enc] = class_id
        object.__setattr__(self, "entries", norm)

    @property
    def is_rgb(self) -> bool:
        return any(isinstance(v, tuple) for v in self.entries.values())


def _decode_image(image_bytes: bytes) -> Image.Image:
    try:
        img = Image.open(io.BytesIO(image_bytes))
        img.load()
    except (UnidentifiedImageError, OSError, ValueError) as exc:
        raise MaskFormatError(f"undecodable image bytes: {exc}") from exc
    return img


def decode_mask(image_bytes: bytes, threshold: int = DEFAULT_FOREGROUND_THRESHOLD) -> BinaryMask:
    """Decode an encoded grayscale image into a BinaryMask.

    Pixels with value >= threshold are foreground. Multi-channel inputs are
    converted to single-channel luminance first.
    """
    img = _decode_image(image_bytes)
    if img.width == 0 or img.height == 0:
        raise DomainError("zero-dimension image")
    if img.mode != "L":
        img = img.convert("L")
    arr = np.asarray(img, dtype=np.uint8)
    return BinaryMask.from_array(arr >= threshold)


def read_mask(path, threshold: int = DEFAULT_FOREGROUND_THRESHOLD) -> BinaryMask:
    with open(path, "rb") as f:
        return decode_mask(f.read(), threshold=threshold)


def image_size(image_bytes: bytes) -> tuple[int, int]:
    """(height, width) of an encoded image, without full pixel materialization."""
    img = _decode_image(image_bytes)
    return img.height, img.width


def split_multiclass(label_image: bytes, color_map: ClassColorMap) -> dict:
    """Split a multi-class label image into per-class binary masks.

    Returns {class_id: BinaryMask} with one entry per class in the map;
    classes whose encoding is absent yield an all-background mask. Matching
    is exact equality, so the per-class masks are pairwise disjoint.
    """
    img = _decode_image(label_image)
    if img.width == 0 or img.height == 0:
        raise DomainError("zero-dimension label image")
    if color_map.is_rgb:
        if img.mode in ("L", "I", "I;16", "1"):
            raise MaskFormatError(
                f"RGB color map applied to single-channel image (mode {img.mode})"
            )
        arr = np.asarray(img.convert("RGB"), dtype=np.uint8)
        out = {}
        for class_id, enc in color_map.entries.items():
            if isinstance(enc, tuple):
                target = np.array(enc, dtype=np.uint8)
                bits = np.all(arr == target, axis=-1)
            else:
                raise MaskFormatError(
                    f"scalar encoding for {class_id!r} in an RGB color map"
                )
            out[class_id] = BinaryMask.from_array(bits)
        return out
    if img.mode not in ("L", "P", "I", "1"):
        img = img.convert("L")
    # for paletted images the palette *index* is the label value
    arr = np.asarray(img, dtype=np.int64)
    return {
        class_id: BinaryMask.from_array(arr == enc)
        for class_id, enc in color_map.entries.items()
    }


def encode_rle(mask: BinaryMask) -> RleMask:
    """Column-major, background-first run-length encoding."""
    flat = mask.bits.flatten(order="F")
    # boundaries between runs, plus the two ends
    changes = np.flatnonzero(flat[1:] != flat[:-1]) + 1
    bounds = np.concatenate(([0], changes, [flat.size]))
    counts = np.diff(bounds).tolist()
    if flat[0]:
        counts = [0] + counts
    return RleMask(height=mask.height, width=mask.width, counts=tuple(counts))


def decode_rle(rle: RleMask) -> BinaryMask:
    """Inverse of :func:`encode_rle`."""
    flat = np.zeros(rle.height * rle.width, dtype=bool)
    pos = 0
    fg = False
    for count in rle.counts:
        if fg:
            flat[pos : pos + count] = True
        pos += count
        fg = not fg
    bits = flat.reshape((rle.width, rle.height)).T
    return BinaryMask(height=rle.height, width=rle.width, bits=bits)


def pixel_counts(pred: BinaryMask, gt: BinaryMask):
    """Intersection / union / per-mask sums for a prediction-GT pair.

    Raises DimensionMismatchError when the masks disagree in size (upstream
    QC is expected to have removed size-mismatched pairs already).
    """
    from .metrics import PixelCounts

    if (pred.height, pred.width) != (gt.height, gt.width):
        raise DimensionMismatchError(
            f"prediction {pred.height}x{pred.width} vs ground truth {gt.height}x{gt.width}"
        )
    inter = int(np.logical_and(pred.bits, gt.bits).sum())
    psum = pred.area
    gsum = gt.area
    return PixelCounts(
        intersection=inter,
        union=psum + gsum - inter,
        predicted_sum=psum,
        ground_truth_sum=gsum,
    )


def foreground_pixels(mask: BinaryMask) -> list[tuple[int, int]]:
    """Foreground coordinates as (row, col), strictly increasing row-major."""
    rows, cols = np.nonzero(mask.bits)
    return list(zip(rows.tolist(), cols.tolist()))
