"""Predictor protocol client and in-process reference predictors.

The wire protocol is HTTP POST /v1/predict with JSON bodies (the same
bodies work line-by-line over stdio for subprocess predictors). The
in-process oracle and stub predictors let the whole pipeline run with no
model, no network, and no GPU.
"""

from __future__ import annotations

import base64
import json
import os
import subprocess
import time
from dataclasses import dataclass
from typing import Optional

import numpy as np
import requests
from scipy import ndimage

from .errors import (
    DomainError,
    MaskFormatError,
    PredictionFailure,
    ProtocolViolationError,
    TransportError,
)
from .masks import BinaryMask, RleMask, decode_rle, read_mask
from .prompts import PromptSet

DEFAULT_TIMEOUT = 30.0
DEFAULT_RETRIES = 3
DEFAULT_BACKOFF = 0.25  # seconds, doubled per retry


@dataclass(frozen=True)
class PredictRequest:
    request_id: str
    image_path: Optional[str] = None
    image_png: Optional[bytes] = None
    prompts: Optional[PromptSet] = None

    def __post_init__(self):
        if (self.image_path is None) == (self.image_png is None):
            raise DomainError("exactly one of image_path / image_png must be set")

    def to_json_obj(self) -> dict:
        if self.image_path is not None:
            image = {"path": self.image_path}
        else:
            image = {"png_base64": base64.b64encode(self.image_png).decode("ascii")}
        return {
            "request_id": self.request_id,
            "image": image,
            "prompts": self.prompts.to_json_obj() if self.prompts else {"points": []},
        }


@dataclass(frozen=True)
class PredictResponse:
    request_id: str
    mask: RleMask
    score: Optional[float] = None

    @classmethod
    def from_json_obj(cls, obj: dict) -> "PredictResponse":
        try:
            return cls(
                request_id=obj["request_id"],
                mask=RleMask.from_json_obj(obj["mask"]),
                score=obj.get("score"),
            )
        except KeyError as exc:
            raise ProtocolViolationError(f"response missing field {exc}") from exc


@dataclass(frozen=True)
class PerturbationSpec:
    """Controlled corruption for oracle predictions (test knob)."""

    kind: str = "none"  # none | dilate | erode | translate
    magnitude: int = 0

    def __post_init__(self):
        if self.kind not in ("none", "dilate", "erode", "translate"):
            raise DomainError(f"unknown perturbation kind {self.kind!r}")
        if self.magnitude < 0:
            raise DomainError("magnitude must be >= 0")
        if self.kind == "none" and self.magnitude != 0:
            raise DomainError("kind 'none' requires magnitude 0")

    @classmethod
    def parse(cls, text: str) -> "PerturbationSpec":
        if text in ("", "none"):
            return cls()
        kind, _, mag = text.partition(":")
        return cls(kind=kind, magnitude=int(mag or 0))


def predict(
    endpoint: str,
    request: PredictRequest,
    timeout: float = DEFAULT_TIMEOUT,
    retries: int = DEFAULT_RETRIES,
    backoff: float = DEFAULT_BACKOFF,
    expected_size: Optional[tuple[int, int]] = None,
) -> PredictResponse:
    """POST one predict request, with bounded retries on transport faults.

    Server-side error payloads are surfaced as PredictionFailure with the
    server's code; protocol violations (wrong request_id, wrong mask size)
    raise ProtocolViolationError.
    """
    url = endpoint.rstrip("/") + "/v1/predict"
    body = request.to_json_obj()
    last_exc = None
    for attempt in range(retries + 1):
        try:
            resp = requests.post(url, json=body, timeout=timeout)
        except (requests.Timeout, requests.ConnectionError) as exc:
            last_exc = exc
            if attempt < retries:
                time.sleep(backoff * (2**attempt))
            continue
        if resp.status_code != 200:
            try:
                err = resp.json().get("error", {})
            except ValueError:
                err = {}
            raise PredictionFailure(
                reason=err.get("code", f"http_{resp.status_code}"),
                message=err.get("message", resp.text[:200]),
            )
        try:
            payload = resp.json()
        except ValueError as exc:
            raise ProtocolViolationError(f"non-JSON 200 response: {exc}") from exc
        response = PredictResponse.from_json_obj(payload)
        if response.request_id != request.request_id:
            raise ProtocolViolationError(
                f"request_id mismatch: sent {request.request_id!r}, got {response.request_id!r}"
            )
        if expected_size is not None and (response.mask.height, response.mask.width) != expected_size:
            raise ProtocolViolationError(
                f"mask size {response.mask.height}x{response.mask.width} "
                f"differs from image size {expected_size[0]}x{expected_size[1]}"
            )
        return response
    raise TransportError(f"predict failed after {retries + 1} attempts: {last_exc}")


def oracle_predict(gt: BinaryMask, spec: PerturbationSpec) -> BinaryMask:
    """Ground truth, optionally perturbed: morphology or column translation."""
    if spec.kind == "none" or spec.magnitude == 0:
        return gt
    if spec.kind in ("dilate", "erode"):
        size = 2 * spec.magnitude + 1
        structure = np.ones((size, size), dtype=bool)
        op = ndimage.binary_dilation if spec.kind == "dilate" else ndimage.binary_erosion
        return BinaryMask.from_array(op(gt.bits, structure=structure))
    # translate: shift right by magnitude columns, zero-fill
    shifted = np.zeros_like(gt.bits)
    if spec.magnitude < gt.width:
        shifted[:, spec.magnitude :] = gt.bits[:, : gt.width - spec.magnitude]
    return BinaryMask.from_array(shifted)


def stub_predict(prediction_dir: str, image_id: str, class_id: str) -> BinaryMask:
    """Load a precomputed prediction from ``prediction_dir/class_id/image_id.png``.

    Lets any model that can write mask PNGs to disk be evaluated offline.
    """
    path = os.path.join(prediction_dir, class_id, image_id + ".png")
    if not os.path.exists(path):
        raise PredictionFailure(reason="missing_prediction", message=path)
    try:
        return read_mask(path)
    except (MaskFormatError, DomainError) as exc:
        raise PredictionFailure(reason="corrupt_prediction", message=str(exc)) from exc


# ---------------------------------------------------------------------------
# In-process predictor objects used by the runner. Each is a callable taking
# an EvalExample (see runner module) and returning a BinaryMask, raising
# PredictionFailure for per-example problems.


class OraclePredictor:
    """Returns the example's ground-truth mask, optionally perturbed."""

    def __init__(self, perturbation: PerturbationSpec = PerturbationSpec()):
        self.perturbation = perturbation

    def __call__(self, example) -> BinaryMask:
        return oracle_predict(example.gt, self.perturbation)


class StubPredictor:
    """Reads predictions from ``root/dataset/class/image.png``."""

    def __init__(self, root: str):
        self.root = root

    def __call__(self, example) -> BinaryMask:
        image_id = os.path.splitext(os.path.basename(example.record.image_ref))[0]
        return stub_predict(
            os.path.join(self.root, example.record.dataset_id),
            image_id,
            example.record.class_id,
        )


class HttpPredictor:
    """Speaks the wire protocol against a live endpoint."""

    def __init__(
        self,
        endpoint: str,
        timeout: float = DEFAULT_TIMEOUT,
        retries: int = DEFAULT_RETRIES,
        backoff: float = DEFAULT_BACKOFF,
        inline_images: bool = False,
    ):
        self.endpoint = endpoint
        self.timeout = timeout
        self.retries = retries
        self.backoff = backoff
        self.inline_images = inline_images

    def __call__(self, example) -> BinaryMask:
        if self.inline_images:
            with open(example.record.image_ref, "rb") as f:
                request = PredictRequest(
                    request_id=example.request_id, image_png=f.read(), prompts=example.prompts
                )
        else:
            request = PredictRequest(
                request_id=example.request_id,
                image_path=example.record.image_ref,
                prompts=example.prompts,
            )
        response = predict(
            self.endpoint,
            request,
            timeout=self.timeout,
            retries=self.retries,
            backoff=self.backoff,
            expected_size=(example.gt.height, example.gt.width),
        )
        return decode_rle(response.mask)


class StdioPredictor:
    """Runs a subprocess speaking the same JSON bodies, one per line."""

    def __init__(self, command: list[str]):
        self.command = command
        self._proc = None

    def _ensure(self):
        if self._proc is None or self._proc.poll() is not None:
            self._proc = subprocess.Popen(
                self.command,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                text=True,
                bufsize=1,
            )
        return self._proc

    def __call__(self, example) -> BinaryMask:
        request = PredictRequest(
            request_id=example.request_id,
            image_path=example.record.image_ref,
            prompts=example.prompts,
        )
        proc = self._ensure()
        proc.stdin.write(json.dumps(request.to_json_obj(), separators=(",", ":")) + "\n")
        proc.stdin.flush()
        line = proc.stdout.readline()
        if not line:
            raise TransportError("stdio predictor closed its output")
        payload = json.loads(line)
        if "error" in payload:
            err = payload["error"]
            raise PredictionFailure(reason=err.get("code", "error"), message=err.get("message", ""))
        response = PredictResponse.from_json_obj(payload)
        if response.request_id != request.request_id:
            raise ProtocolViolationError("request_id mismatch on stdio transport")
        if (response.mask.height, response.mask.width) != (example.gt.height, example.gt.width):
            raise ProtocolViolationError("mask size differs from image size")
        return decode_rle(response.mask)

    def close(self):
        if self._proc is not None and self._proc.poll() is None:
            self._proc.stdin.close()
            self._proc.wait(timeout=10)
