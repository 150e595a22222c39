"""Protocol conformance suite runnable against any predictor endpoint.

Materializes a small synthetic image/mask pair, then exercises the wire
contract: schema-valid responses, request_id echo, correct mask size,
rejection of out-of-bounds prompts. Backend authors (oracle, stub, real
models) run this to prove they speak the protocol the harness expects.
"""

from __future__ import annotations

import io
import json
import os
from dataclasses import dataclass
from importlib import resources

import jsonschema
import numpy as np
import requests
from PIL import Image

from .masks import BinaryMask, RleMask, decode_rle
from .prompts import PromptSet

SCHEMA_NAME = "predict_protocol.schema.json"


def load_schema() -> dict:
    return json.loads(
        (resources.files("surgbench") / "assets" / SCHEMA_NAME).read_text()
    )


def validate_message(obj: dict, definition: str):
    """Validate a protocol message against one schema definition."""
    schema = load_schema()
    jsonschema.validate(obj, {**schema, "$ref": f"#/definitions/{definition}"})


@dataclass
class ConformanceResult:
    name: str
    passed: bool
    detail: str = ""


def write_synthetic_example(directory: str, dataset: str = "synth", class_id: str = "blob"):
    """8x8 image + centered 4x4 GT mask laid out as dataset/class/image files.

    Returns (image_path, mask_path, gt BinaryMask).
    """
    bits = np.zeros((8, 8), dtype=bool)
    bits[2:6, 2:6] = True
    gt = BinaryMask.from_array(bits)
    img_dir = os.path.join(directory, dataset, "images")
    mask_dir = os.path.join(directory, dataset, class_id)
    os.makedirs(img_dir, exist_ok=True)
    os.makedirs(mask_dir, exist_ok=True)
    image_path = os.path.join(img_dir, "frame0.png")
    mask_path = os.path.join(mask_dir, "frame0.png")
    Image.fromarray((bits * 200).astype(np.uint8), mode="L").save(image_path)
    Image.fromarray((bits * 255).astype(np.uint8), mode="L").save(mask_path)
    return image_path, mask_path, gt


def run_conformance(endpoint: str, workdir: str, timeout: float = 10.0) -> list[ConformanceResult]:
    """Run the fixture suite against an endpoint; one result per check."""
    image_path, _, gt = write_synthetic_example(workdir)
    prompts = PromptSet(points=((3, 3), (4, 4)), requested=2)
    results = []

    def check(name, fn):
        try:
            fn()
            results.append(ConformanceResult(name=name, passed=True))
        except Exception as exc:
            results.append(ConformanceResult(name=name, passed=False, detail=f"{exc}"))

    url = endpoint.rstrip("/") + "/v1/predict"

    def valid_roundtrip():
        body = {
            "request_id": "conf-1",
            "image": {"path": image_path},
            "prompts": prompts.to_json_obj(),
        }
        validate_message(body, "predict_request")
        resp = requests.post(url, json=body, timeout=timeout)
        assert resp.status_code == 200, f"status {resp.status_code}: {resp.text[:200]}"
        payload = resp.json()
        validate_message(payload, "predict_response")
        assert payload["request_id"] == "conf-1", "request_id not echoed"
        mask = decode_rle(RleMask.from_json_obj(payload["mask"]))
        assert (mask.height, mask.width) == (gt.height, gt.width), "mask size mismatch"

    def oracle_returns_gt():
        body = {
            "request_id": "conf-2",
            "image": {"path": image_path},
            "prompts": prompts.to_json_obj(),
        }
        resp = requests.post(url, json=body, timeout=timeout)
        assert resp.status_code == 200
        mask = decode_rle(RleMask.from_json_obj(resp.json()["mask"]))
        assert mask == gt, "oracle backend did not return the GT mask"

    def out_of_bounds_rejected():
        bad = PromptSet(points=((100, 100),), requested=1)
        body = {
            "request_id": "conf-3",
            "image": {"path": image_path},
            "prompts": bad.to_json_obj(),
        }
        resp = requests.post(url, json=body, timeout=timeout)
        assert resp.status_code == 400, f"expected 400, got {resp.status_code}"
        payload = resp.json()
        validate_message(payload, "error_response")
        assert payload["error"]["code"] == "bad_prompt", payload["error"]

    def malformed_rejected():
        resp = requests.post(url, json={"nonsense": True}, timeout=timeout)
        assert resp.status_code == 400, f"expected 400, got {resp.status_code}"
        validate_message(resp.json(), "error_response")

    check("valid_request_roundtrip", valid_roundtrip)
    check("oracle_returns_gt", oracle_returns_gt)
    check("out_of_bounds_prompt_rejected", out_of_bounds_rejected)
    check("malformed_request_rejected", malformed_rejected)
    return results
