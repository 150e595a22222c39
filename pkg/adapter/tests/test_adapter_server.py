import json
import os
import threading

import numpy as np
import pytest
import requests
from PIL import Image

from surgadapter.backends import AdapterConfig, OracleBackend, StubBackend, build_backend
from surgadapter.errors import BackendError
from surgadapter.server import make_server
from surgbench.conformance import run_conformance
from surgbench.dataset import DatasetManifest, SampleRecord, load_manifest, save_manifest
from surgbench.errors import PredictionFailure
from surgbench.masks import read_mask
from surgbench.predictor import HttpPredictor, OraclePredictor
from surgbench.runner import RunConfig, run_eval
from surgbench.video import ClipRecord, HttpTracker, run_clip


def write_png(path, array):
    os.makedirs(os.path.dirname(path), exist_ok=True)
    Image.fromarray(np.asarray(array, dtype=np.uint8), mode="L").save(path)


def build_gt_dataset(root, dataset="oracle_ds", n_images=6, size=24):
    """GT layout the oracle backend serves from, plus a harness manifest.

    Two classes with disjoint interior blocks per image, so prompt points
    identify the class unambiguously.
    """
    records = []
    for i in range(n_images):
        name = f"img{i:03d}.png"
        image_path = os.path.join(root, dataset, "images", name)
        rng = np.random.default_rng(500 + i)
        write_png(image_path, rng.integers(0, 256, size=(size, size)))
        blocks = {"classA": (2 + i % 3, 2, 6, 6), "classB": (13, 12 + i % 3, 7, 7)}
        for class_id, (r0, c0, h, w) in blocks.items():
            bits = np.zeros((size, size), dtype=np.uint8)
            bits[r0 : r0 + h, c0 : c0 + w] = 255
            mask_path = os.path.join(root, dataset, class_id, name)
            write_png(mask_path, bits)
            records.append(
                SampleRecord(
                    dataset_id=dataset,
                    image_ref=image_path,
                    mask_ref=mask_path,
                    class_id=class_id,
                    patient_id=f"p{i}",
                    split="val",
                )
            )
    manifest_path = os.path.join(root, "manifest.jsonl")
    save_manifest(DatasetManifest(records=tuple(records)), manifest_path)
    return manifest_path


def write_clip_gt(root, dataset="vid", clip_id="clip0", class_id="organ", n_frames=4, size=12):
    frame_refs = []
    mask_refs = []
    for t in range(n_frames):
        name = f"{clip_id}_f{t}.png"
        frame_path = os.path.join(root, dataset, "images", name)
        mask_path = os.path.join(root, dataset, class_id, name)
        write_png(frame_path, np.full((size, size), 90))
        bits = np.zeros((size, size), dtype=np.uint8)
        bits[2:8, 2 + t : 8 + t] = 255
        write_png(mask_path, bits)
        frame_refs.append(frame_path)
        mask_refs.append(mask_path)
    return ClipRecord(
        clip_id=clip_id, class_id=class_id, frame_refs=tuple(frame_refs), mask_refs=tuple(mask_refs)
    )


@pytest.fixture(scope="module")
def oracle_env(tmp_path_factory):
    root = str(tmp_path_factory.mktemp("oracle_gt"))
    manifest_path = build_gt_dataset(root)
    clip = write_clip_gt(root)
    server = make_server(AdapterConfig(backend="oracle", gt_dir=root), port=0)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    url = f"http://127.0.0.1:{server.server_port}"
    yield {"root": root, "manifest": manifest_path, "clip": clip, "url": url}
    server.shutdown()
    thread.join(timeout=5)
    server.server_close()


class TestConformance:
    def test_fixture_suite_passes(self, oracle_env):
        results = run_conformance(oracle_env["url"], oracle_env["root"])
        failed = [r for r in results if not r.passed]
        assert not failed, f"conformance failures: {[(r.name, r.detail) for r in failed]}"
        assert {r.name for r in results} == {
            "valid_request_roundtrip",
            "oracle_returns_gt",
            "out_of_bounds_prompt_rejected",
            "malformed_request_rejected",
        }


class TestPredictEndpoint:
    def test_unknown_endpoint_404(self, oracle_env):
        resp = requests.post(oracle_env["url"] + "/v1/segment", json={}, timeout=5)
        assert resp.status_code == 404
        assert resp.json()["error"]["code"] == "not_found"

    def test_image_not_found(self, oracle_env):
        body = {
            "request_id": "r1",
            "image": {"path": "/nonexistent/img.png"},
            "prompts": {"points": [{"x": 1, "y": 1, "label": 1}]},
        }
        resp = requests.post(oracle_env["url"] + "/v1/predict", json=body, timeout=5)
        assert resp.status_code == 400
        assert resp.json()["error"]["code"] == "bad_image"

    def test_prompt_matching_no_class_is_500(self, oracle_env):
        image = os.path.join(oracle_env["root"], "oracle_ds", "images", "img000.png")
        body = {
            "request_id": "r1",
            "image": {"path": image},
            "prompts": {"points": [{"x": 0, "y": 0, "label": 1}]},  # background pixel
        }
        resp = requests.post(oracle_env["url"] + "/v1/predict", json=body, timeout=5)
        assert resp.status_code == 500
        assert resp.json()["error"]["code"] == "oracle_no_match"

    def test_non_json_body_rejected(self, oracle_env):
        resp = requests.post(
            oracle_env["url"] + "/v1/predict", data=b"\x00binary", timeout=5
        )
        assert resp.status_code == 400
        assert resp.json()["error"]["code"] == "bad_request"


class TestEndToEnd:
    def test_http_oracle_matches_in_process_oracle(self, oracle_env):
        manifest = load_manifest(oracle_env["manifest"])
        config = RunConfig(
            manifest=oracle_env["manifest"], prompt_counts=(1, 2, 4, 6, 8, 10), workers=2
        )
        over_http = run_eval(config, HttpPredictor(oracle_env["url"]), manifest)
        in_process = run_eval(config, OraclePredictor(), manifest)
        for k in (1, 2, 4, 6, 8, 10):
            assert over_http.aggregates[str(k)].wmdc == 1.0
        assert over_http.to_json(include_provenance=False) == in_process.to_json(
            include_provenance=False
        )

    def test_track_endpoint_scores_perfectly(self, oracle_env):
        clip = oracle_env["clip"]
        score = run_clip(
            clip, prompt_count=2, run_seed=0, tracker=HttpTracker(oracle_env["url"])
        )
        assert score.frame_dice == (1.0,) * 4


class TestBackends:
    def test_config_validation(self, tmp_path):
        with pytest.raises(BackendError):
            AdapterConfig(backend="magic")
        with pytest.raises(BackendError, match="checkpoint"):
            AdapterConfig(backend="sam2-image")
        with pytest.raises(BackendError, match="gt_dir"):
            AdapterConfig(backend="oracle")
        with pytest.raises(BackendError, match="stub_dir"):
            AdapterConfig(backend="stub")
        with pytest.raises(BackendError, match="multimask"):
            AdapterConfig(backend="oracle", gt_dir=str(tmp_path), multimask_selection="union")

    def test_sam2_backend_needs_real_checkpoint(self, tmp_path):
        config = AdapterConfig(backend="sam2-image", checkpoint=str(tmp_path / "missing.pt"))
        with pytest.raises(BackendError, match="checkpoint not found"):
            build_backend(config)

    def test_oracle_rejects_paths_outside_root(self, tmp_path):
        backend = OracleBackend(str(tmp_path))
        with pytest.raises(BackendError, match="not under"):
            backend.predict("/etc/hostname", [(0, 0)])

    def test_oracle_class_inference(self, tmp_path):
        build_gt_dataset(str(tmp_path), dataset="d")
        backend = OracleBackend(str(tmp_path))
        image = os.path.join(str(tmp_path), "d", "images", "img000.png")
        mask, score = backend.predict(image, [(3, 3)])  # inside classA's block
        expected = read_mask(os.path.join(str(tmp_path), "d", "classA", "img000.png"))
        assert mask == expected
        assert score == 1.0

    def test_stub_backend(self, tmp_path):
        bits = np.zeros((8, 8), dtype=np.uint8)
        bits[1:4, 1:4] = 255
        write_png(str(tmp_path / "preds" / "frame1.png"), bits)
        backend = StubBackend(str(tmp_path / "preds"))
        mask, _ = backend.predict("/anywhere/frame1.png", [(1, 1)])
        assert mask.area == 9
        with pytest.raises(BackendError) as exc:
            backend.predict("/anywhere/frame9.png", [(1, 1)])
        assert exc.value.code == "missing_prediction"


class TestStubServer:
    def test_stub_over_http(self, tmp_path):
        bits = np.zeros((8, 8), dtype=np.uint8)
        bits[2:5, 2:5] = 255
        write_png(str(tmp_path / "preds" / "img.png"), bits)
        write_png(str(tmp_path / "img.png"), np.zeros((8, 8), dtype=np.uint8))
        server = make_server(
            AdapterConfig(backend="stub", stub_dir=str(tmp_path / "preds")), port=0
        )
        thread = threading.Thread(target=server.serve_forever, daemon=True)
        thread.start()
        try:
            url = f"http://127.0.0.1:{server.server_port}"
            body = {
                "request_id": "s1",
                "image": {"path": str(tmp_path / "img.png")},
                "prompts": {"points": [{"x": 3, "y": 3, "label": 1}]},
            }
            resp = requests.post(url + "/v1/predict", json=body, timeout=5)
            assert resp.status_code == 200
            payload = resp.json()
            assert payload["request_id"] == "s1"
            assert sum(payload["mask"]["counts"][1::2]) == 9

            missing = dict(body, image={"path": str(tmp_path / "img.png")}, request_id="s2")
            write_png(str(tmp_path / "other.png"), np.zeros((8, 8), dtype=np.uint8))
            missing["image"] = {"path": str(tmp_path / "other.png")}
            resp = requests.post(url + "/v1/predict", json=missing, timeout=5)
            assert resp.status_code == 500
            assert resp.json()["error"]["code"] == "missing_prediction"

            track = {
                "request_id": "t1",
                "frames": [str(tmp_path / "img.png")] * 2,
                "prompts": body["prompts"],
            }
            resp = requests.post(url + "/v1/track", json=track, timeout=5)
            assert resp.status_code == 400  # stub backend has no tracking support
        finally:
            server.shutdown()
            thread.join(timeout=5)
            server.server_close()
