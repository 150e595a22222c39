"""HTTP server speaking the predictor wire protocol.

Requests are validated against the JSON schema shipped with the harness
before they reach a backend; contract violations come back as 400 with an
error body, backend faults as 500. Requests are handled sequentially, one
model instance per process.
"""

from __future__ import annotations

import base64
import binascii
import json
import os
from http.server import BaseHTTPRequestHandler, HTTPServer

import jsonschema
from surgbench.conformance import validate_message
from surgbench.masks import encode_rle, image_size

from .backends import AdapterConfig, build_backend
from .errors import BackendError, RequestError


def _points_from_prompts(prompts_obj: dict) -> list[tuple[int, int]]:
    return [(p["x"], p["y"]) for p in prompts_obj["points"]]


def _check_bounds(points, height: int, width: int):
    for x, y in points:
        if x >= width or y >= height:
            raise RequestError(
                "bad_prompt", f"prompt ({x}, {y}) outside {width}x{height} image"
            )


def _image_from_request(image_obj: dict):
    """Returns (path or None, (height, width))."""
    if "path" in image_obj:
        path = image_obj["path"]
        if not os.path.exists(path):
            raise RequestError("bad_image", f"image not found: {path}")
        with open(path, "rb") as f:
            data = f.read()
        return path, image_size(data)
    try:
        data = base64.b64decode(image_obj["png_base64"], validate=True)
    except (binascii.Error, ValueError) as exc:
        raise RequestError("bad_image", f"undecodable base64 image: {exc}") from exc
    return None, image_size(data)


class ProtocolHandler(BaseHTTPRequestHandler):
    def _reply(self, status: int, payload: dict):
        data = json.dumps(payload).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def _error(self, status: int, code: str, message: str, request_id=None):
        body = {"error": {"code": code, "message": message}}
        if isinstance(request_id, str):
            body["request_id"] = request_id
        self._reply(status, body)

    def _parse_body(self, definition: str) -> dict:
        length = int(self.headers.get("Content-Length", 0))
        raw = self.rfile.read(length)
        try:
            body = json.loads(raw)
        except (json.JSONDecodeError, UnicodeDecodeError) as exc:
            raise RequestError("bad_request", f"request body is not JSON: {exc}") from exc
        try:
            validate_message(body, definition)
        except jsonschema.ValidationError as exc:
            raise RequestError("bad_request", f"schema violation: {exc.message}") from exc
        return body

    def do_POST(self):  # noqa: N802 (fixed by http.server)
        request_id = None
        try:
            if self.path == "/v1/predict":
                body = self._parse_body("predict_request")
                request_id = body["request_id"]
                self._predict(body)
            elif self.path == "/v1/track":
                body = self._parse_body("track_request")
                request_id = body["request_id"]
                self._track(body)
            else:
                self._error(404, "not_found", f"unknown endpoint {self.path}")
        except RequestError as exc:
            self._error(400, exc.code, exc.message, request_id)
        except BackendError as exc:
            status = 400 if exc.code == "bad_prompt" else 500
            self._error(status, exc.code, exc.message, request_id)
        except Exception as exc:  # pragma: no cover - last-resort guard
            self._error(500, "internal", f"{type(exc).__name__}: {exc}", request_id)

    def _predict(self, body: dict):
        points = _points_from_prompts(body["prompts"])
        path, (height, width) = _image_from_request(body["image"])
        _check_bounds(points, height, width)
        mask, score = self.server.backend.predict(path, points)
        self._reply(
            200,
            {
                "request_id": body["request_id"],
                "mask": encode_rle(mask).to_json_obj(),
                "score": score,
            },
        )

    def _track(self, body: dict):
        backend = self.server.backend
        if not getattr(backend, "supports_tracking", False):
            raise RequestError("bad_request", "this backend does not support /v1/track")
        points = _points_from_prompts(body["prompts"])
        frames = body["frames"]
        for frame in frames:
            if not os.path.exists(frame):
                raise RequestError("bad_image", f"frame not found: {frame}")
        with open(frames[0], "rb") as f:
            height, width = image_size(f.read())
        _check_bounds(points, height, width)
        masks = backend.track(frames, points)
        self._reply(
            200,
            {
                "request_id": body["request_id"],
                "masks": [encode_rle(m).to_json_obj() for m in masks],
            },
        )

    def log_message(self, *args):
        pass


def make_server(config: AdapterConfig, host: str = "127.0.0.1", port: int = 8731) -> HTTPServer:
    """Build the (sequential) protocol server; caller runs serve_forever()."""
    server = HTTPServer((host, port), ProtocolHandler)
    server.backend = build_backend(config)
    return server


def serve(config: AdapterConfig, host: str = "127.0.0.1", port: int = 8731):
    server = make_server(config, host=host, port=port)
    print(f"serving {config.backend} backend on http://{host}:{server.server_port}")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
