"""Read-only HTTP serving API over a loaded checkpoint.

Endpoints (JSON request/response bodies, images as base64 PNG):
  GET  /model/info   -> config summary, step, attribute grouping metadata
  POST /encode       {"image": b64} -> {"z": [...], "c_hat": [...]}
  POST /generate     {"c": [...], "seed"?} -> {"image": b64}
  POST /edit         {"image": b64, "set": {...}, "base_attributes"?}
                     -> {"image": b64, "c_effective": [...]}

Responses carry {"status": "ok"|"error"}; errors never leak internals.
"""

from __future__ import annotations

import base64
import binascii
import json
import secrets
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import numpy as np

from .data import encode_png
from .inference import (ModelBundle, apply_attribute_set, decode_image_payload,
                        edit_image, encode_image, generate_image, load_model)

MAX_BODY_BYTES = 4 * 1024 * 1024


class RequestError(ValueError):
    """Client-side problem; maps to HTTP 400."""


def model_info_payload(mb: ModelBundle) -> dict:
    cfg = mb.config
    groups = []
    start = 0
    for name, size in cfg.attr_groups:
        groups.append({"name": name, "start": start, "size": size})
        start += size
    return {
        "status": "ok",
        "model_info": {
            "image_size": cfg.image_size,
            "channels": cfg.channels,
            "z_dim": cfg.z_dim,
            "c_dim": cfg.c_dim,
            "step": mb.step,
            "groups": groups,
            "free_attributes": list(range(start, cfg.c_dim)),
        },
    }


def _b64_image(body: dict, cfg) -> np.ndarray:
    if "image" not in body:
        raise RequestError("missing field 'image'")
    try:
        raw = base64.b64decode(body["image"], validate=True)
    except (binascii.Error, TypeError, ValueError):
        raise RequestError("field 'image' is not valid base64") from None
    try:
        return decode_image_payload(raw, cfg)
    except ValueError as e:
        raise RequestError(str(e)) from None


def _attr_vector(body: dict, cfg) -> np.ndarray:
    c = body.get("c")
    if not isinstance(c, list) or len(c) != cfg.c_dim:
        raise RequestError(f"field 'c' must be a list of {cfg.c_dim} numbers")
    try:
        arr = np.asarray([float(v) for v in c], dtype=np.float32)
    except (TypeError, ValueError):
        raise RequestError("field 'c' must contain numbers") from None
    if np.any(arr < 0) or np.any(arr > 1):
        raise RequestError("attribute values must lie in [0, 1]")
    return arr


def handle_encode(mb: ModelBundle, body: dict) -> dict:
    image = _b64_image(body, mb.config)
    z, c_hat = encode_image(mb, image)
    return {"status": "ok", "z": [float(v) for v in z],
            "c_hat": [float(v) for v in c_hat]}


def handle_generate(mb: ModelBundle, body: dict) -> dict:
    c = _attr_vector(body, mb.config)
    seed = body.get("seed")
    if seed is None:
        seed = secrets.randbits(63)
    if not isinstance(seed, int):
        raise RequestError("field 'seed' must be an integer")
    z = np.random.default_rng(seed).standard_normal(mb.config.z_dim).astype(np.float32)
    img = generate_image(mb, c, z)
    return {"status": "ok",
            "image": base64.b64encode(encode_png(img)).decode("ascii")}


def handle_edit(mb: ModelBundle, body: dict) -> dict:
    image = _b64_image(body, mb.config)
    set_spec = body.get("set")
    if not isinstance(set_spec, dict):
        raise RequestError("field 'set' must be an object of attribute assignments")
    base = body.get("base_attributes")
    base_arr = None
    if base is not None:
        if not isinstance(base, list) or len(base) != mb.config.c_dim:
            raise RequestError(f"'base_attributes' must be a list of "
                               f"{mb.config.c_dim} numbers")
        base_arr = np.asarray(base, dtype=np.float32)
    seed = body.get("seed")
    if seed is not None and not isinstance(seed, int):
        raise RequestError("field 'seed' must be an integer")
    try:
        _, edited, _, c_eff = edit_image(mb, image, set_spec,
                                         base_attributes=base_arr, seed=seed)
    except ValueError as e:
        raise RequestError(str(e)) from None
    return {"status": "ok",
            "image": base64.b64encode(encode_png(edited)).decode("ascii"),
            "c_effective": [float(v) for v in c_eff]}


class ApiHandler(BaseHTTPRequestHandler):
    server_version = "vigan"
    protocol_version = "HTTP/1.1"

    def log_message(self, fmt, *args):  # quiet by default
        if getattr(self.server, "verbose", False):
            super().log_message(fmt, *args)

    def _reply(self, code: int, payload: dict) -> None:
        raw = json.dumps(payload).encode()
        self.send_response(code)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(raw)))
        self.end_headers()
        self.wfile.write(raw)

    def _error(self, code: int, message: str) -> None:
        self._reply(code, {"status": "error", "message": message})

    def do_GET(self):
        if self.path != "/model/info":
            self._error(404, f"unknown endpoint {self.path}")
            return
        self._reply(200, model_info_payload(self.server.bundle))

    def do_POST(self):
        routes = {"/encode": handle_encode, "/generate": handle_generate,
                  "/edit": handle_edit}
        handler = routes.get(self.path)
        if handler is None:
            self._error(404, f"unknown endpoint {self.path}")
            return
        length = int(self.headers.get("Content-Length") or 0)
        if length > MAX_BODY_BYTES:
            self._error(413, "request body too large")
            return
        try:
            body = json.loads(self.rfile.read(length) or b"{}")
            if not isinstance(body, dict):
                raise RequestError("request body must be a JSON object")
        except json.JSONDecodeError:
            self._error(400, "request body is not valid JSON")
            return
        except RequestError as e:
            self._error(400, str(e))
            return
        try:
            self._reply(200, handler(self.server.bundle, body))
        except RequestError as e:
            self._error(400, str(e))
        except Exception:
            self._error(500, "internal error")


class ApiServer(ThreadingHTTPServer):
    daemon_threads = True

    def __init__(self, bundle: ModelBundle, host: str = "127.0.0.1", port: int = 0,
                 verbose: bool = False):
        super().__init__((host, port), ApiHandler)
        self.bundle = bundle
        self.verbose = verbose


def serve(ckpt_path, host: str = "127.0.0.1", port: int = 8000,
          verbose: bool = True) -> None:
    bundle = load_model(ckpt_path)
    server = ApiServer(bundle, host=host, port=port, verbose=verbose)
    print(f"serving checkpoint step {bundle.step} on http://{host}:{server.server_address[1]}")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()


def start_background(bundle: ModelBundle, port: int = 0) -> tuple[ApiServer, threading.Thread]:
    """In-process server for tests; returns (server, thread)."""
    server = ApiServer(bundle, port=port)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    return server, thread
