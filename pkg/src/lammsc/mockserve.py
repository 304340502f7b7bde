"""In-process mock endpoints implementing the wire contracts.

Routes (all POST, JSON bodies, version header ``lam-msc/1``):

  /transform    {source_modality, target_modality, data: base64}
                -> {target_modality, data: base64}
                Runs the deterministic scene codec, so remote-mode pipeline
                runs match mock-mode runs byte for byte.
  /personalize  {prompt} -> {text}
                Echo contract: returns the user text embedded in the prompt.
  /embed        {text} -> {vector}
                The built-in hashed-trigram embedder.

Failures answer {error, message} with a 4xx status.
"""

from __future__ import annotations

import base64
import binascii
import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from . import mma, semeval
from .wire import PROTOCOL_VERSION, VERSION_HEADER

_PROMPT_MARKER = "\nText:\n"


class _BadRequest(Exception):
    pass


def _handle_transform(body: dict) -> dict:
    try:
        source = body["source_modality"]
        target = body["target_modality"]
        raw = base64.b64decode(body["data"], validate=True)
    except (KeyError, TypeError, binascii.Error) as exc:
        raise _BadRequest(f"malformed transform request: {exc}") from exc
    if target == "text":
        if source not in mma.MODALITIES:
            raise _BadRequest(f"cannot transform {source!r} to text")
        try:
            scene = mma.scene_from_json(raw.decode("utf-8"))
        except (ValueError, UnicodeDecodeError) as exc:
            raise _BadRequest(f"payload is not a scene record: {exc}") from exc
        out = mma.scene_to_text(scene).encode("utf-8")
    elif source == "text" and target in mma.MODALITIES:
        try:
            scene = mma.text_to_scene(raw.decode("utf-8"), modality=target)
        except (ValueError, UnicodeDecodeError) as exc:
            raise _BadRequest(f"caption does not parse: {exc}") from exc
        out = mma.scene_to_json(scene).encode("utf-8")
    else:
        raise _BadRequest(f"unsupported transform {source!r} -> {target!r}")
    return {"target_modality": target,
            "data": base64.b64encode(out).decode("ascii")}


def _handle_personalize(body: dict) -> dict:
    prompt = body.get("prompt")
    if not isinstance(prompt, str):
        raise _BadRequest("request needs a string 'prompt' field")
    cut = prompt.rfind(_PROMPT_MARKER)
    if cut < 0:
        raise _BadRequest("prompt carries no text section")
    return {"text": prompt[cut + len(_PROMPT_MARKER):]}


def _handle_embed(body: dict) -> dict:
    text = body.get("text")
    if not isinstance(text, str):
        raise _BadRequest("request needs a string 'text' field")
    return {"vector": semeval.embed(text).values.tolist()}


_ROUTES = {"/transform": _handle_transform,
           "/personalize": _handle_personalize,
           "/embed": _handle_embed}


class _Handler(BaseHTTPRequestHandler):
    def log_message(self, *args):  # keep test output quiet
        pass

    def _send(self, status: int, payload: dict):
        blob = json.dumps(payload).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(blob)))
        self.send_header(VERSION_HEADER, PROTOCOL_VERSION)
        self.end_headers()
        self.wfile.write(blob)

    def do_POST(self):
        version = self.headers.get(VERSION_HEADER)
        if version is not None and version != PROTOCOL_VERSION:
            self._send(400, {"error": "protocol",
                             "message": f"unsupported protocol version {version!r}"})
            return
        handler = _ROUTES.get(self.path)
        if handler is None:
            self._send(404, {"error": "protocol",
                             "message": f"unknown route {self.path}"})
            return
        try:
            length = int(self.headers.get("Content-Length", 0))
            body = json.loads(self.rfile.read(length).decode("utf-8"))
            if not isinstance(body, dict):
                raise _BadRequest("request body must be a JSON object")
            self._send(200, handler(body))
        except _BadRequest as exc:
            self._send(400, {"error": "request", "message": str(exc)})
        except (ValueError, UnicodeDecodeError) as exc:
            self._send(400, {"error": "request", "message": f"bad request: {exc}"})
        except Exception as exc:  # pragma: no cover - defensive
            self._send(500, {"error": "internal", "message": str(exc)})


class MockServer:
    """Threaded HTTP server for wire-contract tests and `mock-serve`."""

    def __init__(self, host: str = "127.0.0.1", port: int = 0):
        self._server = ThreadingHTTPServer((host, port), _Handler)
        self._thread: threading.Thread | None = None

    @property
    def url(self) -> str:
        host, port = self._server.server_address[:2]
        return f"http://{host}:{port}"

    def start(self) -> "MockServer":
        self._thread = threading.Thread(target=self._server.serve_forever,
                                        daemon=True)
        self._thread.start()
        return self

    def stop(self):
        self._server.shutdown()
        self._server.server_close()
        if self._thread:
            self._thread.join(timeout=5)

    def serve_forever(self):
        self._server.serve_forever()

    def __enter__(self):
        return self.start()

    def __exit__(self, *exc):
        self.stop()
