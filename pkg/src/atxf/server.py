"""HTTP inference service.

GET /health, GET /models, POST /chat {domain, session, message} ->
{reply, wait_seconds, top_tokens}. Models are loaded read-only at
startup; sessions mutate under a lock. Optionally serves the browser
console as static files.
"""

from __future__ import annotations

import json
import mimetypes
import os
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

from .chat import ChatSession, DomainModel, PacingConfig, decode_with_details, tts_wait_seconds
from .checkpoint import load_checkpoint
from .corpus import default_cleaning_config
from .errors import ChatLookupError, ConfigError, InputError
from .vocab import Vocabulary

VOCAB_FILENAME = "vocab.txt"


class ModelStore:
    """All domain models under one directory, bound to its vocabulary."""

    def __init__(self, model_dir, pacing: PacingConfig | None = None):
        model_dir = Path(model_dir)
        vocab_path = model_dir / VOCAB_FILENAME
        if not vocab_path.exists():
            raise ConfigError(f"no {VOCAB_FILENAME} in {model_dir}")
        self.vocab = Vocabulary.load(vocab_path)
        self.models: dict[str, DomainModel] = {}
        for path in sorted(model_dir.glob("*.atxf")):
            ckpt = load_checkpoint(path)
            dm = DomainModel(ckpt, self.vocab)
            self.models[dm.domain] = dm
        if not self.models:
            raise ConfigError(f"no .atxf checkpoints in {model_dir}")
        self.pacing = pacing or PacingConfig()
        self.cleaning = default_cleaning_config()
        self._sessions: dict[tuple[str, str], ChatSession] = {}
        self._lock = threading.Lock()

    def domains(self) -> list[str]:
        return sorted(self.models)

    def chat(self, domain: str, session_id: str, message: str) -> dict:
        dm = self.models.get(domain)
        if dm is None:
            raise ChatLookupError(f"unknown domain '{domain}'")
        reply, top_tokens = decode_with_details(dm, message, cleaning=self.cleaning)
        with self._lock:
            session = self._sessions.setdefault(
                (domain, session_id), ChatSession(session_id, domain))
            session.append(message, reply)
        return {
            "reply": reply,
            "wait_seconds": tts_wait_seconds(reply, self.pacing),
            "top_tokens": top_tokens,
        }


def _json_bytes(payload: dict) -> bytes:
    return json.dumps(payload).encode("utf-8")


class ChatRequestHandler(BaseHTTPRequestHandler):
    store: ModelStore = None
    static_dir: Path | None = None

    # silence per-request logging; tests and the CLI watch stdout
    def log_message(self, fmt, *args):
        pass

    def _send(self, status: int, body: bytes, content_type="application/json"):
        self.send_response(status)
        self.send_header("Content-Type", content_type)
        self.send_header("Content-Length", str(len(body)))
        self.send_header("Access-Control-Allow-Origin", "*")
        self.send_header("Access-Control-Allow-Headers", "Content-Type")
        self.send_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS")
        self.end_headers()
        self.wfile.write(body)

    def _send_error_payload(self, status: int, code: str, message: str):
        self._send(status, _json_bytes({"error": {"code": code, "message": message}}))

    def do_OPTIONS(self):
        self._send(204, b"")

    def do_GET(self):
        path = self.path.split("?", 1)[0]
        if path == "/health":
            self._send(200, _json_bytes({"status": "ok"}))
        elif path == "/models":
            self._send(200, _json_bytes({"models": self.store.domains()}))
        elif self.static_dir is not None:
            self._serve_static(path)
        else:
            self._send_error_payload(404, "not_found", f"no route for {path}")

    def _serve_static(self, path: str):
        rel = path.lstrip("/") or "index.html"
        target = (self.static_dir / rel).resolve()
        if not str(target).startswith(str(self.static_dir.resolve())) or not target.is_file():
            self._send_error_payload(404, "not_found", f"no route for {path}")
            return
        ctype = mimetypes.guess_type(str(target))[0] or "application/octet-stream"
        self._send(200, target.read_bytes(), content_type=ctype)

    def do_POST(self):
        if self.path.split("?", 1)[0] != "/chat":
            self._send_error_payload(404, "not_found", f"no route for {self.path}")
            return
        try:
            length = int(self.headers.get("Content-Length", "0"))
            payload = json.loads(self.rfile.read(length).decode("utf-8"))
            if not isinstance(payload, dict):
                raise ValueError("payload must be a JSON object")
        except (ValueError, UnicodeDecodeError) as exc:
            self._send_error_payload(400, "bad_request", f"malformed JSON: {exc}")
            return
        missing = [k for k in ("domain", "session", "message") if k not in payload]
        if missing:
            self._send_error_payload(400, "bad_request", f"missing fields: {missing}")
            return
        try:
            result = self.store.chat(str(payload["domain"]), str(payload["session"]),
                                     str(payload["message"]))
        except ChatLookupError as exc:
            self._send_error_payload(404, "unknown_domain", str(exc))
            return
        except InputError as exc:
            self._send_error_payload(400, "empty_input", str(exc))
            return
        self._send(200, _json_bytes(result))


def serve_http(model_dir, address: str = "127.0.0.1:8080",
               static_dir=None, store: ModelStore | None = None) -> ThreadingHTTPServer:
    """Bind the service and return the server (caller runs serve_forever)."""
    host, _, port = address.partition(":")
    if store is None:
        store = ModelStore(model_dir)
    handler = type("BoundHandler", (ChatRequestHandler,), {
        "store": store,
        "static_dir": Path(static_dir) if static_dir else None,
    })
    return ThreadingHTTPServer((host, int(port or 0)), handler)


def serve_forever_in_thread(server: ThreadingHTTPServer) -> threading.Thread:
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    return thread
