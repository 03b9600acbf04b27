"""HTTP/JSON annotation service: a live oracle console over the engine.

Endpoints:
    POST /api/session                 create a session from a config document
    GET  /api/session/{id}/batch      the outstanding query batch
    POST /api/session/{id}/labels     submit labels for the outstanding batch
    GET  /api/session/{id}/status     phase, pool sizes, accuracy history
    GET  /...                         static annotation console bundle

Training runs on a background worker per session; clients poll status while
the phase is "training".  Every completed round is checkpointed, so a server
restart re-serves the identical outstanding batch.
"""

import base64
import io
import json
import mimetypes
import os
import re
import threading
import uuid
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import numpy as np

from .config import ConfigError, build_dataset, config_from_dict
from .loop import ExperimentEngine

_SESSION_RE = re.compile(r"^/api/session/([0-9a-f]+)/(batch|labels|status)$")

_FALLBACK_PAGE = b"""<!doctype html>
<html><head><meta charset="utf-8"><title>annotation service</title></head>
<body><h1>Annotation service is running</h1>
<p>No console bundle is installed. Use the JSON API under /api/session,
or build the frontend and point --static-dir at its dist/ directory.</p>
</body></html>"""


class ApiError(Exception):
    def __init__(self, status: int, code: str, message: str, detail=None):
        super().__init__(message)
        self.status = status
        self.payload = {"code": code, "message": message, "detail": detail}


class Session:
    """One live annotation session; mutations serialize through self.lock."""

    def __init__(self, session_id: str, engine: ExperimentEngine,
                 checkpoint_path: str):
        self.id = session_id
        self.engine = engine
        self.checkpoint_path = checkpoint_path
        self.lock = threading.Lock()
        self.phase = "training"
        self.error = None
        self.snapshot = {"round": None, "n_labeled": 0, "n_unlabeled": 0,
                         "history": []}

    # -- lifecycle -------------------------------------------------------------

    def start(self):
        self._spawn(self.engine.initialize)

    def _spawn(self, work):
        def runner():
            try:
                work()
                with self.lock:
                    self.engine.checkpoint(self.checkpoint_path)
                    self._refresh_snapshot()
                    self.phase = ("awaiting-labels"
                                  if self.engine.pending is not None else "finished")
            except Exception as exc:  # surfaces via status
                with self.lock:
                    self.error = f"{type(exc).__name__}: {exc}"
                    self.phase = "failed"
        thread = threading.Thread(target=runner, daemon=True)
        thread.start()

    def _refresh_snapshot(self):
        engine = self.engine
        self.snapshot = {
            "round": engine.pools.round if engine.pools is not None else None,
            "n_labeled": int(engine.pools.labeled.size) if engine.pools is not None else 0,
            "n_unlabeled": int(engine.pools.unlabeled.size) if engine.pools is not None else 0,
            "history": [{"round": r["round"], "n_labeled": r["n_labeled"],
                         "accuracy": r["test_accuracy"]} for r in engine.metrics],
        }

    @classmethod
    def restore(cls, session_id: str, checkpoint_path: str) -> "Session":
        engine = ExperimentEngine.load(checkpoint_path)
        session = cls(session_id, engine, checkpoint_path)
        with session.lock:
            session._refresh_snapshot()
            session.phase = ("awaiting-labels"
                             if engine.pending is not None else "finished")
        return session

    # -- request handlers ------------------------------------------------------

    @property
    def batch_id(self) -> str:
        return f"round-{self.engine.pools.round:04d}"

    def batch_payload(self) -> dict:
        with self.lock:
            if self.phase == "training":
                raise ApiError(409, "training",
                               "training in progress; poll status and retry",
                               {"retry_after_seconds": 2})
            if self.phase == "finished":
                raise ApiError(410, "finished", "session has no more batches")
            if self.phase == "failed":
                raise ApiError(500, "failed", "session failed", self.error)
            pending = self.engine.pending
            items = []
            for pool_index, score in zip(pending.indices, pending.scores):
                items.append({
                    "index": int(pool_index),
                    "score": float(score),
                    "image": self._encode_image(int(pool_index)),
                })
            return {"batch_id": self.batch_id, "items": items,
                    "class_names": self.engine.dataset.class_names}

    def _encode_image(self, pool_index: int) -> str:
        from PIL import Image

        dataset = self.engine.dataset
        h, w = dataset.image_shape
        pixels = np.clip(dataset.x_train[pool_index].reshape(h, w) * 255.0,
                         0, 255).astype(np.uint8)
        img = Image.fromarray(pixels, mode="L")
        buf = io.BytesIO()
        img.save(buf, format="PNG")
        return base64.b64encode(buf.getvalue()).decode()

    def submit(self, body: dict) -> dict:
        with self.lock:
            if self.phase == "training":
                raise ApiError(409, "training", "no batch is awaiting labels")
            if self.phase == "finished":
                raise ApiError(410, "finished", "session already finished")
            if self.phase == "failed":
                raise ApiError(500, "failed", "session failed", self.error)
            if body.get("batch_id") != self.batch_id:
                raise ApiError(409, "stale_batch",
                               f"outstanding batch is {self.batch_id}",
                               {"submitted": body.get("batch_id")})
            labels = body.get("labels")
            if not isinstance(labels, list):
                raise ApiError(422, "invalid_labels", "labels must be a list")
            pending = self.engine.pending
            expected = {int(i) for i in pending.indices}
            provided = {}
            for item in labels:
                try:
                    provided[int(item["index"])] = int(item["label"])
                except (KeyError, TypeError, ValueError):
                    raise ApiError(422, "invalid_labels",
                                   "each entry needs integer index and label",
                                   {"entry": item}) from None
            missing = sorted(expected - set(provided))
            extra = sorted(set(provided) - expected)
            if missing or extra:
                raise ApiError(422, "incomplete_batch",
                               "submission must cover the batch exactly",
                               {"missing": missing, "unexpected": extra})
            n_classes = self.engine.dataset.n_classes
            bad = {i: lab for i, lab in provided.items()
                   if not (0 <= lab < n_classes)}
            if bad:
                raise ApiError(422, "label_out_of_range",
                               f"labels must lie in [0, {n_classes})",
                               {"offending": bad})
            ordered = np.array([provided[int(i)] for i in pending.indices])
            last_acc = (self.engine.metrics[-1]["test_accuracy"]
                        if self.engine.metrics else None)
            n_labeled = int(self.engine.pools.labeled.size + pending.indices.size)
            self.phase = "training"
            self._spawn(lambda: self.engine.submit_labels(ordered))
            return {"accepted": True, "n_labeled": n_labeled,
                    "test_accuracy": last_acc}

    def status(self) -> dict:
        snapshot = self.snapshot  # atomically swapped dict; lock-free read
        return {"session_id": self.id, "phase": self.phase,
                "strategy": self.engine.config.strategy,
                "error": self.error, **snapshot}


class AnnotationService:
    """Session registry plus the HTTP plumbing."""

    def __init__(self, checkpoint_dir: str, static_dir: str | None = None):
        self.checkpoint_dir = checkpoint_dir
        self.static_dir = static_dir
        self.sessions: dict[str, Session] = {}
        self._registry_lock = threading.Lock()
        os.makedirs(checkpoint_dir, exist_ok=True)

    def create_session(self, doc: dict) -> Session:
        try:
            config = config_from_dict(doc)
        except ConfigError as exc:
            raise ApiError(400, "invalid_config", "config rejected", str(exc))
        if config.oracle != "live":
            raise ApiError(400, "invalid_config", "config rejected",
                           "annotation sessions require oracle == 'live'")
        dataset = build_dataset(config.dataset)
        if dataset.image_shape is None:
            raise ApiError(400, "invalid_config", "config rejected",
                           "live sessions need image-shaped datasets")
        session_id = uuid.uuid4().hex[:12]
        engine = ExperimentEngine(dataset, config, seed=config.seeds[0])
        session = Session(session_id, engine,
                          os.path.join(self.checkpoint_dir, f"{session_id}.npz"))
        with self._registry_lock:
            self.sessions[session_id] = session
        session.start()
        return session

    def get_session(self, session_id: str) -> Session:
        with self._registry_lock:
            session = self.sessions.get(session_id)
            if session is None:
                path = os.path.join(self.checkpoint_dir, f"{session_id}.npz")
                if os.path.exists(path):
                    session = Session.restore(session_id, path)
                    self.sessions[session_id] = session
        if session is None:
            raise ApiError(404, "unknown_session", f"no session {session_id}")
        return session


def make_server(service: AnnotationService, host: str = "127.0.0.1",
                port: int = 0) -> ThreadingHTTPServer:
    """Build (but do not start) the HTTP server bound to the service."""

    class Handler(BaseHTTPRequestHandler):
        protocol_version = "HTTP/1.1"

        def log_message(self, fmt, *args):  # tests stay quiet
            pass

        def _send_json(self, status: int, payload: dict):
            body = json.dumps(payload).encode()
            self.send_response(status)
            self.send_header("Content-Type", "application/json; charset=utf-8")
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)

        def _read_json(self) -> dict:
            length = int(self.headers.get("Content-Length") or 0)
            raw = self.rfile.read(length)
            try:
                doc = json.loads(raw.decode("utf-8"))
            except (json.JSONDecodeError, UnicodeDecodeError) as exc:
                raise ApiError(400, "invalid_json", "body must be UTF-8 JSON",
                               str(exc)) from None
            if not isinstance(doc, dict):
                raise ApiError(400, "invalid_json", "body must be a JSON object")
            return doc

        def do_POST(self):
            try:
                if self.path == "/api/session":
                    session = service.create_session(self._read_json())
                    self._send_json(201, {"session_id": session.id})
                    return
                match = _SESSION_RE.match(self.path)
                if match and match.group(2) == "labels":
                    session = service.get_session(match.group(1))
                    self._send_json(200, session.submit(self._read_json()))
                    return
                raise ApiError(404, "not_found", f"no route {self.path}")
            except ApiError as exc:
                self._send_json(exc.status, exc.payload)

        def do_GET(self):
            try:
                match = _SESSION_RE.match(self.path)
                if match:
                    session = service.get_session(match.group(1))
                    if match.group(2) == "batch":
                        self._send_json(200, session.batch_payload())
                    elif match.group(2) == "status":
                        self._send_json(200, session.status())
                    else:
                        raise ApiError(405, "method_not_allowed",
                                       "labels accepts POST only")
                    return
                if self.path.startswith("/api/"):
                    raise ApiError(404, "not_found", f"no route {self.path}")
                self._serve_static()
            except ApiError as exc:
                self._send_json(exc.status, exc.payload)

        def _serve_static(self):
            rel = self.path.lstrip("/") or "index.html"
            rel = rel.split("?", 1)[0]
            if service.static_dir:
                root = os.path.realpath(service.static_dir)
                full = os.path.realpath(os.path.join(root, rel))
                if full.startswith(root + os.sep) or full == os.path.join(root, "index.html"):
                    if os.path.isfile(full):
                        ctype = mimetypes.guess_type(full)[0] or "application/octet-stream"
                        with open(full, "rb") as fh:
                            body = fh.read()
                        self.send_response(200)
                        self.send_header("Content-Type", ctype)
                        self.send_header("Content-Length", str(len(body)))
                        self.end_headers()
                        self.wfile.write(body)
                        return
            if rel == "index.html":
                self.send_response(200)
                self.send_header("Content-Type", "text/html; charset=utf-8")
                self.send_header("Content-Length", str(len(_FALLBACK_PAGE)))
                self.end_headers()
                self.wfile.write(_FALLBACK_PAGE)
                return
            self._send_json(404, {"code": "not_found",
                                  "message": f"no file {rel}", "detail": None})

    return ThreadingHTTPServer((host, port), Handler)


def serve(config_path=None, host: str = "127.0.0.1", port: int = 8000,
          checkpoint_dir: str = "checkpoints", static_dir: str | None = None):
    """Blocking entry point used by the CLI `serve` subcommand."""
    service = AnnotationService(checkpoint_dir=checkpoint_dir,
                                static_dir=static_dir)
    if config_path is not None:
        with open(config_path, encoding="utf-8") as fh:
            session = service.create_session(json.load(fh))
        print(f"session {session.id} created from {config_path}", flush=True)
    server = make_server(service, host=host, port=port)
    print(f"annotation service listening on http://{host}:{server.server_port}",
          flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        server.shutdown()
    return server
