"""Local HTTP service driving the dashboard UI.

Single-session JSON API:

    POST /script   {"text": ...}          -> diagnostics, diff, run report
    GET  /outputs                          -> per-statement artifacts
    GET  /table/<name>?offset=&limit=      -> one page of rows
    POST /input    {"name", "value"}       -> re-run report
    POST /expand   {"statement": i}        -> verbose VISUALIZE text + span
    POST /fixture  {"name", "content_b64"} -> store an uploaded file
    GET  /events                           -> server-sent task status events

Mutations are serialized by the session lock (concurrent ones queue);
reads run against the latest completed generation. Static files for the
web UI are served from an optional frontend directory.
"""

from __future__ import annotations

import base64
import json
import mimetypes
import os
import queue
import re
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Optional

from .engine import EngineError, Session
from .executor import ExecError
from .relation import CatalogError


class EventBroker:
    """Fan-out of task status changes to any number of SSE listeners."""

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self._queues: list[queue.Queue] = []
        self._seq = 0

    def subscribe(self) -> queue.Queue:
        q: queue.Queue = queue.Queue()
        with self._lock:
            self._queues.append(q)
        return q

    def unsubscribe(self, q: queue.Queue) -> None:
        with self._lock:
            if q in self._queues:
                self._queues.remove(q)

    def publish(self, payload: dict) -> None:
        with self._lock:
            self._seq += 1
            payload = dict(payload, seq=self._seq)
            for q in self._queues:
                q.put(payload)


class DashqlService:
    def __init__(self, session: Session, frontend_dir: Optional[str] = None):
        self.session = session
        self.frontend_dir = frontend_dir
        self.broker = EventBroker()
        session.add_listener(self._on_task_event)

    def _on_task_event(self, task, status) -> None:
        self.broker.publish(
            {
                "task": task.id,
                "kind": task.kind.name,
                "statement": task.origin_statement,
                "status": status.name,
                "artifact": task.artifact.name if task.artifact else None,
                "error": task.error,
            }
        )


class _Handler(BaseHTTPRequestHandler):
    service: DashqlService

    protocol_version = "HTTP/1.1"

    def log_message(self, *args) -> None:
        pass

    # -- helpers ------------------------------------------------------------

    def _json_body(self) -> dict:
        length = int(self.headers.get("Content-Length") or 0)
        raw = self.rfile.read(length) if length else b"{}"
        try:
            doc = json.loads(raw.decode("utf-8"))
        except ValueError as err:
            raise ValueError(f"malformed JSON body: {err}") from err
        if not isinstance(doc, dict):
            raise ValueError("body must be a JSON object")
        return doc

    def _send_json(self, payload: object, status: int = 200) -> None:
        body = json.dumps(payload, default=str).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.send_header("Access-Control-Allow-Origin", "*")
        self.end_headers()
        self.wfile.write(body)

    def _send_error_json(self, status: int, message: str) -> None:
        self._send_json({"error": message}, status=status)

    # -- routes -------------------------------------------------------------

    def do_POST(self) -> None:
        try:
            if self.path == "/script":
                body = self._json_body()
                text = body.get("text")
                if not isinstance(text, str):
                    return self._send_error_json(400, "missing 'text'")
                result = self.service.session.load_script(text)
                return self._send_json(result.to_json())
            if self.path == "/input":
                body = self._json_body()
                name = body.get("name")
                if not isinstance(name, str):
                    return self._send_error_json(400, "missing 'name'")
                result = self.service.session.set_input(name, body.get("value"))
                return self._send_json(result.to_json())
            if self.path == "/expand":
                body = self._json_body()
                statement = body.get("statement")
                if not isinstance(statement, int):
                    return self._send_error_json(400, "missing 'statement'")
                return self._send_json(self.service.session.expand_statement(statement))
            if self.path == "/fixture":
                body = self._json_body()
                name, content = body.get("name"), body.get("content_b64")
                if not isinstance(name, str) or not isinstance(content, str):
                    return self._send_error_json(400, "missing 'name'/'content_b64'")
                target_dir = self.service.session.fixtures_dir
                if target_dir is None:
                    return self._send_error_json(400, "service has no fixtures directory")
                safe = os.path.normpath(os.path.join(target_dir, name))
                if not safe.startswith(os.path.normpath(target_dir)):
                    return self._send_error_json(400, "bad fixture name")
                with open(safe, "wb") as fh:
                    fh.write(base64.b64decode(content))
                return self._send_json({"stored": name, "uri": f"test://{name}"})
            self._send_error_json(404, f"no such endpoint {self.path}")
        except (EngineError, ValueError) as err:
            self._send_error_json(400, str(err))
        except BrokenPipeError:
            pass
        except Exception as err:
            self._send_error_json(500, str(err))

    def do_GET(self) -> None:
        try:
            if self.path == "/outputs":
                return self._send_json({"outputs": self.service.session.outputs()})
            match = re.match(r"^/table/([A-Za-z_][\w.]*)(?:\?(.*))?$", self.path)
            if match:
                name = match.group(1)
                params = dict(
                    pair.split("=", 1) for pair in (match.group(2) or "").split("&") if "=" in pair
                )
                offset = int(params.get("offset", 0))
                limit = int(params.get("limit", 50))
                readahead = int(params.get("readahead", 0))
                try:
                    page = self.service.session.table_page(name, offset, limit, readahead)
                except (ExecError, CatalogError, KeyError) as err:
                    return self._send_error_json(404, str(err))
                return self._send_json(page)
            if self.path == "/events":
                return self._serve_events()
            return self._serve_static()
        except BrokenPipeError:
            pass
        except Exception as err:
            self._send_error_json(500, str(err))

    def _serve_events(self) -> None:
        q = self.service.broker.subscribe()
        try:
            self.send_response(200)
            self.send_header("Content-Type", "text/event-stream")
            self.send_header("Cache-Control", "no-cache")
            self.send_header("Access-Control-Allow-Origin", "*")
            self.end_headers()
            self.wfile.write(b"event: hello\ndata: {}\n\n")
            self.wfile.flush()
            while True:
                try:
                    payload = q.get(timeout=15.0)
                except queue.Empty:
                    self.wfile.write(b": keepalive\n\n")
                    self.wfile.flush()
                    continue
                data = json.dumps(payload, default=str)
                self.wfile.write(f"event: task\ndata: {data}\n\n".encode("utf-8"))
                self.wfile.flush()
        except (BrokenPipeError, ConnectionResetError):
            pass
        finally:
            self.service.broker.unsubscribe(q)

    def _serve_static(self) -> None:
        frontend = self.service.frontend_dir
        path = self.path.split("?", 1)[0]
        if frontend is None:
            return self._send_error_json(404, f"no such endpoint {path}")
        rel = "index.html" if path in ("/", "") else path.lstrip("/")
        full = os.path.normpath(os.path.join(frontend, rel))
        if not full.startswith(os.path.normpath(frontend)) or not os.path.isfile(full):
            return self._send_error_json(404, f"no such file {path}")
        ctype = mimetypes.guess_type(full)[0] or "application/octet-stream"
        with open(full, "rb") as fh:
            body = fh.read()
        self.send_response(200)
        self.send_header("Content-Type", ctype)
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)


def make_server(
    port: int = 0,
    fixtures_dir: Optional[str] = None,
    workers: int = 4,
    frontend_dir: Optional[str] = None,
    session: Optional[Session] = None,
) -> ThreadingHTTPServer:
    session = session or Session(fixtures_dir=fixtures_dir, workers=workers)
    service = DashqlService(session, frontend_dir=frontend_dir)
    handler = type("BoundHandler", (_Handler,), {"service": service})
    server = ThreadingHTTPServer(("127.0.0.1", port), handler)
    server.dashql_service = service  # type: ignore[attr-defined]
    return server


def serve(
    port: int,
    fixtures_dir: Optional[str],
    workers: int,
    frontend_dir: Optional[str] = None,
) -> None:
    server = make_server(port, fixtures_dir, workers, frontend_dir)
    actual = server.server_address[1]
    print(f"dashql service on http://127.0.0.1:{actual} (fixtures: {fixtures_dir})")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        server.shutdown()
