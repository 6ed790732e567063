"""JSON-over-HTTP service exposing the engine verbs, with a background consolidation worker."""

from __future__ import annotations

import json
import logging
import threading
from http import HTTPStatus
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Any

from .engine import Engine
from .errors import EmptyMemoryError, OutOfOrderEventError, ProviderError, StoreError
from .ingest import Interaction

logger = logging.getLogger(__name__)

MAX_BODY = 8 * 1024 * 1024


class BadRequest(Exception):
    def __init__(self, message: str, field: str | None = None):
        super().__init__(message)
        self.field = field


def _require(body: dict[str, Any], name: str, kind: type | tuple[type, ...]) -> Any:
    if name not in body:
        raise BadRequest(f"missing field {name!r}", name)
    value = body[name]
    if not isinstance(value, kind) or isinstance(value, bool) and kind is not bool:
        raise BadRequest(f"field {name!r} has the wrong type", name)
    return value


def parse_interaction(body: dict[str, Any]) -> Interaction:
    text = _require(body, "text", str)
    if not text.strip():
        raise BadRequest("field 'text' is blank", "text")
    stamp = _require(body, "timestamp", (str, int, float))
    speaker = body.get("speaker", "")
    if not isinstance(speaker, str):
        raise BadRequest("field 'speaker' has the wrong type", "speaker")
    session = body.get("session")
    if session is not None and not isinstance(session, str):
        raise BadRequest("field 'session' has the wrong type", "session")
    try:
        return Interaction.create(speaker, text, stamp, session)
    except (ValueError, TypeError) as exc:
        raise BadRequest(f"field 'timestamp' is invalid: {exc}", "timestamp") from None


class MemoryService:
    """Owns the HTTP server and the consolidation worker thread."""

    def __init__(self, engine: Engine, host: str = "127.0.0.1", port: int = 0,
                 worker: bool = True, idle_wait: float = 0.1):
        self.engine = engine
        self._stop = threading.Event()
        self._worker: threading.Thread | None = None
        self._want_worker = worker and {"extractor", "reasoner"} <= set(engine.providers)
        self._idle_wait = idle_wait
        handler = type("Handler", (_Handler,), {"service": self})
        self.httpd = ThreadingHTTPServer((host, port), handler)
        self.httpd.daemon_threads = False
        self._thread: threading.Thread | None = None

    @property
    def url(self) -> str:
        host, port = self.httpd.server_address[:2]
        return f"http://{host}:{port}"

    def start(self) -> "MemoryService":
        if self._want_worker:
            self._worker = threading.Thread(target=self._work, name="consolidator", daemon=True)
            self._worker.start()
        self._thread = threading.Thread(target=self.httpd.serve_forever, args=(0.05,),
                                        name="http", daemon=True)
        self._thread.start()
        return self

    def _work(self) -> None:
        while not self._stop.is_set():
            try:
                self.engine.consolidator.run_worker(stop=self._stop.is_set,
                                                    idle_wait=self._idle_wait)
            except Exception:  # keep the worker alive; the item was released
                logger.exception("consolidation worker error")
                self._stop.wait(self._idle_wait)

    def stop(self) -> None:
        """Stop accepting requests, let in-flight ones finish, then persist."""
        self._stop.set()
        self.httpd.shutdown()
        self.httpd.server_close()
        if self._worker is not None:
            self._worker.join(timeout=10)
        self.engine.save()

    def __enter__(self) -> "MemoryService":
        return self.start()

    def __exit__(self, *exc: Any) -> None:
        self.stop()

    # -- verbs (status, payload) ----------------------------------------------

    def handle(self, method: str, path: str, body: Any) -> tuple[int, dict[str, Any]]:
        route = (method, path.rstrip("/") or "/")
        if route == ("GET", "/health"):
            return 200, self.engine.health()
        if route == ("GET", "/audit"):
            found = self.engine.audit()
            return 200, {"violations": found, "count": len(found)}
        if method != "POST" or path not in ("/ingest", "/query", "/consolidate"):
            return 404, {"error": f"no route for {method} {path}"}
        if not isinstance(body, dict):
            raise BadRequest("request body must be a JSON object")
        if path == "/ingest":
            items = body.get("turns")
            if items is None:
                turns = [parse_interaction(body)]
            elif isinstance(items, list) and all(isinstance(t, dict) for t in items):
                turns = [parse_interaction(t) for t in items]
            else:
                raise BadRequest("field 'turns' must be a list of objects", "turns")
            try:
                ids = self.engine.ingest(turns)
            except OutOfOrderEventError as exc:
                return 409, {"error": str(exc)}
            self.engine.save()
            return 200, {"ids": ids}
        if path == "/query":
            question = _require(body, "question", str)
            if not question.strip():
                raise BadRequest("field 'question' is blank", "question")
            now = body.get("now")
            want = body.get("answer", True)
            if not isinstance(want, bool):
                raise BadRequest("field 'answer' must be a boolean", "answer")
            try:
                outcome = self.engine.query(question, now, answer=want)
            except EmptyMemoryError as exc:
                return 404, {"error": str(exc)}
            except ValueError as exc:
                raise BadRequest(str(exc), "now") from None
            return (502 if outcome.error else 200), outcome.to_dict()
        # /consolidate
        max_items = body.get("max_items")
        if max_items is not None and (not isinstance(max_items, int) or isinstance(max_items, bool)
                                      or max_items < 0):
            raise BadRequest("field 'max_items' must be a non-negative integer", "max_items")
        result = self.engine.consolidate(max_items)
        self.engine.save()
        return 200, result


class _Handler(BaseHTTPRequestHandler):
    service: MemoryService
    protocol_version = "HTTP/1.1"

    def log_message(self, fmt: str, *args: Any) -> None:
        logger.debug("%s - " + fmt, self.address_string(), *args)

    def _reply(self, status: int, payload: dict[str, Any]) -> None:
        payload = {**payload, **self.service.engine.envelope()}
        data = json.dumps(payload, ensure_ascii=False, sort_keys=True).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json; charset=utf-8")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def _dispatch(self, method: str) -> None:
        body: Any = None
        try:
            if method == "POST":
                length = int(self.headers.get("Content-Length") or 0)
                if length > MAX_BODY:
                    raise BadRequest("request body too large")
                raw = self.rfile.read(length) if length else b""
                try:
                    body = json.loads(raw.decode("utf-8")) if raw else {}
                except (UnicodeDecodeError, json.JSONDecodeError) as exc:
                    raise BadRequest(f"malformed JSON: {exc}") from None
            status, payload = self.service.handle(method, self.path.split("?")[0], body)
        except BadRequest as exc:
            status, payload = 400, {"error": str(exc), "field": exc.field}
        except ProviderError as exc:
            status, payload = 502, {"error": str(exc)}
        except StoreError as exc:
            status, payload = 409, {"error": str(exc)}
        except Exception as exc:  # never drop the connection without a reply
            logger.exception("request failed")
            status, payload = 500, {"error": f"internal error: {exc}"}
        self._reply(status, payload)

    def do_GET(self) -> None:
        self._dispatch("GET")

    def do_POST(self) -> None:
        self._dispatch("POST")


def serve(engine: Engine, host: str = "127.0.0.1", port: int = 8765) -> None:
    service = MemoryService(engine, host, port).start()
    print(f"serving on {service.url}", flush=True)
    try:
        service._thread.join()
    except KeyboardInterrupt:
        pass
    finally:
        service.stop()
