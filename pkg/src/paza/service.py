"""HTTP service: ingest endpoint, alert/review API, stats, and SSE stream.

Runs the same pipeline as replay; all trigger/cooldown/retry decisions use
event time, so a trace fed at an accelerated pace produces the same alert
sequence a replay would.  After the last event, the serve-mode clock keeps
flowing at wall rate so queued retries still drain.

Endpoints:
    POST /api/ingest                    FrameEvent NDJSON body
    GET  /api/alerts?since_ms=          alerts created at/after since_ms
    GET  /api/alerts/{id}
    POST /api/alerts/{id}/review        {"decision": "confirmed"|"dismissed", "note": ...}
    GET  /api/stats
    GET  /api/stream                    SSE: alert-created, alert-reviewed, stats-tick
    GET  /api/snapshots/{name}.jpg
"""

from __future__ import annotations

import json
import logging
import queue
import re
import threading
import time
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Optional
from urllib.parse import parse_qs, urlparse

from .alerts import AlertRecord
from .events import ParseError, parse_frame_event
from .pipeline import Pipeline
from .registry import StaleEvent

logger = logging.getLogger(__name__)

_ALERT_PATH = re.compile(r"^/api/alerts/([\w\-]+)$")
_REVIEW_PATH = re.compile(r"^/api/alerts/([\w\-]+)/review$")
_SNAPSHOT_PATH = re.compile(r"^/api/snapshots/([\w\-]+_\d+\.jpg)$")


class PazaService:
    """Shared state between HTTP handler threads and the pipeline."""

    def __init__(self, pipeline: Pipeline, tick_s: float = 1.0):
        self.pipeline = pipeline
        self.tick_s = tick_s
        self.lock = threading.RLock()
        self._subscribers: list[queue.Queue] = []
        self._sub_lock = threading.Lock()
        self._last_event_wall: Optional[float] = None
        self._stop = threading.Event()
        pipeline.on_alert = self._on_alert

    # -- clock -----------------------------------------------------------------

    def now_ms(self) -> int:
        """Event time, extrapolated at wall rate once the stream goes quiet.

        While events flow faster than wall time (accelerated feeds) the event
        clock leads and decisions match a pure replay; once ingest stops the
        clock keeps moving so the retry queue drains instead of stalling.
        """
        with self.lock:
            base = self.pipeline.clock_ms
            last_wall = self._last_event_wall
        if last_wall is None:
            return base
        return base + max(0, int((time.monotonic() - last_wall) * 1000))

    # -- pipeline access ---------------------------------------------------------

    def ingest_lines(self, text: str) -> tuple[int, list[str]]:
        accepted = 0
        errors: list[str] = []
        for lineno, line in enumerate(text.splitlines(), start=1):
            if not line.strip():
                continue
            try:
                event = parse_frame_event(line)
            except ParseError as exc:
                errors.append(f"line {lineno}: {exc}")
                continue
            with self.lock:
                try:
                    self.pipeline.process_event(event)
                except StaleEvent as exc:
                    errors.append(f"line {lineno}: {exc}")
                    continue
                self._last_event_wall = time.monotonic()
            accepted += 1
        return accepted, errors

    def review(self, alert_id: str, decision: str, note: Optional[str]):
        with self.lock:
            if self.pipeline.store is None:
                return "unavailable", None
            ok, record = self.pipeline.store.update_review(alert_id, decision, note)
        if record is None:
            return "not_found", None
        if not ok:
            return "conflict", record
        self.publish("alert-reviewed", record.to_dict())
        return "ok", record

    def alerts(self, since_ms: Optional[int]) -> list[AlertRecord]:
        with self.lock:
            if self.pipeline.store is not None:
                return self.pipeline.store.list_alerts(since_ms)
            out = self.pipeline.alerts
            if since_ms is not None:
                out = [r for r in out if r.created_ms >= since_ms]
            return list(out)

    def alert(self, alert_id: str) -> Optional[AlertRecord]:
        with self.lock:
            if self.pipeline.store is not None:
                return self.pipeline.store.get(alert_id)
            return next((r for r in self.pipeline.alerts if r.alert_id == alert_id), None)

    def stats(self) -> dict:
        with self.lock:
            return self.pipeline.report()

    # -- stream -----------------------------------------------------------------

    def subscribe(self) -> queue.Queue:
        q: queue.Queue = queue.Queue(maxsize=256)
        with self._sub_lock:
            self._subscribers.append(q)
        return q

    def unsubscribe(self, q: queue.Queue) -> None:
        with self._sub_lock:
            if q in self._subscribers:
                self._subscribers.remove(q)

    def publish(self, event: str, data: dict) -> None:
        with self._sub_lock:
            subs = list(self._subscribers)
        for q in subs:
            try:
                q.put_nowait((event, data))
            except queue.Full:
                logger.warning("dropping SSE event for a slow subscriber")

    def _on_alert(self, record: AlertRecord) -> None:
        self.publish("alert-created", record.to_dict())

    # -- background pump -----------------------------------------------------------

    def pump_forever(self) -> None:
        while not self._stop.wait(self.tick_s):
            now = self.now_ms()
            with self.lock:
                self.pipeline.pump(now)
            self.publish("stats-tick", self.stats()["stats"])

    def stop(self) -> None:
        self._stop.set()


class _ApiHandler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"

    @property
    def service(self) -> PazaService:
        return self.server.service  # type: ignore[attr-defined]

    def log_message(self, fmt, *args):
        logger.debug("http: " + fmt, *args)

    def _json(self, status: int, obj) -> None:
        payload = json.dumps(obj).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(payload)))
        self.send_header("Access-Control-Allow-Origin", "*")
        self.end_headers()
        self.wfile.write(payload)

    def _body(self) -> str:
        length = int(self.headers.get("Content-Length", "0"))
        return self.rfile.read(length).decode("utf-8") if length else ""

    # -- GET ---------------------------------------------------------------

    def do_GET(self):
        url = urlparse(self.path)
        if url.path == "/api/stats":
            self._json(200, self.service.stats())
            return
        if url.path == "/api/alerts":
            params = parse_qs(url.query)
            since = int(params["since_ms"][0]) if "since_ms" in params else None
            self._json(200, [r.to_dict() for r in self.service.alerts(since)])
            return
        m = _ALERT_PATH.match(url.path)
        if m:
            record = self.service.alert(m.group(1))
            if record is None:
                self._json(404, {"error": "alert not found"})
            else:
                self._json(200, record.to_dict())
            return
        m = _SNAPSHOT_PATH.match(url.path)
        if m:
            self._snapshot(m.group(1))
            return
        if url.path == "/api/stream":
            self._stream()
            return
        self._json(404, {"error": "unknown path"})

    def _snapshot(self, name: str) -> None:
        store = self.service.pipeline.store
        path = store.directory / name if store is not None else None
        if path is None or not path.exists():
            self._json(404, {"error": "snapshot not found"})
            return
        payload = path.read_bytes()
        self.send_response(200)
        self.send_header("Content-Type", "image/jpeg")
        self.send_header("Content-Length", str(len(payload)))
        self.send_header("Access-Control-Allow-Origin", "*")
        self.end_headers()
        self.wfile.write(payload)

    def _stream(self) -> None:
        q = self.service.subscribe()
        try:
            self.send_response(200)
            self.send_header("Content-Type", "text/event-stream")
            self.send_header("Cache-Control", "no-cache")
            self.send_header("Access-Control-Allow-Origin", "*")
            self.end_headers()
            while True:
                try:
                    event, data = q.get(timeout=self.service.tick_s)
                except queue.Empty:
                    self.wfile.write(b": keepalive\n\n")
                    self.wfile.flush()
                    continue
                chunk = f"event: {event}\ndata: {json.dumps(data)}\n\n"
                self.wfile.write(chunk.encode("utf-8"))
                self.wfile.flush()
        except (BrokenPipeError, ConnectionResetError):
            pass
        finally:
            self.service.unsubscribe(q)

    # -- POST ---------------------------------------------------------------

    def do_POST(self):
        url = urlparse(self.path)
        if url.path == "/api/ingest":
            accepted, errors = self.service.ingest_lines(self._body())
            self._json(202, {"accepted": accepted, "errors": errors})
            return
        m = _REVIEW_PATH.match(url.path)
        if m:
            try:
                body = json.loads(self._body() or "{}")
                decision = body["decision"]
                note = body.get("note")
                if decision not in ("confirmed", "dismissed"):
                    raise ValueError(f"invalid decision {decision!r}")
            except (ValueError, KeyError) as exc:
                self._json(400, {"error": str(exc)})
                return
            status, record = self.service.review(m.group(1), decision, note)
            if status == "not_found":
                self._json(404, {"error": "alert not found"})
            elif status == "conflict":
                self._json(409, record.to_dict())
            elif status == "unavailable":
                self._json(503, {"error": "no alert store configured"})
            else:
                self._json(200, record.to_dict())
            return
        self._json(404, {"error": "unknown path"})

    def do_OPTIONS(self):
        self.send_response(204)
        self.send_header("Access-Control-Allow-Origin", "*")
        self.send_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS")
        self.send_header("Access-Control-Allow-Headers", "Content-Type")
        self.send_header("Content-Length", "0")
        self.end_headers()


class PazaServer:
    """Threaded HTTP server wrapper around a PazaService."""

    def __init__(self, service: PazaService, port: int = 0, host: str = "127.0.0.1"):
        self.service = service
        self._httpd = ThreadingHTTPServer((host, port), _ApiHandler)
        self._httpd.daemon_threads = True
        self._httpd.service = service  # type: ignore[attr-defined]
        self._http_thread = threading.Thread(target=self._httpd.serve_forever, daemon=True)
        self._pump_thread = threading.Thread(target=service.pump_forever, daemon=True)

    @property
    def port(self) -> int:
        return self._httpd.server_address[1]

    @property
    def url(self) -> str:
        return f"http://{self._httpd.server_address[0]}:{self.port}"

    def start(self) -> "PazaServer":
        self._http_thread.start()
        self._pump_thread.start()
        return self

    def stop(self) -> None:
        self.service.stop()
        self._httpd.shutdown()
        self._httpd.server_close()
        self._http_thread.join(timeout=5)
        self._pump_thread.join(timeout=5)

    def __enter__(self) -> "PazaServer":
        return self.start()

    def __exit__(self, *exc) -> None:
        self.stop()


def serve(pipeline: Pipeline, port: int = 8080, tick_s: float = 1.0) -> PazaServer:
    return PazaServer(PazaService(pipeline, tick_s=tick_s), port=port).start()
