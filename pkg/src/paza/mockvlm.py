"""Scriptable mock VLM server for hermetic end-to-end runs.

Serves POST /v1/chat/completions with OpenAI-shaped responses chosen by
ordered match rules.  A rule matches on the X-Paza-Behavior request header
(attached by the replay harness in test mode only) or acts as the required
default.  Rules may inject faults and carry a consumable `times` budget so
sequences like "fail once, then succeed" are expressible.
"""

from __future__ import annotations

import json
import threading
import time
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Optional

FAULTS = ("none", "http_500", "http_429", "timeout", "malformed")


@dataclass
class MockRule:
    match: str  # behavior tag, or "default"
    respond: str = ""
    latency_ms: int = 0
    fault: str = "none"
    times: Optional[int] = None  # consumable budget; None = unlimited

    def __post_init__(self):
        if self.fault not in FAULTS:
            raise ValueError(f"unknown fault {self.fault!r}")


@dataclass
class MockScript:
    rules: list[MockRule] = field(default_factory=list)
    timeout_sleep_s: float = 1.0  # how long the "timeout" fault stalls

    def __post_init__(self):
        if not any(r.match == "default" for r in self.rules):
            raise ValueError("mock script requires a default rule")

    @classmethod
    def from_dict(cls, obj: dict) -> "MockScript":
        rules = [MockRule(**r) for r in obj.get("rules", [])]
        return cls(rules=rules, timeout_sleep_s=obj.get("timeout_sleep_s", 1.0))

    @classmethod
    def from_file(cls, path: str) -> "MockScript":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    @classmethod
    def always(cls, respond: str) -> "MockScript":
        return cls(rules=[MockRule(match="default", respond=respond)])

    def pick(self, tag: Optional[str]) -> MockRule:
        """First matching rule wins; consumes one unit of a finite budget."""
        for rule in self.rules:
            if rule.match != "default" and rule.match != tag:
                continue
            if rule.times is not None:
                if rule.times <= 0:
                    continue
                rule.times -= 1
            return rule
        raise AssertionError("unreachable: default rule is mandatory")


class _Handler(BaseHTTPRequestHandler):
    server_version = "MockVLM/1"

    def log_message(self, fmt, *args):  # quiet test output
        pass

    def do_POST(self):
        server: MockVlmServer = self.server.owner  # type: ignore[attr-defined]
        if self.path != "/v1/chat/completions":
            self.send_error(404)
            return
        length = int(self.headers.get("Content-Length", "0"))
        body = self.rfile.read(length).decode("utf-8") if length else ""
        tag = self.headers.get("X-Paza-Behavior")
        with server.lock:
            rule = server.script.pick(tag)
            server.requests.append(
                {"tag": tag, "rule": rule.match, "fault": rule.fault, "body": body}
            )
        if rule.latency_ms:
            time.sleep(rule.latency_ms / 1000.0)

        if rule.fault == "timeout":
            time.sleep(server.script.timeout_sleep_s)
            # client has given up by now; answer anyway to close cleanly
            self._send_json(200, self._completion(rule.respond or "NORMAL\nConfidence: 10\n"))
        elif rule.fault == "http_500":
            self._send_json(500, {"error": "internal"})
        elif rule.fault == "http_429":
            self._send_json(429, {"error": "rate limited"})
        elif rule.fault == "malformed":
            self._send_raw(200, b"not json")
        else:
            self._send_json(200, self._completion(rule.respond))

    @staticmethod
    def _completion(text: str) -> dict:
        return {
            "id": "mock-0",
            "object": "chat.completion",
            "choices": [
                {"index": 0, "message": {"role": "assistant", "content": text}}
            ],
        }

    def _send_json(self, status: int, obj: dict):
        self._send_raw(status, json.dumps(obj).encode("utf-8"), "application/json")

    def _send_raw(self, status: int, payload: bytes, ctype: str = "text/plain"):
        try:
            self.send_response(status)
            self.send_header("Content-Type", ctype)
            self.send_header("Content-Length", str(len(payload)))
            self.end_headers()
            self.wfile.write(payload)
        except (BrokenPipeError, ConnectionResetError):
            pass


class MockVlmServer:
    """Threaded mock endpoint; records every request for assertions."""

    def __init__(self, script: MockScript, port: int = 0, host: str = "127.0.0.1"):
        self.script = script
        self.requests: list[dict] = []
        self.lock = threading.Lock()
        self._httpd = ThreadingHTTPServer((host, port), _Handler)
        self._httpd.owner = self  # type: ignore[attr-defined]
        self._thread = threading.Thread(target=self._httpd.serve_forever, daemon=True)

    @property
    def port(self) -> int:
        return self._httpd.server_address[1]

    @property
    def url(self) -> str:
        return f"http://{self._httpd.server_address[0]}:{self.port}"

    @property
    def request_count(self) -> int:
        with self.lock:
            return len(self.requests)

    def start(self) -> "MockVlmServer":
        self._thread.start()
        return self

    def stop(self) -> None:
        self._httpd.shutdown()
        self._httpd.server_close()
        self._thread.join(timeout=5)

    def __enter__(self) -> "MockVlmServer":
        return self.start()

    def __exit__(self, *exc) -> None:
        self.stop()


def mock_vlm_serve(script: MockScript, port: int = 0) -> MockVlmServer:
    """Start a mock VLM server; caller is responsible for stop()."""
    return MockVlmServer(script, port).start()
