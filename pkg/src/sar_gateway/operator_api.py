"""Operator HTTP API: session browsing, live event feeds, steering.

Endpoints (JSON unless noted):

  GET  /sessions                      list sessions
  GET  /sessions/{id}                 session summary + reduced final state
  GET  /sessions/{id}/events          event log download (NDJSON)
  GET  /sessions/{id}/live[?after=N]  server-sent event stream; resumes
                                      after cursor N (also honors the
                                      Last-Event-ID header)
  PUT  /sessions/{id}/script          {"script_id": ...} operator override
  GET  /scripts                       script library
  GET  /scripts/{id}
  PUT  /scripts/{id}                  create/replace a script (422 invalid)
  GET  /children/{id}/preferences
  PUT  /children/{id}/preferences     replace the preference map

The live stream emits `id: <n>` plus a JSON `data:` line per session event
and a final `event: end` when the session closes.
"""
from __future__ import annotations

import json
import queue
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import TYPE_CHECKING
from urllib.parse import parse_qs, urlparse

from .events import reduce_events

if TYPE_CHECKING:
    from .gateway import Gateway

LIVE_POLL_S = 1.0


def make_http_server(gateway: "Gateway", port: int) -> ThreadingHTTPServer:
    class Handler(_OperatorHandler):
        pass

    Handler.gateway = gateway
    server = ThreadingHTTPServer(("127.0.0.1", port), Handler)
    server.daemon_threads = True
    return server


class _OperatorHandler(BaseHTTPRequestHandler):
    gateway: "Gateway" = None
    protocol_version = "HTTP/1.1"

    # quiet: the gateway's own event log is the record of note
    def log_message(self, format, *args):
        pass

    # -- plumbing ------------------------------------------------------------

    def _send_cors(self) -> None:
        # the console is served from its own origin (or file://)
        self.send_header("Access-Control-Allow-Origin", "*")

    def _send_json(self, status: int, payload) -> None:
        body = json.dumps(payload, sort_keys=True).encode("utf-8")
        self.send_response(status)
        self._send_cors()
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def _read_json_body(self):
        length = int(self.headers.get("Content-Length", 0))
        raw = self.rfile.read(length) if length else b""
        try:
            return json.loads(raw.decode("utf-8")) if raw else {}
        except (UnicodeDecodeError, json.JSONDecodeError):
            return None

    # -- routing -------------------------------------------------------------

    def do_OPTIONS(self):
        # browser preflight for cross-origin PUTs with a JSON body
        self.send_response(204)
        self._send_cors()
        self.send_header("Access-Control-Allow-Methods", "GET, PUT, OPTIONS")
        self.send_header("Access-Control-Allow-Headers", "Content-Type, Last-Event-ID")
        self.send_header("Access-Control-Max-Age", "86400")
        self.send_header("Content-Length", "0")
        self.end_headers()

    def do_GET(self):
        url = urlparse(self.path)
        parts = [p for p in url.path.split("/") if p]
        if parts == ["sessions"]:
            self._send_json(200, self.gateway.list_sessions())
        elif len(parts) == 2 and parts[0] == "sessions":
            self._get_session(parts[1])
        elif len(parts) == 3 and parts[0] == "sessions" and parts[2] == "events":
            self._get_session_events(parts[1])
        elif len(parts) == 3 and parts[0] == "sessions" and parts[2] == "live":
            self._get_session_live(parts[1], url)
        elif parts == ["scripts"]:
            self._send_json(200, [s.as_dict() for s in self.gateway.scripts.list()])
        elif len(parts) == 2 and parts[0] == "scripts":
            script = self.gateway.scripts.get(parts[1])
            if script is None:
                self._send_json(404, {"error": f"unknown script {parts[1]!r}"})
            else:
                self._send_json(200, script.as_dict())
        elif len(parts) == 3 and parts[0] == "children" and parts[2] == "preferences":
            status, payload = self.gateway.get_preferences(parts[1])
            self._send_json(status, payload)
        else:
            self._send_json(404, {"error": f"no such resource {url.path!r}"})

    def do_PUT(self):
        url = urlparse(self.path)
        parts = [p for p in url.path.split("/") if p]
        body = self._read_json_body()
        if body is None:
            self._send_json(400, {"error": "body must be JSON"})
            return
        if len(parts) == 3 and parts[0] == "sessions" and parts[2] == "script":
            script_id = body.get("script_id")
            if not isinstance(script_id, str) or not script_id:
                self._send_json(422, {"error": "body needs a script_id string"})
                return
            status, payload = self.gateway.activate_script(parts[1], script_id)
            self._send_json(status, payload)
        elif len(parts) == 2 and parts[0] == "scripts":
            status, payload = self.gateway.put_script(parts[1], body)
            self._send_json(status, payload)
        elif len(parts) == 3 and parts[0] == "children" and parts[2] == "preferences":
            status, payload = self.gateway.put_preferences(parts[1], body)
            self._send_json(status, payload)
        else:
            self._send_json(404, {"error": f"no such resource {url.path!r}"})

    # -- session views -------------------------------------------------------

    def _get_session(self, session_id: str) -> None:
        session = self.gateway.get_session(session_id)
        if session is None:
            self._send_json(404, {"error": f"unknown session {session_id!r}"})
            return
        payload = session.summary()
        payload["state"] = reduce_events(session.log.events())
        self._send_json(200, payload)

    def _get_session_events(self, session_id: str) -> None:
        session = self.gateway.get_session(session_id)
        if session is None:
            self._send_json(404, {"error": f"unknown session {session_id!r}"})
            return
        lines = [
            json.dumps(e.as_dict(), sort_keys=True, separators=(",", ":"))
            for e in session.log.events()
        ]
        body = ("\n".join(lines) + "\n" if lines else "").encode("utf-8")
        self.send_response(200)
        self._send_cors()
        self.send_header("Content-Type", "application/x-ndjson")
        self.send_header("Content-Disposition", f'attachment; filename="{session_id}.ndjson"')
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def _get_session_live(self, session_id: str, url) -> None:
        session = self.gateway.get_session(session_id)
        if session is None:
            self._send_json(404, {"error": f"unknown session {session_id!r}"})
            return
        after = -1
        params = parse_qs(url.query)
        if "after" in params:
            try:
                after = int(params["after"][0])
            except ValueError:
                self._send_json(400, {"error": "after must be an integer"})
                return
        elif self.headers.get("Last-Event-ID"):
            try:
                after = int(self.headers["Last-Event-ID"])
            except ValueError:
                pass
        subscription = session.log.subscribe(after_n=after)
        self.send_response(200)
        self._send_cors()
        self.send_header("Content-Type", "text/event-stream")
        self.send_header("Cache-Control", "no-cache")
        self.send_header("Connection", "close")
        self.end_headers()
        try:
            while True:
                try:
                    event = subscription.get(timeout=LIVE_POLL_S)
                except queue.Empty:
                    self.wfile.write(b": keepalive\n\n")
                    self.wfile.flush()
                    continue
                if event is None:
                    self.wfile.write(
                        b"event: end\ndata: " +
                        json.dumps({"session_id": session_id}).encode("utf-8") +
                        b"\n\n"
                    )
                    self.wfile.flush()
                    return
                data = json.dumps(event.as_dict(), sort_keys=True, separators=(",", ":"))
                self.wfile.write(f"id: {event.n}\ndata: {data}\n\n".encode("utf-8"))
                self.wfile.flush()
        except (BrokenPipeError, ConnectionResetError, OSError):
            pass
        finally:
            subscription.cancel()
