"""HTTP front end for the router, with active unavailability signalling."""
from __future__ import annotations

import json
import logging
import re
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Optional
from urllib.parse import parse_qs, urlsplit

from ..errors import FleetError, ValidationError
from .client import FAILOVER_HEADER
from .endpoints import publish_endpoint, withdraw_endpoint

log = logging.getLogger(__name__)

_SEG = "([^/]+)"


def _desires(m, q, body):
    if isinstance(body, dict) and "layers" in body:
        return {"op": "apply", "layers": body["layers"]}
    if isinstance(body, dict) and "desires" in body:
        return {"op": "put_desires", "desires": body["desires"]}
    raise ValidationError("PUT /v1/desires needs layers or desires")


def _obj(body) -> dict:
    if not isinstance(body, dict):
        raise ValidationError("request body must be a JSON object")
    return body


ROUTES = [
    ("GET", f"/v1/facts/{_SEG}/{_SEG}/{_SEG}", "get",
     lambda m, q, b: {"op": "get", "key": "/".join(m.groups()), "kind": "fact"}),
    ("GET", f"/v1/desires/{_SEG}/{_SEG}/{_SEG}", "get",
     lambda m, q, b: {"op": "get", "key": "/".join(m.groups()), "kind": "desire"}),
    ("PUT", "/v1/desires", "put_desires", _desires),
    ("GET", f"/v1/diff/{_SEG}", "diff", lambda m, q, b: {"op": "diff", "entity": m.group(1)}),
    ("POST", "/v1/orchestrate/rollout", "rollout", lambda m, q, b: dict(_obj(b), op="rollout")),
    ("POST", "/v1/orchestrate/sequence", "sequence", lambda m, q, b: dict(_obj(b), op="sequence")),
    ("POST", "/v1/remediate", "remediate", lambda m, q, b: {"op": "remediate", "event": _obj(b)}),
    ("POST", "/v1/flows", "flows_add", lambda m, q, b: {"op": "flows_add", "flow": _obj(b)}),
    ("GET", "/v1/metrics", "metrics", lambda m, q, b: {"op": "metrics"}),
    ("POST", "/v1/sim/fault", "sim_fault", lambda m, q, b: {"op": "sim_fault", "fault": _obj(b)}),
    ("POST", "/v1/sim/run", "sim_run", lambda m, q, b: dict(_obj(b), op="sim_run")),
    ("GET", f"/v1/attest/{_SEG}", "attest", lambda m, q, b: {"op": "attest", "node": m.group(1)}),
    ("GET", "/v1/endpoints", "endpoints",
     lambda m, q, b: {"op": "endpoints", "cluster": q.get("cluster", ["default"])[0]}),
]
_COMPILED = [(meth, re.compile(f"^{pat}$"), op, build) for meth, pat, op, build in ROUTES]


def _json(status, payload, extra=None):
    headers = {"Content-Type": "application/json"}
    headers.update(extra or {})
    return status, headers, json.dumps(payload, sort_keys=True, default=str).encode()


class GatewayApp:
    """Transport-independent request handling: ``handle`` maps bytes to bytes."""

    def __init__(self, router, available: bool = True):
        self.router = router
        self.available = available

    def handle(self, method: str, target: str, body: bytes = b""):
        if not self.available:
            return _json(503, {"error": "Unavailable", "message": "gateway is draining"},
                         {FAILOVER_HEADER: "true"})
        url = urlsplit(target)
        query = parse_qs(url.query)
        allowed = []
        for meth, rx, op, build in _COMPILED:
            m = rx.match(url.path)
            if m is None:
                continue
            if meth != method:
                allowed.append(meth)
                continue
            try:
                payload = json.loads(body) if body else None
            except ValueError:
                self.router.metrics.record(op, 0.0, "failure")
                return _json(400, {"error": "ValidationError", "message": "body is not JSON"})
            try:
                cmd = build(m, query, payload)
            except FleetError as exc:
                self.router.metrics.record(op, 0.0, "failure")
                return self._error(exc)
            try:
                return _json(200, {"result": self.router.apply_command(cmd)})
            except FleetError as exc:
                return self._error(exc)
        if allowed:
            return _json(405, {"error": "MethodNotAllowed", "message": f"use {', '.join(allowed)}"})
        return _json(404, {"error": "NotFound", "message": f"no route {url.path}"})

    @staticmethod
    def _error(exc: FleetError):
        out = {"error": type(exc).__name__, "message": str(exc)}
        detail = getattr(exc, "body", None)
        if detail is not None:
            out["detail"] = detail
        return _json(getattr(exc, "status", 400), out)


class _Handler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"

    def _serve(self):
        n = int(self.headers.get("Content-Length") or 0)
        body = self.rfile.read(n) if n else b""
        status, headers, out = self.server.app.handle(self.command, self.path, body)
        self.send_response(status)
        for k, v in headers.items():
            self.send_header(k, v)
        self.send_header("Content-Length", str(len(out)))
        self.end_headers()
        self.wfile.write(out)

    do_GET = do_PUT = do_POST = _serve

    def log_message(self, fmt, *args):
        log.debug("%s %s", self.address_string(), fmt % args)


class GatewayServer:
    """One gateway replica; it publishes itself in the store while it runs."""

    def __init__(self, app: GatewayApp, host: str = "127.0.0.1", port: int = 0,
                 cluster: str = "default"):
        self.app = app
        self.cluster = cluster
        self.httpd = ThreadingHTTPServer((host, port), _Handler)
        self.httpd.daemon_threads = True
        self.httpd.app = app
        self._thread: Optional[threading.Thread] = None

    @property
    def address(self) -> str:
        host, port = self.httpd.server_address[:2]
        return f"{host}:{port}"

    def _store(self):
        return self.app.router.rt.store

    def start(self) -> "GatewayServer":
        self._thread = threading.Thread(target=self.httpd.serve_forever, daemon=True)
        self._thread.start()
        with self.app.router._lock:
            publish_endpoint(self._store(), self.address, self.cluster)
        return self

    def set_available(self, flag: bool) -> None:
        self.app.available = flag
        with self.app.router._lock:
            publish_endpoint(self._store(), self.address, self.cluster, flag)

    def stop(self) -> None:
        with self.app.router._lock:
            withdraw_endpoint(self._store(), self.address, self.cluster)
        self.httpd.shutdown()
        self.httpd.server_close()
        if self._thread is not None:
            self._thread.join()
