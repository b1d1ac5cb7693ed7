"""Client-side failover across gateway replicas.

An endpoint that answers 503 with ``X-Failover: true`` is skipped at once;
only endpoints that stay silent cost the per-attempt deadline.
"""
from __future__ import annotations

import http.client
import json
import socket
import time
from dataclasses import dataclass, field
from typing import Callable, Optional
from urllib.parse import urlencode

from ..digest import fnv1a64
from ..errors import AllEndpointsFailed, ValidationError
from .endpoints import EndpointSet

OK = "ok"
UNAVAILABLE = "unavailable"
TIMEOUT = "timeout"
REFUSED = "refused"
ERROR = "error"

FAILOVER_HEADER = "X-Failover"


class SilentFailure(Exception):
    """No answer before the deadline."""


@dataclass
class Response:
    status: int
    headers: dict = field(default_factory=dict)
    body: object = None

    @property
    def failover(self) -> bool:
        hdr = {k.lower(): v for k, v in self.headers.items()}
        return self.status == 503 and str(hdr.get(FAILOVER_HEADER.lower(), "")).lower() == "true"


@dataclass(frozen=True)
class Request:
    method: str
    path: str
    body: object = None


@dataclass(frozen=True)
class FailoverPolicy:
    max_attempts: Optional[int] = None    # default: one attempt per endpoint
    deadline: float = 2.0
    rotation: str = "ordered"             # ordered | hashed

    def __post_init__(self):
        if self.max_attempts is not None and self.max_attempts < 1:
            raise ValidationError("max_attempts must be >= 1")
        if self.deadline <= 0:
            raise ValidationError("deadline must be positive")
        if self.rotation not in ("ordered", "hashed"):
            raise ValidationError("rotation must be ordered or hashed")

    def order(self, endpoints, key: str = "") -> list:
        eps = list(endpoints)
        if self.rotation == "hashed" and eps:
            k = fnv1a64(key.encode()) % len(eps)
            eps = eps[k:] + eps[:k]
        return eps

    def attempts_for(self, n: int) -> int:
        return n if self.max_attempts is None else self.max_attempts


@dataclass
class Attempt:
    endpoint: str
    signal: str
    started: float
    elapsed: float
    status: Optional[int] = None


@dataclass
class CallResult:
    response: Response
    attempts: list

    @property
    def failover_latency(self) -> float:
        """Time spent on endpoints before the one that answered."""
        return self.attempts[-1].started - self.attempts[0].started


def call_with_failover(request: Request, endpoints, policy: FailoverPolicy,
                       transport: Callable, clock: Callable[[], float] = time.monotonic) -> CallResult:
    """Send ``request`` to each endpoint in rotation order until one answers.

    ``transport(endpoint, request, deadline)`` returns a ``Response`` or raises
    ``SilentFailure`` (deadline spent) or ``ConnectionError`` (refused, no wait).
    Server errors without the failover header also move on to the next
    endpoint; any other status is the answer.
    """
    eps = list(endpoints.endpoints if isinstance(endpoints, EndpointSet) else endpoints)
    if not eps:
        raise ValidationError("no endpoints to call")
    order = policy.order(eps, request.path)
    attempts = []
    for i in range(policy.attempts_for(len(eps))):
        ep = order[i % len(order)]
        t0 = clock()
        try:
            resp = transport(ep, request, policy.deadline)
        except SilentFailure:
            attempts.append(Attempt(ep, TIMEOUT, t0, clock() - t0))
            continue
        except ConnectionError:
            attempts.append(Attempt(ep, REFUSED, t0, clock() - t0))
            continue
        if resp.failover:
            attempts.append(Attempt(ep, UNAVAILABLE, t0, clock() - t0, resp.status))
            continue
        if resp.status >= 500:
            attempts.append(Attempt(ep, ERROR, t0, clock() - t0, resp.status))
            continue
        attempts.append(Attempt(ep, OK, t0, clock() - t0, resp.status))
        return CallResult(resp, attempts)
    raise AllEndpointsFailed(
        f"{request.method} {request.path}: {len(attempts)} attempts failed", attempts)


class HttpTransport:
    def __call__(self, endpoint: str, request: Request, deadline: float) -> Response:
        host, _, port = endpoint.rpartition(":")
        conn = http.client.HTTPConnection(host, int(port), timeout=deadline)
        try:
            body = None if request.body is None else json.dumps(request.body).encode()
            headers = {"Content-Type": "application/json"} if body is not None else {}
            conn.request(request.method, request.path, body=body, headers=headers)
            r = conn.getresponse()
            raw = r.read()
            payload = json.loads(raw) if raw else None
            return Response(r.status, dict(r.getheaders()), payload)
        except socket.timeout:
            raise SilentFailure(endpoint) from None
        finally:
            conn.close()


class GatewayClient:
    """Finds gateways through the store-published endpoint set.

    ``bootstrap`` is only the first contact; the endpoint list is refreshed
    from ``GET /v1/endpoints`` every ``refresh`` seconds and whenever all
    known endpoints fail.
    """

    def __init__(self, bootstrap: str, policy: Optional[FailoverPolicy] = None,
                 transport: Optional[Callable] = None, cluster: str = "default",
                 refresh: float = 30.0, clock: Callable[[], float] = time.monotonic):
        self.bootstrap = bootstrap
        self.policy = policy or FailoverPolicy()
        self.transport = transport or HttpTransport()
        self.cluster = cluster
        self.refresh_interval = refresh
        self.clock = clock
        self.known = EndpointSet(cluster, (bootstrap,))
        self._fetched: Optional[float] = None

    def refresh(self) -> EndpointSet:
        candidates = list(dict.fromkeys(list(self.known) + [self.bootstrap]))
        res = call_with_failover(
            Request("GET", "/v1/endpoints?" + urlencode({"cluster": self.cluster})),
            candidates, self.policy, self.transport, self.clock)
        if res.response.status == 200:
            got = EndpointSet.from_json(res.response.body["result"])
            if len(got):
                self.known = got
        self._fetched = self.clock()
        return self.known

    def endpoints(self) -> EndpointSet:
        if self._fetched is None or self.clock() - self._fetched >= self.refresh_interval:
            self.refresh()
        return self.known

    def call(self, method: str, path: str, body=None) -> Response:
        req = Request(method, path, body)
        try:
            return call_with_failover(req, self.endpoints(), self.policy, self.transport,
                                      self.clock).response
        except AllEndpointsFailed:
            self.refresh()
            return call_with_failover(req, self.known, self.policy, self.transport,
                                      self.clock).response
