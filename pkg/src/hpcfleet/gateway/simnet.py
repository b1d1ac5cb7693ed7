"""A simulated network in front of gateway apps, timed by a virtual clock."""
from __future__ import annotations

import json
from dataclasses import dataclass

from .client import Request, Response, SilentFailure


@dataclass
class SimClock:
    now: float = 0.0

    def __call__(self) -> float:
        return self.now

    def advance(self, dt: float) -> None:
        self.now += dt


class SimNetwork:
    """Routes requests to ``apps[endpoint].handle``; each exchange costs ``rtt``.

    Endpoints listed in ``silent`` never answer, which costs the caller its
    whole deadline.
    """

    def __init__(self, clock: SimClock, rtt: float = 1.0):
        self.clock = clock
        self.rtt = rtt
        self.apps: dict = {}
        self.silent: set = set()

    def __call__(self, endpoint: str, request: Request, deadline: float) -> Response:
        app = self.apps.get(endpoint)
        if app is None or endpoint in self.silent:
            self.clock.advance(deadline)
            raise SilentFailure(endpoint)
        body = b"" if request.body is None else json.dumps(request.body).encode()
        status, headers, out = app.handle(request.method, request.path, body)
        self.clock.advance(self.rtt)
        return Response(status, headers, json.loads(out) if out else None)
