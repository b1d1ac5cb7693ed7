"""Per-request-type service counters."""
from __future__ import annotations

import threading
from dataclasses import asdict, dataclass
from typing import Optional

from ..errors import NegativeDuration, NoSamples, UnknownRequestType
from .histogram import LatencyHistogram


@dataclass(frozen=True)
class RequestProfile:
    type: str
    requests: int
    responses: int
    failures: int
    in_flight: int
    mean: Optional[float]
    p50: Optional[float]
    p99: Optional[float]

    @property
    def median(self):
        return self.p50

    def to_json(self) -> dict:
        d = asdict(self)
        del d["in_flight"]
        return d


class _Counters:
    __slots__ = ("requests", "responses", "failures", "in_flight", "total_time", "hist")

    def __init__(self):
        self.requests = 0
        self.responses = 0
        self.failures = 0
        self.in_flight = 0
        self.total_time = 0.0
        self.hist = LatencyHistogram()


class ServiceMetrics:
    """Counters and latency histograms keyed by request type.

    One lock guards all updates, so a snapshot is a consistent cut.
    """

    def __init__(self):
        self._types: dict[str, _Counters] = {}
        self._lock = threading.Lock()

    def register(self, request_type: str) -> None:
        with self._lock:
            self._types.setdefault(request_type, _Counters())

    def types(self) -> list:
        with self._lock:
            return sorted(self._types)

    def begin(self, request_type: str) -> None:
        with self._lock:
            c = self._types.setdefault(request_type, _Counters())
            c.requests += 1
            c.in_flight += 1

    def end(self, request_type: str, duration: float, success: bool = True) -> None:
        if duration < 0:
            raise NegativeDuration(f"duration {duration} < 0")
        with self._lock:
            c = self._types[request_type]
            c.in_flight -= 1
            self._finish(c, duration, success)

    @staticmethod
    def _finish(c: _Counters, duration, success) -> None:
        if success:
            c.responses += 1
            c.total_time += duration
            c.hist.add(duration)
        else:
            c.failures += 1

    def record(self, request_type: str, duration: float, outcome="success") -> None:
        success = outcome in (True, "success")
        if duration < 0:
            raise NegativeDuration(f"duration {duration} < 0")
        with self._lock:
            c = self._types.setdefault(request_type, _Counters())
            c.requests += 1
            self._finish(c, duration, success)

    def _get(self, request_type) -> _Counters:
        c = self._types.get(request_type)
        if c is None:
            raise UnknownRequestType(f"no metrics for request type {request_type!r}")
        return c

    def snapshot(self, request_type: str) -> RequestProfile:
        with self._lock:
            c = self._get(request_type)
            if c.responses:
                mean = c.total_time / c.responses
                p50, p99 = c.hist.quantile(0.5), c.hist.quantile(0.99)
            else:
                mean = p50 = p99 = None
            return RequestProfile(request_type, c.requests, c.responses, c.failures,
                                  c.in_flight, mean, p50, p99)

    def quantile(self, request_type: str, q: float) -> float:
        with self._lock:
            c = self._get(request_type)
            if not c.responses:
                raise NoSamples(f"no successful {request_type!r} requests yet")
            return c.hist.quantile(q)

    def histogram(self, request_type: str) -> LatencyHistogram:
        with self._lock:
            return LatencyHistogram().merge(self._get(request_type).hist)

    def to_json(self) -> list:
        return [self.snapshot(t).to_json() for t in self.types()]
