"""Log-bucketed latency histogram.

Bucket ``i`` holds values in ``[1.1**i, 1.1**(i+1))``; zero gets its own
bucket. Each bucket also tracks its exact min and max, so estimates are
clamped to observed values (a bucket holding one distinct value is exact) and
never stray more than one bucket from the true order statistic.
"""
from __future__ import annotations

import math
from typing import Iterable

from ..errors import NegativeDuration, NoSamples, ValidationError

GROWTH = 1.1
_LOG_GROWTH = math.log(GROWTH)
ZERO_BUCKET = None


def bucket_index(value: float):
    if value < 0:
        raise NegativeDuration(f"duration {value} < 0")
    if value == 0:
        return ZERO_BUCKET
    return math.floor(math.log(value) / _LOG_GROWTH)


def bucket_bounds(index) -> tuple:
    if index is ZERO_BUCKET:
        return (0.0, 0.0)
    return (GROWTH ** index, GROWTH ** (index + 1))


def _order(index):
    return -math.inf if index is ZERO_BUCKET else index


def nearest_rank(sorted_values, q: float):
    """Exact nearest-rank quantile of an already sorted sequence."""
    if not sorted_values:
        raise NoSamples("no samples")
    _check_q(q)
    rank = max(1, math.ceil(q * len(sorted_values)))
    return sorted_values[rank - 1]


def _check_q(q):
    if not 0 < q <= 1:
        raise ValidationError(f"quantile {q} outside (0, 1]")


class LatencyHistogram:
    def __init__(self):
        self.counts: dict = {}
        self.mins: dict = {}
        self.maxs: dict = {}
        self.total = 0

    def add(self, value: float, count: int = 1) -> None:
        i = bucket_index(value)
        self.counts[i] = self.counts.get(i, 0) + count
        if i not in self.mins or value < self.mins[i]:
            self.mins[i] = value
        if i not in self.maxs or value > self.maxs[i]:
            self.maxs[i] = value
        self.total += count

    def extend(self, values: Iterable[float]) -> "LatencyHistogram":
        for v in values:
            self.add(v)
        return self

    def merge(self, other: "LatencyHistogram") -> "LatencyHistogram":
        out = LatencyHistogram()
        for h in (self, other):
            for i, c in h.counts.items():
                out.counts[i] = out.counts.get(i, 0) + c
                out.mins[i] = min(out.mins.get(i, h.mins[i]), h.mins[i])
                out.maxs[i] = max(out.maxs.get(i, h.maxs[i]), h.maxs[i])
            out.total += h.total
        return out

    def buckets(self) -> list:
        return sorted(self.counts.items(), key=lambda kv: _order(kv[0]))

    def bucket_of_rank(self, rank: int):
        seen = 0
        for i, c in self.buckets():
            seen += c
            if seen >= rank:
                return i
        raise NoSamples("rank beyond sample count")

    def quantile(self, q: float) -> float:
        if self.total == 0:
            raise NoSamples("histogram is empty")
        _check_q(q)
        rank = max(1, math.ceil(q * self.total))
        i = self.bucket_of_rank(rank)
        if i is ZERO_BUCKET:
            return 0.0
        lo, hi = self.mins[i], self.maxs[i]
        mid = GROWTH ** (i + 0.5)
        return min(max(mid, lo), hi)

    def to_json(self) -> dict:
        return {"growth": GROWTH, "total": self.total,
                "buckets": [["zero" if i is None else i, c, self.mins[i], self.maxs[i]]
                            for i, c in self.buckets()]}

    def __eq__(self, other):
        return (isinstance(other, LatencyHistogram) and self.counts == other.counts
                and self.mins == other.mins and self.maxs == other.maxs
                and self.total == other.total)
