"""Image transfer, layer verification and attestation for one node boot."""
from __future__ import annotations

import bisect
from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Iterable, Optional

from ..digest import digest_of
from ..errors import DigestMismatch, InsufficientMemory, ValidationError
from .images import ImageManifest

METADATA_BYTES_PER_LAYER = 2


@dataclass(frozen=True)
class Full:
    pass


@dataclass(frozen=True)
class Lazy:
    cache_bytes: int
    metadata_bytes: int = METADATA_BYTES_PER_LAYER


@dataclass
class Stage:
    layer: int
    start: int
    end: int
    outcome: str


@dataclass
class BootTrace:
    node: str
    image: str
    mode: str
    stages: list = field(default_factory=list)
    bytes_transferred: int = 0
    bytes_read: int = 0
    params: dict = field(default_factory=dict)
    measured: list = field(default_factory=list)
    # the first stage stays resident under the later ones
    resident_base: bool = True

    def to_json(self) -> dict:
        return {"node": self.node, "image": self.image, "mode": self.mode,
                "stages": [[s.layer, s.start, s.end, s.outcome] for s in self.stages],
                "bytes_transferred": self.bytes_transferred, "bytes_read": self.bytes_read,
                "params": self.params, "resident_base": self.resident_base}


def tampered_digest(digest: str) -> str:
    return digest_of(["tampered", digest])


class ExtentCache:
    """LRU cache of fetched byte extents, keyed by layer.

    Only the missing parts of a read are fetched; cached extents are evicted
    whole, least recently used first.
    """

    def __init__(self, capacity: int):
        if capacity < 0:
            raise ValidationError("cache capacity must be >= 0")
        self.capacity = capacity
        self.used = 0
        self._lru: OrderedDict = OrderedDict()      # (layer, start) -> end
        self._starts: dict[int, list] = {}

    def _overlapping(self, layer, lo, hi):
        starts = self._starts.get(layer, [])
        i = bisect.bisect_right(starts, lo) - 1
        out = []
        i = max(i, 0)
        while i < len(starts) and starts[i] < hi:
            s = starts[i]
            e = self._lru[(layer, s)]
            if e > lo:
                out.append((s, e))
            i += 1
        return out

    def read(self, layer: int, offset: int, length: int) -> int:
        """Serve a read; returns bytes fetched over the network."""
        lo, hi = offset, offset + length
        fetched = 0
        gaps = []
        cur = lo
        for s, e in self._overlapping(layer, lo, hi):
            self._lru.move_to_end((layer, s))
            if s > cur:
                gaps.append((cur, s))
            cur = max(cur, e)
        if cur < hi:
            gaps.append((cur, hi))
        for s, e in gaps:
            fetched += e - s
            self._insert(layer, s, e)
        return fetched

    def _insert(self, layer, s, e):
        size = e - s
        if size > self.capacity:
            return
        while self.used + size > self.capacity and self._lru:
            (ol, os_), oe = self._lru.popitem(last=False)
            self._starts[ol].remove(os_)
            self.used -= oe - os_
        self._lru[(layer, s)] = e
        bisect.insort(self._starts.setdefault(layer, []), s)
        self.used += size


def boot_node(node_id: str, manifest: ImageManifest, mode=Full(), params: Optional[dict] = None,
              *, memory: Optional[int] = None, reads: Iterable = (), staged: Iterable = (),
              corrupt: Iterable = (), start: int = 0, stage_ticks: int = 1) -> BootTrace:
    """Fetch and verify ``manifest`` layer by layer.

    ``reads`` is the workload's access trace ``(layer index, offset, length)``
    (lazy mode only). ``staged`` holds layer digests already placed in node
    storage out of band; they cost no network bytes. ``corrupt`` holds layer
    indices whose served content is tampered. Raises ``DigestMismatch`` at the
    first layer that fails verification, with the partial trace attached.
    """
    lazy = isinstance(mode, Lazy)
    if not lazy and memory is not None and manifest.size > memory:
        raise InsufficientMemory(
            f"{node_id}: image {manifest.image_id} needs {manifest.size} bytes, has {memory}")
    staged = set(staged)
    corrupt = set(corrupt)
    trace = BootTrace(node_id, manifest.image_id, "lazy" if lazy else "full",
                      params=dict(params or {}))
    t = start
    for i, layer in enumerate(manifest.layers):
        measured = tampered_digest(layer.digest) if i in corrupt else layer.digest
        if layer.digest not in staged:
            trace.bytes_transferred += mode.metadata_bytes if lazy else layer.size
        trace.measured.append(measured)
        end = t + stage_ticks
        if measured != layer.digest:
            trace.stages.append(Stage(i, t, end, "digest_mismatch"))
            exc = DigestMismatch(i, layer.digest, measured)
            exc.trace = trace
            raise exc
        trace.stages.append(Stage(i, t, end, "ok"))
        t = end
    if lazy:
        cache = ExtentCache(mode.cache_bytes)
        for li, off, ln in reads:
            layer = manifest.layers[li]
            if off < 0 or ln < 0 or off + ln > layer.size:
                raise ValidationError(f"read {li}:{off}+{ln} outside layer of {layer.size} bytes")
            trace.bytes_read += ln
            if layer.digest in staged:
                continue
            trace.bytes_transferred += cache.read(li, off, ln)
    return trace


@dataclass(frozen=True)
class AttestationReport:
    node: str
    layers: tuple            # (expected digest, measured digest or None)
    verdict: str
    failed_layer: Optional[int] = None

    @property
    def passed(self) -> bool:
        return self.verdict == "pass"

    def to_json(self) -> dict:
        return {"node": self.node, "layers": [list(p) for p in self.layers],
                "verdict": self.verdict, "failed_layer": self.failed_layer}


def attest(node_id: str, expected: ImageManifest, measured) -> AttestationReport:
    measured = list(measured)
    pairs = []
    failed = None
    for i, layer in enumerate(expected.layers):
        m = measured[i] if i < len(measured) else None
        pairs.append((layer.digest, m))
        if failed is None and m != layer.digest:
            failed = i
    if failed is None:
        return AttestationReport(node_id, tuple(pairs), "pass")
    return AttestationReport(node_id, tuple(pairs), "fail", failed)
