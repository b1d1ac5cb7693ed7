"""Anti-entropy replication for eventually consistent keys.

Replicas exchange per-key version digests, ship the records that differ and
merge with a deterministic last-writer rule: a dominating version vector wins,
concurrent records are ordered by (timestamp, owner, canonical encoding).
Timestamps are Lamport clocks, so dominance always agrees with the tie-break
order and merge behaves as ``max`` under one total order.
"""
from __future__ import annotations

import random
from typing import Iterable, Optional

from ..digest import canonical_json
from ..errors import KeyMismatch, RoundFailed
from ..statestore.keys import StateKey
from ..statestore.records import Consistency, Kind, StateRecord


# -- version vectors --------------------------------------------------------------

def vv_dict(vv) -> dict:
    return dict(vv)


def vv_tuple(d: dict) -> tuple:
    return tuple(sorted((r, c) for r, c in d.items() if c))


def vv_leq(a, b) -> bool:
    """``a <= b`` componentwise."""
    bd = dict(b)
    return all(bd.get(r, 0) >= c for r, c in a)


def vv_compare(a, b) -> str:
    """Return ``"="``, ``"<"``, ``">"`` or ``"||"`` (concurrent)."""
    le = vv_leq(a, b)
    ge = vv_leq(b, a)
    if le and ge:
        return "="
    if le:
        return "<"
    if ge:
        return ">"
    return "||"


def vv_join(a, b) -> tuple:
    d = dict(a)
    for r, c in b:
        if c > d.get(r, 0):
            d[r] = c
    return vv_tuple(d)


def _tiebreak(rec: StateRecord):
    return (rec.timestamp, rec.owner, canonical_json(rec.to_json()))


def merge(a: StateRecord, b: StateRecord) -> StateRecord:
    if a.key != b.key or a.kind != b.kind:
        raise KeyMismatch(f"cannot merge {a.key}/{a.kind.value} with {b.key}/{b.kind.value}")
    if a is b or a == b:
        return a
    order = vv_compare(a.vv, b.vv)
    if order == ">":
        return a
    if order == "<":
        return b
    return a if _tiebreak(a) >= _tiebreak(b) else b


# -- replicas ---------------------------------------------------------------------------

def _summary(rec: StateRecord) -> tuple:
    return (rec.vv, rec.timestamp, rec.owner, rec.version)


class EventualReplica:
    """One replica's copy of the eventually consistent key space."""

    def __init__(self, replica_id: str):
        self.id = replica_id
        self.records: dict[tuple, StateRecord] = {}
        self.clock = 0
        # per-replica event counter; (replica, counter) names one write uniquely
        self.counter = 0

    def write(self, key: StateKey, value, owner: str, kind: Kind = Kind.FACT,
              origin: Optional[str] = None, version: Optional[int] = None) -> StateRecord:
        k = (StateKey(*key), kind)
        cur = self.records.get(k)
        vv = dict(cur.vv) if cur else {}
        self.counter = max(self.counter, vv.get(self.id, 0)) + 1
        vv[self.id] = self.counter
        self.clock += 1
        if version is None:
            version = (cur.version if cur is not None and cur.owner == owner else 0) + 1
        rec = StateRecord(k[0], kind, value, version, owner, self.clock,
                          Consistency.EVENTUAL, origin, vv_tuple(vv))
        self.records[k] = rec
        return rec

    def read(self, key, kind: Kind = Kind.FACT) -> Optional[StateRecord]:
        return self.records.get((StateKey(*key), kind))

    def receive(self, rec: StateRecord) -> bool:
        """Merge a remote record; returns True if local state changed."""
        if rec.timestamp > self.clock:
            self.clock = rec.timestamp
        k = (rec.key, rec.kind)
        cur = self.records.get(k)
        if cur is None:
            self.records[k] = rec
            return True
        won = merge(cur, rec)
        if won is cur:
            return False
        self.records[k] = won
        return True

    def digest(self) -> dict:
        """GossipDigest: key -> version summary."""
        return {k: _summary(r) for k, r in self.records.items()}

    def digest_bytes(self) -> bytes:
        items = sorted(
            ([list(k[0]), k[1].value], [list(map(list, s[0])), s[1], s[2], s[3]])
            for k, s in self.digest().items())
        return canonical_json(items)

    def snapshot_bytes(self) -> bytes:
        recs = sorted((r.to_json() for r in self.records.values()),
                      key=lambda d: (d["key"], d["kind"]))
        return canonical_json(recs)


def gossip_round(local: EventualReplica, peer: EventualReplica, reachable: bool = True) -> int:
    """Push-pull exchange between two replicas; returns records shipped."""
    if not reachable:
        raise RoundFailed(f"{peer.id} unreachable from {local.id}")
    mine = local.digest()
    theirs = peer.digest()
    to_peer = [local.records[k] for k, s in mine.items() if theirs.get(k) != s]
    to_local = [peer.records[k] for k, s in theirs.items() if mine.get(k) != s]
    for rec in to_peer:
        peer.receive(rec)
    for rec in to_local:
        local.receive(rec)
    return len(to_peer) + len(to_local)


class GossipCluster:
    """A set of eventual replicas plus a partition-aware network."""

    def __init__(self, size: int = 3, seed: int = 0, ids: Optional[Iterable[str]] = None):
        self.ids = list(ids) if ids is not None else [f"g{i}" for i in range(size)]
        self.replicas = {rid: EventualReplica(rid) for rid in self.ids}
        self.alive = set(self.ids)
        self.groups: Optional[dict] = None
        self.rng = random.Random(seed)
        self.rounds = 0
        self.failed_rounds = 0
        self.deliveries: list = []

    def reachable(self, a: str, b: str) -> bool:
        if a not in self.alive or b not in self.alive:
            return False
        return self.groups is None or self.groups.get(a) == self.groups.get(b)

    def partition(self, *groups) -> None:
        self.groups = {}
        for gi, group in enumerate(groups):
            for rid in group:
                self.groups[rid] = gi
        for i, rid in enumerate(self.ids):
            self.groups.setdefault(rid, len(groups) + i)

    def heal(self) -> None:
        self.groups = None

    def exchange(self, a: str, b: str) -> int:
        self.rounds += 1
        try:
            n = gossip_round(self.replicas[a], self.replicas[b], self.reachable(a, b))
        except RoundFailed:
            self.failed_rounds += 1
            raise
        self.deliveries.append((a, b))
        return n

    def run_round(self) -> int:
        """Every live replica gossips with one uniformly chosen live peer."""
        shipped = 0
        live = sorted(self.alive)
        for rid in live:
            peers = [p for p in live if p != rid]
            if not peers:
                continue
            peer = self.rng.choice(peers)
            try:
                shipped += self.exchange(rid, peer)
            except RoundFailed:
                pass
        return shipped

    def converged(self) -> bool:
        snaps = {self.replicas[r].snapshot_bytes() for r in self.ids}
        return len(snaps) == 1
