"""The central fact/desire store."""
from __future__ import annotations

import threading
from collections import defaultdict
from typing import Callable, Iterable, Optional

from ..digest import canonical_json
from ..errors import (
    ConsistencyMismatch,
    CrossStoreQuery,
    NotFound,
    NotOwner,
    StaleVersion,
    UnknownOrigin,
    ValidationError,
    VersionGap,
)
from .audit import AuditLog
from .keys import KeyRange, StateKey, validate_key
from .leases import LeaseTable
from .policy import ConsistencyPolicy
from .query import Predicate
from .records import (
    Consistency,
    DiffEntry,
    Kind,
    OwnershipLease,
    ReadMode,
    ReadyResult,
    StateRecord,
    check_value,
)

ORIGIN_KINDS = ("render", "emergency", "rollout", "operator")

DESIRE_OWNER = "config"


class StateStore:
    """Facts and desires with per-key ownership, versions and consistency class.

    All mutations serialize on one lock (the logical single writer). Records are
    immutable, so readers never observe a torn record.
    """

    def __init__(self, store_id: str = "main", policy: Optional[ConsistencyPolicy] = None,
                 replica_id: str = "r0"):
        self.store_id = store_id
        self.replica_id = replica_id
        self.policy = policy or ConsistencyPolicy()
        self.leases = LeaseTable()
        self.audit = AuditLog()
        self._facts: dict[StateKey, StateRecord] = {}
        self._desires: dict[StateKey, StateRecord] = {}
        self._desires_by_entity: dict[str, dict[StateKey, StateRecord]] = defaultdict(dict)
        self._owner_versions: dict[tuple, int] = {}
        self._origins: dict[str, str] = {}
        self._clock = 0
        self._lock = threading.RLock()
        self._listeners: list[Callable[[StateRecord], None]] = []

    # -- helpers -----------------------------------------------------------------

    def subscribe(self, callback: Callable[[StateRecord], None]) -> None:
        self._listeners.append(callback)

    def unsubscribe(self, callback) -> None:
        if callback in self._listeners:
            self._listeners.remove(callback)

    def _notify(self, record):
        for cb in self._listeners:
            cb(record)

    def _tick(self, timestamp=None) -> int:
        if timestamp is None:
            self._clock += 1
        else:
            self._clock = max(self._clock, timestamp)
        return self._clock

    def register_origin(self, origin: str, kind: str = "render") -> None:
        if kind not in ORIGIN_KINDS:
            raise ValidationError(f"unknown origin kind {kind!r}")
        with self._lock:
            self._origins[origin] = kind

    def origin_kind(self, origin) -> Optional[str]:
        return self._origins.get(origin)

    def latest_version(self, owner: str, key) -> int:
        return self._owner_versions.get((key, owner), 0)

    def next_version(self, owner: str, key) -> int:
        return self.latest_version(owner, key) + 1

    # -- writes --------------------------------------------------------------------

    def put_fact(self, owner: str, key, value, version: Optional[int] = None,
                 *, timestamp: Optional[int] = None) -> StateRecord:
        """Store a fact written by the lease holder for ``key``.

        ``version`` must be exactly one past the owner's latest version for the
        key; ``None`` picks that value.
        """
        if not isinstance(key, StateKey):
            validate_key(key)
            key = StateKey(*key)
        elif not (key[0] and key[1] and key[2]):
            validate_key(key)
        check_value(value)
        with self._lock:
            lease = self.leases.lease_for(key)
            if lease is None or lease.owner != owner:
                holder = None if lease is None else lease.owner
                raise NotOwner(f"{owner!r} does not hold the lease for {key} (holder: {holder!r})")
            vk = (key, owner)
            latest = self._owner_versions.get(vk, 0)
            if version is None:
                version = latest + 1
            elif version <= latest:
                raise StaleVersion(f"{key}: version {version} <= latest {latest} for {owner!r}")
            elif version != latest + 1:
                raise VersionGap(f"{key}: version {version} skips past latest {latest} + 1")
            consistency = self.policy.classify(key)
            ts = self._tick(timestamp)
            vv = ((self.replica_id, ts),) if consistency is Consistency.EVENTUAL else ()
            rec = StateRecord(key, Kind.FACT, value, version, owner, ts, consistency, None, vv)
            self._owner_versions[vk] = version
            self._facts[key] = rec
            self.audit.append("put", rec)
            self._notify(rec)
            return rec

    def put_desire(self, key, value, origin: str, *, timestamp: Optional[int] = None) -> StateRecord:
        if not isinstance(key, StateKey):
            validate_key(key)
            key = StateKey(*key)
        else:
            validate_key(key)
        check_value(value)
        with self._lock:
            if origin not in self._origins:
                raise UnknownOrigin(f"origin {origin!r} is not a completed render or registered origin")
            prev = self._desires.get(key)
            version = 1 if prev is None else prev.version + 1
            consistency = self.policy.classify(key)
            ts = self._tick(timestamp)
            vv = ((self.replica_id, ts),) if consistency is Consistency.EVENTUAL else ()
            rec = StateRecord(key, Kind.DESIRE, value, version, DESIRE_OWNER, ts, consistency, origin, vv)
            self._desires[key] = rec
            self._desires_by_entity[key.entity][key] = rec
            self.audit.append("put", rec)
            self._notify(rec)
            return rec

    def retract_desire(self, key, origin: str) -> Optional[StateRecord]:
        key = StateKey(*key)
        with self._lock:
            if origin not in self._origins:
                raise UnknownOrigin(f"origin {origin!r} is not registered")
            prev = self._desires.pop(key, None)
            if prev is None:
                return None
            self._desires_by_entity[key.entity].pop(key, None)
            self._tick()
            self.audit.append("retract", prev)
            self._notify(prev)
            return prev

    def transfer_ownership(self, key_range: KeyRange, frm: Optional[str], to: str,
                           epoch: int) -> OwnershipLease:
        with self._lock:
            lease = self.leases.transfer(key_range, frm, to, epoch)
            self._tick()
            self.audit.append("lease", (lease, frm))
            return lease

    # -- reads -----------------------------------------------------------------------

    def peek(self, key, kind: Kind = Kind.FACT) -> Optional[StateRecord]:
        table = self._facts if kind is Kind.FACT else self._desires
        return table.get(key)

    def value(self, key, kind: Kind = Kind.FACT, default=None):
        rec = self.peek(key, kind)
        return default if rec is None else rec.value

    def get(self, key, kind: Kind = Kind.FACT, read_mode: ReadMode = ReadMode.LOCAL) -> StateRecord:
        key = StateKey(*key)
        kind = Kind(kind)
        read_mode = ReadMode(read_mode)
        if read_mode is ReadMode.STRONG and self.policy.classify(key) is not Consistency.STRONG:
            raise ConsistencyMismatch(f"{key} is eventually consistent; strong reads are not offered")
        rec = self.peek(key, kind)
        if rec is None:
            raise NotFound(f"no {kind.value} for {key}")
        return rec

    def diff(self, entity: str) -> list[DiffEntry]:
        """Desired keys of ``entity`` whose fact is absent or different."""
        out = []
        with self._lock:
            for key, desire in self._desires_by_entity.get(entity, {}).items():
                fact = self._facts.get(key)
                if fact is None or fact.value != desire.value:
                    out.append(DiffEntry(key, fact, desire))
        out.sort(key=lambda d: d.key)
        return out

    def desires_of(self, entity: str) -> dict:
        return dict(self._desires_by_entity.get(entity, {}))

    def desired_entities(self) -> list[str]:
        return sorted(e for e, d in self._desires_by_entity.items() if d)

    def query_ready(self, predicate: Predicate) -> ReadyResult:
        for cond in predicate.conditions:
            if cond.store_id != self.store_id:
                raise CrossStoreQuery(
                    f"predicate {predicate.name!r} references store {cond.store_id!r}; "
                    f"this store is {self.store_id!r}")
        _ = predicate.entity
        versions = {}
        ok = True
        with self._lock:
            for cond in predicate.conditions:
                rec = self.peek(cond.key, cond.kind)
                versions[cond.key] = None if rec is None else rec.version
                if not cond.holds(None if rec is None else rec.value):
                    ok = False
        return ReadyResult(ok, versions)

    def scan(self, namespace: Optional[str] = None, kind: Kind = Kind.FACT) -> Iterable[StateRecord]:
        table = self._facts if kind is Kind.FACT else self._desires
        with self._lock:
            recs = [r for k, r in table.items() if namespace is None or k[0] == namespace]
        recs.sort(key=lambda r: r.key)
        return recs

    def snapshot_bytes(self) -> bytes:
        """Canonical serialization of current facts and desires."""
        with self._lock:
            facts = sorted((r.to_json() for r in self._facts.values()), key=lambda d: d["key"])
            desires = sorted((r.to_json() for r in self._desires.values()), key=lambda d: d["key"])
        return canonical_json({"facts": facts, "desires": desires})

    def __len__(self):
        return len(self._facts) + len(self._desires)
