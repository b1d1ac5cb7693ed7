"""Append-only audit log of every accepted store mutation."""
from __future__ import annotations

import threading

from ..framing import RecordLog, decode_records, encode_record
from .keys import KeyRange, StateKey
from .leases import LeaseTable
from .records import Kind, StateRecord


class AuditLog:
    """In-memory audit trail; ``to_bytes``/``persist`` emit framed records.

    Entries are ``(op, payload)`` pairs: ``("put", StateRecord)``,
    ``("retract", StateRecord)`` or ``("lease", (lease, from_owner))``.
    """

    def __init__(self):
        self._entries: list = []
        self._lock = threading.Lock()

    def append(self, op, payload):
        with self._lock:
            self._entries.append((op, payload))
            return len(self._entries) - 1

    def __len__(self):
        return len(self._entries)

    def entries(self):
        with self._lock:
            return list(self._entries)

    @staticmethod
    def entry_json(op, payload) -> dict:
        if op in ("put", "retract"):
            return {"op": op, "record": payload.to_json()}
        lease, frm = payload
        return {"op": "lease", "lease": lease.to_json(), "from": frm}

    def to_bytes(self) -> bytes:
        return b"".join(encode_record(self.entry_json(op, p)) for op, p in self.entries())

    def persist(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(self.to_bytes())


def load_audit(data: bytes) -> list[dict]:
    return list(decode_records(data))


def verify_exclusivity(entries) -> list[str]:
    """Replay an audit trail against its lease history.

    Returns one message per fact write whose owner did not hold the lease at
    that point of the history. Accepts in-memory entries or decoded JSON.
    """
    table = LeaseTable()
    problems = []
    for item in entries:
        if isinstance(item, dict):
            op = item["op"]
            if op == "lease":
                lj = item["lease"]
                table.transfer(KeyRange.from_json(lj["range"]), item["from"], lj["owner"], lj["epoch"])
                continue
            rec = StateRecord.from_json(item["record"])
        else:
            op, payload = item
            if op == "lease":
                lease, frm = payload
                table.transfer(lease.key_range, frm, lease.owner, lease.epoch)
                continue
            rec = payload
        if op == "put" and rec.kind is Kind.FACT:
            owner = table.owner_of(rec.key)
            if owner != rec.owner:
                problems.append(f"{StateKey(*rec.key)} written by {rec.owner!r} while lease held by {owner!r}")
    return problems


def verify_monotone_versions(entries) -> list[str]:
    last: dict = {}
    problems = []
    for op, rec in entries:
        if op != "put":
            continue
        k = (rec.key, rec.kind, rec.owner)
        prev = last.get(k, 0)
        if rec.version <= prev:
            problems.append(f"{rec.key} version {rec.version} after {prev} for {rec.owner}")
        last[k] = rec.version
    return problems


__all__ = ["AuditLog", "RecordLog", "load_audit", "verify_exclusivity", "verify_monotone_versions"]
