"""Ownership leases over contiguous key ranges."""
from __future__ import annotations

from bisect import bisect_right, insort
from typing import Optional

from ..errors import EpochStale, ValidationError, WrongCurrentOwner
from .keys import KeyRange
from .records import OwnershipLease


def _lt_end(a_end, b_end):
    """``a_end < b_end`` where ``None`` means +infinity."""
    if a_end is None:
        return False
    if b_end is None:
        return True
    return a_end < b_end


class LeaseTable:
    """Non-overlapping leases kept sorted by range start."""

    def __init__(self):
        self._starts: list[tuple] = []
        self._leases: list[OwnershipLease] = []

    def __iter__(self):
        return iter(list(self._leases))

    def __len__(self):
        return len(self._leases)

    def lease_for(self, key) -> Optional[OwnershipLease]:
        i = bisect_right(self._starts, tuple(key)) - 1
        if i < 0:
            return None
        lease = self._leases[i]
        end = lease.key_range.end
        if end is None or key < end:
            return lease
        return None

    def owner_of(self, key) -> Optional[str]:
        lease = self.lease_for(key)
        return None if lease is None else lease.owner

    def overlapping(self, rng: KeyRange) -> list[OwnershipLease]:
        # leases are disjoint and sorted, so overlap candidates are contiguous
        i = max(bisect_right(self._starts, rng.start) - 1, 0)
        out = []
        for lease in self._leases[i:]:
            if rng.end is not None and lease.key_range.start >= rng.end:
                break
            if lease.key_range.overlaps(rng):
                out.append(lease)
        return out

    def check_transfer(self, rng: KeyRange, frm: Optional[str], epoch: int) -> list[OwnershipLease]:
        if epoch < 1:
            raise ValidationError("lease epochs start at 1")
        current = self.overlapping(rng)
        if not current:
            if frm is not None:
                raise WrongCurrentOwner(f"range is unowned, expected from=None, got {frm!r}")
            return current
        if frm is None:
            raise WrongCurrentOwner(f"range is owned by {current[0].owner!r}")
        for lease in current:
            if lease.owner != frm:
                raise WrongCurrentOwner(f"range partly owned by {lease.owner!r}, not {frm!r}")
        # the current owner must hold the whole range, without holes
        cursor = rng.start
        for lease in current:
            if lease.key_range.start > cursor:
                raise WrongCurrentOwner(f"range has an unowned gap at {cursor!r}")
            cursor = lease.key_range.end
            if cursor is None:
                break
        if cursor is not None and _lt_end(cursor, rng.end):
            raise WrongCurrentOwner(f"range has an unowned tail from {cursor!r}")
        top = max(lease.epoch for lease in current)
        if epoch <= top:
            raise EpochStale(f"epoch {epoch} is not newer than current epoch {top}")
        return current

    def transfer(self, rng: KeyRange, frm: Optional[str], to: str, epoch: int) -> OwnershipLease:
        current = self.check_transfer(rng, frm, epoch)
        for lease in current:
            self._remove(lease)
            lr = lease.key_range
            if lr.start < rng.start:
                self._insert(OwnershipLease(KeyRange(lr.start, rng.start), lease.owner, lease.epoch))
            if rng.end is not None and _lt_end(rng.end, lr.end):
                self._insert(OwnershipLease(KeyRange(rng.end, lr.end), lease.owner, lease.epoch))
        new = OwnershipLease(rng, to, epoch)
        self._insert(new)
        return new

    def _insert(self, lease):
        i = bisect_right(self._starts, lease.key_range.start)
        self._starts.insert(i, lease.key_range.start)
        self._leases.insert(i, lease)

    def _remove(self, lease):
        i = self._leases.index(lease)
        del self._starts[i]
        del self._leases[i]
