from .audit import AuditLog, verify_exclusivity, verify_monotone_versions
from .keys import KeyRange, StateKey
from .leases import LeaseTable
from .policy import ConsistencyPolicy
from .query import Condition, Predicate, can_power_off, ready_for_reboot
from .records import (
    Consistency,
    DiffEntry,
    Kind,
    OwnershipLease,
    ReadMode,
    ReadyResult,
    StateRecord,
)
from .store import StateStore

__all__ = [
    "AuditLog", "Condition", "Consistency", "ConsistencyPolicy", "DiffEntry", "KeyRange",
    "Kind", "LeaseTable", "OwnershipLease", "Predicate", "ReadMode", "ReadyResult",
    "StateKey", "StateRecord", "StateStore", "can_power_off", "ready_for_reboot",
    "verify_exclusivity", "verify_monotone_versions",
]
