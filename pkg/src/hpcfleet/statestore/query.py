"""Multi-key readiness predicates evaluated against one store snapshot."""
from __future__ import annotations

import operator
from dataclasses import dataclass, field

from ..errors import ValidationError
from .keys import StateKey
from .records import Kind

_OPS = {
    "==": operator.eq,
    "!=": operator.ne,
    "<": operator.lt,
    "<=": operator.le,
    ">": operator.gt,
    ">=": operator.ge,
}


@dataclass(frozen=True)
class Condition:
    store_id: str
    key: StateKey
    op: str
    value: object
    kind: Kind = Kind.FACT
    # value assumed when the record is absent; None means "absent fails"
    default: object = None

    def __post_init__(self):
        if self.op not in _OPS:
            raise ValidationError(f"unknown comparison {self.op!r}")

    def holds(self, current) -> bool:
        if current is None:
            current = self.default
            if current is None:
                return False
        try:
            return bool(_OPS[self.op](current, self.value))
        except TypeError:
            return False


@dataclass(frozen=True)
class Predicate:
    name: str
    conditions: tuple = field(default_factory=tuple)

    @property
    def entity(self):
        ents = {c.key.entity for c in self.conditions}
        if len(ents) != 1:
            raise ValidationError(f"predicate {self.name!r} must reference exactly one entity")
        return ents.pop()


def ready_for_reboot(store, node_id: str) -> Predicate:
    """Node is idle: services up and no jobs placed on it."""
    return Predicate(
        "ready-for-reboot",
        (
            Condition(store.store_id, StateKey("node", node_id, "phase"), "==", "ServicesReady"),
            Condition(store.store_id, StateKey("job", node_id, "count"), "==", 0, default=0),
        ),
    )


def can_power_off(store, node_id: str) -> Predicate:
    return Predicate(
        "can-power-off",
        (
            Condition(store.store_id, StateKey("node", node_id, "phase"), "!=", "JobRunning"),
            Condition(store.store_id, StateKey("job", node_id, "count"), "==", 0, default=0),
        ),
    )
