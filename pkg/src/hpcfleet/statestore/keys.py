"""State keys and contiguous key ranges."""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Optional

from ..errors import ValidationError


class StateKey(NamedTuple):
    """(namespace, entity, property); tuple ordering is the key ordering."""

    namespace: str
    entity: str
    property: str

    @classmethod
    def of(cls, namespace, entity, prop) -> "StateKey":
        key = cls(namespace, entity, prop)
        validate_key(key)
        return key

    @classmethod
    def parse(cls, text: str) -> "StateKey":
        parts = text.strip("/").split("/")
        if len(parts) < 3:
            raise ValidationError(f"malformed key {text!r}: want namespace/entity/property")
        return cls.of(parts[0], "/".join(parts[1:-1]), parts[-1])

    def __str__(self):
        return f"{self.namespace}/{self.entity}/{self.property}"


def validate_key(key) -> None:
    if len(key) != 3 or not all(isinstance(p, str) and p for p in key):
        raise ValidationError(f"malformed key {key!r}")


def _succ(s: str) -> str:
    # immediate successor of s in string order
    return s + "\x00"


@dataclass(frozen=True)
class KeyRange:
    """Half-open interval ``[start, end)`` over the key ordering.

    Bounds are plain tuples (possibly shorter than three elements), so
    ``("node",)`` sorts before every key in the ``node`` namespace. ``end=None``
    is unbounded.
    """

    start: tuple
    end: Optional[tuple]

    def __post_init__(self):
        if self.end is not None and not tuple(self.start) < tuple(self.end):
            raise ValidationError(f"empty key range {self.start!r}..{self.end!r}")

    @classmethod
    def single(cls, key) -> "KeyRange":
        return cls(tuple(key), (key[0], key[1], _succ(key[2])))

    @classmethod
    def entity(cls, namespace: str, entity: str) -> "KeyRange":
        return cls((namespace, entity), (namespace, _succ(entity)))

    @classmethod
    def namespace(cls, namespace: str) -> "KeyRange":
        return cls((namespace,), (_succ(namespace),))

    @classmethod
    def everything(cls) -> "KeyRange":
        return cls((), None)

    def contains(self, key) -> bool:
        return self.start <= key and (self.end is None or key < self.end)

    def overlaps(self, other: "KeyRange") -> bool:
        a_before_b = self.end is not None and self.end <= other.start
        b_before_a = other.end is not None and other.end <= self.start
        return not (a_before_b or b_before_a)

    def to_json(self):
        return {"start": list(self.start), "end": None if self.end is None else list(self.end)}

    @classmethod
    def from_json(cls, obj) -> "KeyRange":
        return cls(tuple(obj["start"]), None if obj["end"] is None else tuple(obj["end"]))
