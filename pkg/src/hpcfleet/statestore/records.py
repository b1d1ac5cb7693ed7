from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Optional

from ..errors import ValidationError
from .keys import KeyRange, StateKey


class Kind(str, enum.Enum):
    FACT = "fact"
    DESIRE = "desire"


class Consistency(str, enum.Enum):
    STRONG = "strong"
    EVENTUAL = "eventual"


class ReadMode(str, enum.Enum):
    STRONG = "strong"
    LOCAL = "local"


def check_value(value):
    # bool is an int subclass; both are fine. Digests are strings.
    if isinstance(value, (bool, int, str)):
        return value
    raise ValidationError(f"unsupported value type {type(value).__name__}")


@dataclass(frozen=True, slots=True)
class StateRecord:
    key: StateKey
    kind: Kind
    value: object
    version: int
    owner: str
    timestamp: int
    consistency: Consistency
    origin: Optional[str] = None
    # sorted ((replica, counter), ...); only populated for eventual keys
    vv: tuple = ()

    def to_json(self) -> dict:
        return {
            "key": list(self.key),
            "kind": self.kind.value,
            "value": self.value,
            "version": self.version,
            "owner": self.owner,
            "timestamp": self.timestamp,
            "consistency": self.consistency.value,
            "origin": self.origin,
            "vv": [list(p) for p in self.vv],
        }

    @classmethod
    def from_json(cls, obj) -> "StateRecord":
        return cls(
            key=StateKey(*obj["key"]),
            kind=Kind(obj["kind"]),
            value=obj["value"],
            version=obj["version"],
            owner=obj["owner"],
            timestamp=obj["timestamp"],
            consistency=Consistency(obj["consistency"]),
            origin=obj.get("origin"),
            vv=tuple((r, c) for r, c in obj.get("vv", ())),
        )


@dataclass(frozen=True)
class OwnershipLease:
    key_range: KeyRange
    owner: str
    epoch: int

    def to_json(self):
        return {"range": self.key_range.to_json(), "owner": self.owner, "epoch": self.epoch}


@dataclass(frozen=True)
class DiffEntry:
    key: StateKey
    fact: Optional[StateRecord]
    desire: Optional[StateRecord]

    @property
    def fact_value(self):
        return None if self.fact is None else self.fact.value

    @property
    def desire_value(self):
        return None if self.desire is None else self.desire.value


@dataclass
class ReadyResult:
    ready: bool
    versions: dict = field(default_factory=dict)

    def __bool__(self):
        return self.ready
