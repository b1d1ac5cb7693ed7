"""Precedence-ordered configuration layers and their merge."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Optional

import yaml

from ..digest import digest_of
from ..errors import AmbiguousPrecedence, ValidationError

PRECEDENCE = ("base", "site", "system", "node")
RANK = {name: i for i, name in enumerate(PRECEDENCE)}


def flatten(tree, prefix: str = "") -> dict:
    """Nested mappings become dotted keys; lists and scalars are leaves.

    Keys that already contain dots are taken as paths, so flat and nested
    spellings of one layer are equivalent.
    """
    out = {}
    if not isinstance(tree, dict):
        raise ValidationError(f"layer values must be a mapping, got {type(tree).__name__}")
    for k, v in tree.items():
        k = str(k)
        if not all(k.split(".")):
            raise ValidationError(f"config key {k!r} has an empty path segment")
        path = f"{prefix}.{k}" if prefix else k
        sub = flatten(v, path) if isinstance(v, dict) and v else {path: v}
        for sk, sv in sub.items():
            if sk in out:
                raise ValidationError(f"config key {sk!r} is defined twice in one layer")
            out[sk] = sv
    return out


@dataclass(frozen=True)
class ConfigLayer:
    name: str
    precedence: str
    values: dict
    scope: Optional[str] = None     # node id for node layers, else None
    version: str = field(default="", compare=False)

    def __post_init__(self):
        if self.precedence not in RANK:
            raise ValidationError(f"layer {self.name!r}: unknown precedence {self.precedence!r}")
        if self.precedence == "node" and not self.scope:
            raise ValidationError(f"node layer {self.name!r} needs a node scope")
        if self.precedence != "node" and self.scope not in (None, "global"):
            raise ValidationError(f"layer {self.name!r}: only node layers take a scope")
        flat = flatten(self.values)
        object.__setattr__(self, "values", dict(sorted(flat.items())))
        if self.precedence != "node":
            object.__setattr__(self, "scope", None)
        object.__setattr__(self, "version", digest_of(
            {"name": self.name, "precedence": self.precedence, "scope": self.scope,
             "values": self.values}))

    @property
    def rank(self) -> int:
        return RANK[self.precedence]

    @classmethod
    def from_doc(cls, doc: dict) -> "ConfigLayer":
        try:
            return cls(str(doc["layer"]), doc["precedence"], doc.get("values") or {},
                       doc.get("scope"))
        except KeyError as exc:
            raise ValidationError(f"layer document missing field {exc}") from None

    def to_doc(self) -> dict:
        doc = {"layer": self.name, "precedence": self.precedence, "values": self.values}
        if self.scope:
            doc["scope"] = self.scope
        return doc


def load_layers(path) -> list:
    with open(path) as fh:
        return [ConfigLayer.from_doc(d) for d in yaml.safe_load_all(fh) if d]


def dump_layers(layers, path) -> None:
    with open(path, "w") as fh:
        yaml.safe_dump_all([l.to_doc() for l in layers], fh, sort_keys=True)


@dataclass
class EffectiveConfig:
    values: dict                 # fleet-wide key -> value
    winners: dict                # key -> layer name
    node_values: dict            # node -> {key: value} from node layers
    node_winners: dict
    stack_version: str

    def for_node(self, node: str) -> dict:
        out = dict(self.values)
        out.update(self.node_values.get(node, {}))
        return out

    def winner(self, key: str, node: Optional[str] = None) -> str:
        if node is not None and key in self.node_values.get(node, {}):
            return self.node_winners[node][key]
        return self.winners[key]

    def get(self, key, default=None, node: Optional[str] = None):
        if node is not None and key in self.node_values.get(node, {}):
            return self.node_values[node][key]
        return self.values.get(key, default)


def merge_layers(stack: Iterable[ConfigLayer]) -> EffectiveConfig:
    stack = list(stack)
    names = [l.name for l in stack]
    if len(set(names)) != len(names):
        raise ValidationError("layer names must be unique within a stack")
    values: dict = {}
    winners: dict = {}
    ranks: dict = {}
    node_values: dict = {}
    node_winners: dict = {}
    for layer in sorted(stack, key=lambda l: (l.rank, l.name)):
        if layer.precedence == "node":
            tv = node_values.setdefault(layer.scope, {})
            tw = node_winners.setdefault(layer.scope, {})
        else:
            tv, tw = values, winners
        for k, v in layer.values.items():
            if k in tw and ranks.get((layer.scope, k)) == layer.rank:
                raise AmbiguousPrecedence(
                    f"{k!r} defined by {tw[k]!r} and {layer.name!r}, both {layer.precedence}"
                    + (f" for {layer.scope}" if layer.scope else ""))
            tv[k] = v
            tw[k] = layer.name
            ranks[(layer.scope, k)] = layer.rank
    version = digest_of(sorted(l.version for l in stack))
    return EffectiveConfig(values, winners, node_values, node_winners, version)
