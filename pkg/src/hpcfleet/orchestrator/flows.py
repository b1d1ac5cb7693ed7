"""Operator-defined automation flows: a trigger over a node's facts and actions to run."""
from __future__ import annotations

import operator
from dataclasses import dataclass, field
from importlib import resources
from typing import Optional

import yaml

from ..errors import DuplicateName, ValidationError
from ..statestore.keys import StateKey

_OPS = {"==": operator.eq, "!=": operator.ne, "<": operator.lt, "<=": operator.le,
        ">": operator.gt, ">=": operator.ge}
CHANGED = "changed"


@dataclass(frozen=True)
class Trigger:
    """``key`` is a property of the node (``phase``) or ``namespace/property``."""

    key: str
    op: str
    value: object = None

    def __post_init__(self):
        if self.op not in _OPS and self.op != CHANGED:
            raise ValidationError(f"unknown trigger op {self.op!r}")
        parts = self.key.split("/")
        if len(parts) > 2 or not all(parts):
            raise ValidationError(f"trigger key {self.key!r} must be property or namespace/property")

    def state_key(self, node: str) -> StateKey:
        parts = self.key.split("/")
        ns, prop = ("node", parts[0]) if len(parts) == 1 else parts
        return StateKey(ns, node, prop)


@dataclass(frozen=True)
class FlowDefinition:
    name: str
    trigger: tuple
    actions: tuple
    enabled: bool = True

    @classmethod
    def from_dict(cls, d: dict) -> "FlowDefinition":
        try:
            trig = d["trigger"]
            if isinstance(trig, dict):
                trig = [trig]
            triggers = tuple(Trigger(str(t["key"]), t.get("op", "=="), t.get("value")) for t in trig)
            return cls(str(d["name"]), triggers, tuple(d["actions"]), bool(d.get("enabled", True)))
        except (KeyError, TypeError) as exc:
            raise ValidationError(f"malformed flow {d!r}: {exc}") from None


def load_flows(path=None) -> list:
    if path is None:
        text = resources.files(__package__).joinpath("data/flows.yaml").read_text()
    else:
        with open(path) as fh:
            text = fh.read()
    return [FlowDefinition.from_dict(d) for d in (yaml.safe_load(text) or {}).get("flows", [])]


class FlowRegistry:
    """Holds flows and evaluates them edge-triggered: a flow fires for a node
    when its trigger becomes true (or, for ``changed``, when the fact's version
    moves), not on every pass while it stays true."""

    def __init__(self, known_actions):
        self.known = set(known_actions)
        self.flows: dict[str, FlowDefinition] = {}
        self._last: dict = {}

    def register(self, flow: FlowDefinition) -> str:
        if flow.name in self.flows:
            raise DuplicateName(f"flow {flow.name!r} already registered")
        bad = [a for a in flow.actions if a not in self.known]
        if bad or not flow.actions:
            raise ValidationError(f"flow {flow.name!r}: unknown actions {bad}")
        self.flows[flow.name] = flow
        return flow.name

    def set_enabled(self, name: str, enabled: bool) -> None:
        f = self.flows[name]
        self.flows[name] = FlowDefinition(f.name, f.trigger, f.actions, enabled)

    def evaluate(self, store, node: str) -> list:
        """Return actions of flows that fire for ``node`` now."""
        fired = []
        for name in sorted(self.flows):
            flow = self.flows[name]
            if not flow.enabled:
                continue
            sig = tuple(self._observe(store, t, node) for t in flow.trigger)
            prev = self._last.get((name, node))
            self._last[(name, node)] = sig
            conds = [v for t, v in zip(flow.trigger, sig) if t.op != CHANGED]
            if not all(conds):
                continue
            moved = [(t, v, p) for t, v, p in zip(flow.trigger, sig, prev or sig) if t.op == CHANGED]
            if moved:
                fire = prev is not None and all(v is not None and v != p for _, v, p in moved)
            else:
                fire = prev is None or not all(prev)
            if fire:
                fired.extend(flow.actions)
        return fired

    @staticmethod
    def _observe(store, t: Trigger, node: str):
        rec = store.peek(t.state_key(node))
        if t.op == CHANGED:
            return None if rec is None else rec.version
        if rec is None:
            return False
        try:
            return bool(_OPS[t.op](rec.value, t.value))
        except TypeError:
            return False
