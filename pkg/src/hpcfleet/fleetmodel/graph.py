"""Mutation graph: legal phase transitions and the shortest-path planner."""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from importlib import resources
from typing import Iterable, Optional

import yaml

from ..errors import InvalidTransition, Unreachable, ValidationError
from .phases import NodePhase


@dataclass(frozen=True)
class MutationEdge:
    src: NodePhase
    dst: NodePhase
    action: str
    duration: int = 1
    failure_phase: NodePhase = NodePhase.FAULTED
    # driven by the outside world (job end, crash); never planned
    external: bool = False

    def to_json(self) -> dict:
        return {"from": self.src.value, "to": self.dst.value, "action": self.action,
                "duration": self.duration, "failure_phase": self.failure_phase.value,
                "external": self.external}


class MutationGraph:
    def __init__(self, edges: Iterable[MutationEdge]):
        self.edges = tuple(edges)
        self._out: dict[NodePhase, list[MutationEdge]] = {p: [] for p in NodePhase}
        self._by_action: dict[tuple, MutationEdge] = {}
        for e in self.edges:
            if (e.src, e.action) in self._by_action:
                raise ValidationError(f"duplicate action {e.action!r} out of {e.src.value}")
            self._by_action[(e.src, e.action)] = e
            self._out[e.src].append(e)
        for lst in self._out.values():
            lst.sort(key=lambda e: (e.action, e.dst.value))
        self._plans: dict[tuple, tuple] = {}

    @classmethod
    def from_dict(cls, data: dict) -> "MutationGraph":
        edges = []
        for raw in data.get("edges") or []:
            try:
                srcs = raw["from"] if isinstance(raw["from"], list) else [raw["from"]]
                for src in srcs:
                    edges.append(MutationEdge(
                        NodePhase(src), NodePhase(raw["to"]), str(raw["action"]),
                        int(raw.get("duration", 1)),
                        NodePhase(raw.get("failure_phase", NodePhase.FAULTED.value)),
                        bool(raw.get("external", False))))
            except (KeyError, ValueError, TypeError) as exc:
                raise ValidationError(f"bad mutation edge {raw!r}: {exc}") from None
        return cls(edges)

    @classmethod
    def load(cls, path) -> "MutationGraph":
        with open(path) as fh:
            return cls.from_dict(yaml.safe_load(fh) or {})

    @classmethod
    def default(cls) -> "MutationGraph":
        text = resources.files(__package__).joinpath("data/default_graph.yaml").read_text()
        return cls.from_dict(yaml.safe_load(text))

    def outgoing(self, phase: NodePhase, include_external: bool = False) -> list:
        return [e for e in self._out[NodePhase(phase)] if include_external or not e.external]

    def edge(self, src: NodePhase, action: str) -> MutationEdge:
        e = self._by_action.get((NodePhase(src), action))
        if e is None:
            raise InvalidTransition(f"no {action!r} edge out of {NodePhase(src).value}")
        return e

    def actions(self) -> set:
        return {e.action for e in self.edges}

    def _distances_to(self, target: NodePhase) -> dict:
        rev: dict[NodePhase, list] = {p: [] for p in NodePhase}
        for e in self.edges:
            if not e.external:
                rev[e.dst].append(e.src)
        dist = {target: 0}
        q = deque([target])
        while q:
            p = q.popleft()
            for s in rev[p]:
                if s not in dist:
                    dist[s] = dist[p] + 1
                    q.append(s)
        return dist

    def plan_edges(self, current, desired) -> tuple:
        current, desired = NodePhase(current), NodePhase(desired)
        key = (current, desired)
        if key in self._plans:
            return self._plans[key]
        dist = self._distances_to(desired)
        if current not in dist:
            raise Unreachable(f"no path from {current.value} to {desired.value}")
        path = []
        at = current
        # greedy descent over the distance field gives the lexicographically
        # smallest action sequence among the shortest paths
        while at != desired:
            step = next(e for e in self.outgoing(at) if dist.get(e.dst) == dist[at] - 1)
            path.append(step)
            at = step.dst
        self._plans[key] = tuple(path)
        return self._plans[key]

    def plan(self, current, desired) -> list:
        return [e.action for e in self.plan_edges(current, desired)]


def plan_mutations(current, desired, graph: Optional[MutationGraph] = None) -> list:
    return (graph or MutationGraph.default()).plan(current, desired)
