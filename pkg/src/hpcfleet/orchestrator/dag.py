"""Ordered startup and shutdown over a dependency graph."""
from __future__ import annotations

import heapq
from dataclasses import dataclass, field
from typing import Callable

import yaml

from ..errors import CyclicDependency, ReadinessFailed, ValidationError

STARTUP = "startup"
SHUTDOWN = "shutdown"


@dataclass(frozen=True)
class DependencyDag:
    """``edges`` are ``(a, b)`` pairs: ``a`` must be ready before ``b`` starts."""

    vertices: tuple
    edges: tuple = ()

    def __post_init__(self):
        verts = tuple(dict.fromkeys(self.vertices))
        object.__setattr__(self, "vertices", verts)
        object.__setattr__(self, "edges", tuple((a, b) for a, b in self.edges))
        known = set(verts)
        for a, b in self.edges:
            if a not in known or b not in known:
                raise ValidationError(f"edge {a}->{b} references an unknown vertex")
        self.order()

    @classmethod
    def from_dict(cls, d: dict) -> "DependencyDag":
        edges = [tuple(e) for e in d.get("edges") or []]
        for b, deps in (d.get("after") or {}).items():
            edges.extend((a, b) for a in deps)
        verts = list(d.get("vertices") or [])
        for a, b in edges:
            verts.extend([a, b])
        return cls(tuple(verts), tuple(edges))

    @classmethod
    def load(cls, path) -> "DependencyDag":
        with open(path) as fh:
            return cls.from_dict(yaml.safe_load(fh) or {})

    def predecessors(self, v) -> list:
        return sorted(a for a, b in self.edges if b == v)

    def successors(self, v) -> list:
        return sorted(b for a, b in self.edges if a == v)

    def order(self) -> list:
        """Topological order; ties go to the smallest vertex name."""
        indeg = {v: 0 for v in self.vertices}
        out: dict = {v: [] for v in self.vertices}
        for a, b in self.edges:
            indeg[b] += 1
            out[a].append(b)
        ready = [v for v, d in indeg.items() if d == 0]
        heapq.heapify(ready)
        order = []
        while ready:
            v = heapq.heappop(ready)
            order.append(v)
            for w in out[v]:
                indeg[w] -= 1
                if indeg[w] == 0:
                    heapq.heappush(ready, w)
        if len(order) != len(self.vertices):
            stuck = sorted(v for v, d in indeg.items() if d > 0)
            raise CyclicDependency(f"dependency cycle among {stuck}")
        return order


@dataclass
class SequenceReport:
    direction: str
    order: list = field(default_factory=list)
    results: dict = field(default_factory=dict)    # vertex -> ok | failed | skipped

    @property
    def ok(self) -> bool:
        return all(r == "ok" for r in self.results.values())

    def to_json(self) -> dict:
        return {"direction": self.direction, "order": self.order, "results": self.results}


def run_sequence(dag: DependencyDag, direction: str, act: Callable[[str], None],
                 ready: Callable[[str], bool], retries: int = 0) -> SequenceReport:
    """Start (or stop) vertices in dependency order.

    ``act`` starts a vertex on startup and stops it on shutdown; ``ready``
    verifies the result and is retried up to ``retries`` more times. A vertex
    that fails verification blocks everything that depends on it: dependents on
    startup, prerequisites on shutdown. Raises ``ReadinessFailed`` carrying the
    report if any vertex failed.
    """
    if direction not in (STARTUP, SHUTDOWN):
        raise ValidationError(f"direction must be {STARTUP} or {SHUTDOWN}")
    order = dag.order()
    if direction == SHUTDOWN:
        order.reverse()
    blockers = dag.predecessors if direction == STARTUP else dag.successors
    report = SequenceReport(direction)
    first_failure = None
    for v in order:
        if any(report.results.get(b) != "ok" for b in blockers(v)):
            report.results[v] = "skipped"
            continue
        report.order.append(v)
        act(v)
        ok = False
        for _ in range(retries + 1):
            if ready(v):
                ok = True
                break
        report.results[v] = "ok" if ok else "failed"
        if not ok and first_failure is None:
            first_failure = v
    if first_failure is not None:
        raise ReadinessFailed(first_failure, report)
    return report
