"""Deterministic in-process simulation of a replicated-log cluster.

Messages travel through a tick-based network model with crash and partition
faults. Every replica transition goes through the pure functions in
``raft.py``; the cluster only routes messages and keeps time.
"""
from __future__ import annotations

import heapq
import random
from typing import Callable, Optional

from ..errors import NoQuorum, NotLeader
from . import raft
from .raft import LogEntry, ReplicaState, Role
from .safety import SafetyMonitor


class RaftCluster:
    def __init__(self, size: int = 3, seed: int = 0, *,
                 apply: Optional[Callable[[str, LogEntry], None]] = None,
                 on_restart: Optional[Callable[[str], None]] = None,
                 loss: float = 0.0, max_delay: int = 2, record_deliveries: bool = False):
        self.ids = [f"s{i}" for i in range(size)]
        self.states: dict[str, ReplicaState] = {
            rid: raft.new_replica(rid, self.ids, seed) for rid in self.ids}
        self.alive = set(self.ids)
        self.groups: Optional[dict[str, int]] = None
        self.now = 0
        self.rng = random.Random(seed)
        self.loss = loss
        self.max_delay = max(1, max_delay)
        self._queue: list = []
        self._seq = 0
        self.monitor = SafetyMonitor()
        self._apply = apply
        self._on_restart = on_restart
        self.applied = {rid: 0 for rid in self.ids}
        self.deliveries: Optional[list] = [] if record_deliveries else None
        self.dropped_by_fault = 0

    # -- faults ----------------------------------------------------------------

    def connected(self, a: str, b: str) -> bool:
        if a not in self.alive or b not in self.alive:
            return False
        if self.groups is None:
            return True
        return self.groups.get(a) == self.groups.get(b)

    def partition(self, *groups) -> None:
        self.groups = {}
        for gi, group in enumerate(groups):
            for rid in group:
                self.groups[rid] = gi
        # replicas left out of every group are isolated on their own
        for rid in self.ids:
            if rid not in self.groups:
                self.groups[rid] = len(groups) + self.ids.index(rid)

    def heal(self) -> None:
        self.groups = None

    def crash(self, rid: str) -> None:
        self.alive.discard(rid)

    def recover(self, rid: str) -> None:
        if rid in self.alive:
            return
        self.states[rid] = raft.restart(self.states[rid])
        self.alive.add(rid)
        self.applied[rid] = 0
        if self._on_restart:
            self._on_restart(rid)
        self._apply_committed(rid)

    # -- execution -----------------------------------------------------------------

    def _send(self, msgs) -> None:
        for m in msgs:
            if self.loss and self.rng.random() < self.loss:
                continue
            delay = self.rng.randint(1, self.max_delay)
            self._seq += 1
            heapq.heappush(self._queue, (self.now + delay, self._seq, m))

    def _set(self, rid: str, state: ReplicaState) -> None:
        self.states[rid] = state
        self.monitor.observe(state)
        if state.commit_index > self.applied[rid]:
            self._apply_committed(rid)

    def _apply_committed(self, rid: str) -> None:
        s = self.states[rid]
        start = self.applied[rid]
        if self._apply is not None:
            for e in s.log[start:s.commit_index]:
                self._apply(rid, e)
        self.applied[rid] = s.commit_index

    def tick(self) -> None:
        self.now += 1
        q = self._queue
        while q and q[0][0] <= self.now:
            _, _, m = heapq.heappop(q)
            if not self.connected(m.src, m.dst):
                self.dropped_by_fault += 1
                continue
            if self.deliveries is not None:
                self.deliveries.append((self.now, m.src, m.dst))
            s, out = raft.step(self.states[m.dst], m)
            self._set(m.dst, s)
            self._send(out)
        for rid in self.ids:
            if rid in self.alive:
                s, out = raft.tick(self.states[rid])
                self._set(rid, s)
                self._send(out)

    def run(self, ticks: int) -> None:
        for _ in range(ticks):
            self.tick()

    def run_until(self, predicate: Callable[[], bool], max_ticks: int) -> bool:
        for _ in range(max_ticks):
            if predicate():
                return True
            self.tick()
        return predicate()

    # -- client surface ----------------------------------------------------------------

    def leader(self) -> Optional[str]:
        best = None
        for rid in self.ids:
            s = self.states[rid]
            if rid in self.alive and s.role is Role.LEADER:
                if best is None or s.current_epoch > self.states[best].current_epoch:
                    best = rid
        return best

    def submit(self, command: str, via: Optional[str] = None) -> LogEntry:
        rid = via or self.leader()
        if rid is None or rid not in self.alive:
            raise NotLeader("no reachable leader", leader_hint=None)
        s, entry = raft.client_append(self.states[rid], command)
        self._set(rid, s)
        return entry

    def is_committed(self, entry: LogEntry) -> bool:
        return self.monitor.committed.get(entry.index) == (entry.epoch, entry.command)

    def propose(self, command: str, via: Optional[str] = None, max_ticks: int = 100) -> int:
        """Append ``command`` and wait until a majority holds it.

        ``via`` names the replica the client reached; if that replica is not the
        leader the call fails with ``NotLeader`` carrying its leader hint.
        Raises ``NoQuorum`` if the entry is not committed within ``max_ticks``.
        """
        deadline = self.now + max_ticks
        if via is not None:
            if via not in self.alive:
                raise NoQuorum(f"{via} is down")
            if self.states[via].role is not Role.LEADER:
                raise NotLeader(f"{via} is not the leader", leader_hint=self.states[via].leader_id)
        else:
            while self.leader() is None:
                if self.now >= deadline:
                    raise NoQuorum("no leader elected before the deadline")
                self.tick()
            via = self.leader()
        entry = self.submit(command, via)
        while not self.is_committed(entry):
            if self.now >= deadline:
                raise NoQuorum(f"entry {entry.index} not acknowledged by a majority")
            self.tick()
        return entry.index

    def holders(self, entry: LogEntry) -> set:
        """Replicas whose log contains ``entry``."""
        out = set()
        for rid, s in self.states.items():
            if entry.index <= len(s.log) and s.log[entry.index - 1] == entry:
                out.add(rid)
        return out

    def check_log_matching(self) -> None:
        self.monitor.check_log_matching(self.states.values())
