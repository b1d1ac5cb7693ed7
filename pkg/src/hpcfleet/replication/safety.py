"""Invariant checks over simulated replicated-log histories."""
from __future__ import annotations

from collections import defaultdict

from .raft import ReplicaState, Role


class SafetyMonitor:
    """Watches replica states after every transition and records violations.

    * election safety: at most one leader per epoch
    * log matching: equal (index, epoch) implies equal prefixes
    * leader completeness: a new leader's log holds every committed entry
    * committed entries never change (state machine safety)
    """

    def __init__(self):
        self.leaders_by_epoch: dict[int, set] = defaultdict(set)
        self.committed: dict[int, tuple] = {}
        self._seen_commit: dict[str, int] = defaultdict(int)
        self._leader_epoch_seen: dict[str, int] = {}
        self.violations: list[str] = []

    def observe(self, s: ReplicaState) -> None:
        if s.role is Role.LEADER:
            leaders = self.leaders_by_epoch[s.current_epoch]
            if s.id not in leaders:
                leaders.add(s.id)
                if len(leaders) > 1:
                    self.violations.append(
                        f"election safety: epoch {s.current_epoch} has leaders {sorted(leaders)}")
                self._check_completeness(s)
        seen = self._seen_commit[s.id]
        if s.commit_index > seen:
            for i in range(seen + 1, s.commit_index + 1):
                e = s.log[i - 1]
                prior = self.committed.get(i)
                if prior is None:
                    self.committed[i] = (e.epoch, e.command)
                elif prior != (e.epoch, e.command):
                    self.violations.append(
                        f"committed entry {i} changed: {prior} vs {(e.epoch, e.command)} on {s.id}")
            self._seen_commit[s.id] = s.commit_index

    def _check_completeness(self, s: ReplicaState) -> None:
        for i, (epoch, cmd) in self.committed.items():
            if i > len(s.log) or (s.log[i - 1].epoch, s.log[i - 1].command) != (epoch, cmd):
                self.violations.append(
                    f"leader completeness: {s.id} leads epoch {s.current_epoch} without committed entry {i}")
                return

    def check_log_matching(self, states) -> None:
        states = list(states)
        for a_i, a in enumerate(states):
            for b in states[a_i + 1:]:
                n = min(len(a.log), len(b.log))
                top = 0
                for i in range(n, 0, -1):
                    if a.log[i - 1].epoch == b.log[i - 1].epoch:
                        top = i
                        break
                if top and a.log[:top] != b.log[:top]:
                    self.violations.append(f"log matching: {a.id} and {b.id} diverge below index {top}")

    @property
    def ok(self) -> bool:
        return not self.violations
