"""Leader-based replicated log as pure transition functions.

A replica is an immutable ``ReplicaState``; ``step`` and ``tick`` return a new
state plus outbound messages and never mutate their inputs, so a simulator can
replay any history deterministically. Election timeouts are drawn from a
splitmix64 stream carried inside the state.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from typing import Optional

from ..errors import NotLeader
from .messages import (
    APPEND_REPLY,
    APPEND_REQUEST,
    VOTE_REPLY,
    VOTE_REQUEST,
    Message,
    well_formed,
)

ELECTION_TIMEOUT_MIN = 5
ELECTION_TIMEOUT_MAX = 10

_MASK = 0xFFFFFFFFFFFFFFFF


class Role(str, enum.Enum):
    FOLLOWER = "follower"
    CANDIDATE = "candidate"
    LEADER = "leader"


@dataclass(frozen=True, slots=True)
class LogEntry:
    index: int
    epoch: int
    command: str


@dataclass(frozen=True, slots=True)
class ReplicaState:
    id: str
    peers: tuple
    role: Role = Role.FOLLOWER
    current_epoch: int = 0
    voted_for: Optional[str] = None
    log: tuple = ()
    commit_index: int = 0
    leader_id: Optional[str] = None
    votes: frozenset = frozenset()
    next_index: dict = field(default_factory=dict)
    match_index: dict = field(default_factory=dict)
    elapsed: int = 0
    timeout: int = ELECTION_TIMEOUT_MIN
    rng: int = 0
    dropped: int = 0

    @property
    def last_index(self) -> int:
        return len(self.log)

    @property
    def last_epoch(self) -> int:
        return self.log[-1].epoch if self.log else 0

    @property
    def cluster_size(self) -> int:
        return len(self.peers) + 1

    def epoch_at(self, index: int) -> int:
        return self.log[index - 1].epoch if 0 < index <= len(self.log) else 0


def _splitmix(x: int) -> tuple[int, int]:
    x = (x + 0x9E3779B97F4A7C15) & _MASK
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return x, z ^ (z >> 31)


def _draw_timeout(rng: int) -> tuple[int, int]:
    rng, out = _splitmix(rng)
    span = ELECTION_TIMEOUT_MAX - ELECTION_TIMEOUT_MIN + 1
    return rng, ELECTION_TIMEOUT_MIN + out % span


def new_replica(replica_id: str, members, seed: int = 0) -> ReplicaState:
    peers = tuple(sorted(m for m in members if m != replica_id))
    rng = seed & _MASK
    for ch in replica_id.encode():
        rng = (rng * 131 + ch) & _MASK
    rng, timeout = _draw_timeout(rng)
    return ReplicaState(id=replica_id, peers=peers, timeout=timeout, rng=rng)


def restart(s: ReplicaState) -> ReplicaState:
    """Crash recovery: epoch, vote, log and commit index survive; the rest resets."""
    rng, timeout = _draw_timeout(s.rng)
    return replace(s, role=Role.FOLLOWER, leader_id=None, votes=frozenset(), next_index={},
                   match_index={}, elapsed=0, timeout=timeout, rng=rng)


def _majority(s: ReplicaState) -> int:
    return s.cluster_size // 2 + 1


def _append_for(s: ReplicaState, peer: str) -> Message:
    nxt = s.next_index.get(peer, s.last_index + 1)
    prev = nxt - 1
    entries = [[e.epoch, e.command] for e in s.log[prev:]]
    return Message(APPEND_REQUEST, s.id, peer, s.current_epoch, {
        "prev_index": prev,
        "prev_epoch": s.epoch_at(prev),
        "entries": entries,
        "leader_commit": s.commit_index,
    })


def _broadcast_append(s: ReplicaState) -> list:
    return [_append_for(s, p) for p in s.peers]


def _become_leader(s: ReplicaState) -> tuple[ReplicaState, list]:
    # no no-op entry on election: earlier-epoch entries commit with the next
    # client command, and the first command of a fresh cluster gets index 1
    s = replace(
        s, role=Role.LEADER, leader_id=s.id, elapsed=0,
        next_index={p: s.last_index + 1 for p in s.peers},
        match_index={p: 0 for p in s.peers},
    )
    return s, _broadcast_append(s)


def _start_election(s: ReplicaState) -> tuple[ReplicaState, list]:
    rng, timeout = _draw_timeout(s.rng)
    s = replace(s, role=Role.CANDIDATE, current_epoch=s.current_epoch + 1, voted_for=s.id,
                votes=frozenset([s.id]), leader_id=None, elapsed=0, timeout=timeout, rng=rng)
    if len(s.votes) >= _majority(s):
        return _become_leader(s)
    req = {"last_index": s.last_index, "last_epoch": s.last_epoch}
    return s, [Message(VOTE_REQUEST, s.id, p, s.current_epoch, dict(req)) for p in s.peers]


def tick(s: ReplicaState) -> tuple[ReplicaState, list]:
    """Advance one simulated tick: heartbeats for leaders, elections otherwise."""
    if s.role is Role.LEADER:
        return replace(s, elapsed=0), _broadcast_append(s)
    elapsed = s.elapsed + 1
    if elapsed >= s.timeout:
        return _start_election(replace(s, elapsed=elapsed))
    return replace(s, elapsed=elapsed), []


def client_append(s: ReplicaState, command: str) -> tuple[ReplicaState, LogEntry]:
    """Leader-side append of a client command (not yet committed)."""
    if s.role is not Role.LEADER:
        raise NotLeader(f"{s.id} is not the leader", leader_hint=s.leader_id)
    entry = LogEntry(len(s.log) + 1, s.current_epoch, command)
    s = replace(s, log=s.log + (entry,))
    return _advance_commit(s), entry


def _adopt_epoch(s: ReplicaState, epoch: int) -> ReplicaState:
    if epoch > s.current_epoch:
        return replace(s, current_epoch=epoch, role=Role.FOLLOWER, voted_for=None,
                       votes=frozenset(), leader_id=None)
    return s


def _advance_commit(s: ReplicaState) -> ReplicaState:
    if s.role is not Role.LEADER:
        return s
    need = _majority(s)
    n = s.last_index
    matches = sorted([s.last_index] + [s.match_index.get(p, 0) for p in s.peers], reverse=True)
    candidate = min(matches[need - 1], n)
    # only entries from the current epoch are committed by counting replicas
    while candidate > s.commit_index:
        if s.log[candidate - 1].epoch == s.current_epoch:
            return replace(s, commit_index=candidate)
        candidate -= 1
    return s


def step(s: ReplicaState, msg: Message) -> tuple[ReplicaState, list]:
    """Consume one message. Malformed or misaddressed messages are dropped and counted."""
    if not well_formed(msg) or msg.dst != s.id or msg.src not in s.peers:
        return replace(s, dropped=s.dropped + 1), []
    s = _adopt_epoch(s, msg.epoch)
    t = msg.type
    p = msg.payload
    if t == VOTE_REQUEST:
        up_to_date = (p["last_epoch"], p["last_index"]) >= (s.last_epoch, s.last_index)
        grant = (msg.epoch == s.current_epoch and s.voted_for in (None, msg.src) and up_to_date)
        if grant:
            s = replace(s, voted_for=msg.src, elapsed=0)
        return s, [Message(VOTE_REPLY, s.id, msg.src, s.current_epoch, {"granted": grant})]
    if t == VOTE_REPLY:
        if s.role is Role.CANDIDATE and msg.epoch == s.current_epoch and p["granted"]:
            s = replace(s, votes=s.votes | {msg.src})
            if len(s.votes) >= _majority(s):
                return _become_leader(s)
        return s, []
    if t == APPEND_REQUEST:
        return _on_append(s, msg)
    return _on_append_reply(s, msg)


def _on_append(s: ReplicaState, msg: Message):
    p = msg.payload
    if msg.epoch < s.current_epoch:
        return s, [Message(APPEND_REPLY, s.id, msg.src, s.current_epoch,
                           {"success": False, "match_index": 0})]
    s = replace(s, role=Role.FOLLOWER, leader_id=msg.src, elapsed=0, votes=frozenset())
    prev = p["prev_index"]
    if prev > s.last_index or (prev > 0 and s.log[prev - 1].epoch != p["prev_epoch"]):
        hint = min(prev - 1, s.last_index)
        return s, [Message(APPEND_REPLY, s.id, msg.src, s.current_epoch,
                           {"success": False, "match_index": max(hint, 0)})]
    log = s.log
    entries = p["entries"]
    for offset, (epoch, command) in enumerate(entries):
        idx = prev + 1 + offset
        if idx <= len(log):
            if log[idx - 1].epoch == epoch:
                continue
            log = log[: idx - 1]
        log = log + tuple(LogEntry(prev + 1 + j, e, c)
                          for j, (e, c) in enumerate(entries[offset:], start=offset))
        break
    last_new = prev + len(entries)
    commit = s.commit_index
    if p["leader_commit"] > commit:
        commit = min(p["leader_commit"], last_new)
    if log is not s.log or commit != s.commit_index:
        s = replace(s, log=log, commit_index=max(commit, s.commit_index))
    return s, [Message(APPEND_REPLY, s.id, msg.src, s.current_epoch,
                       {"success": True, "match_index": last_new})]


def _on_append_reply(s: ReplicaState, msg: Message):
    if s.role is not Role.LEADER or msg.epoch != s.current_epoch:
        return s, []
    p = msg.payload
    peer = msg.src
    if p["success"]:
        m = max(s.match_index.get(peer, 0), p["match_index"])
        nxt = dict(s.next_index)
        mi = dict(s.match_index)
        mi[peer] = m
        nxt[peer] = m + 1
        s = _advance_commit(replace(s, match_index=mi, next_index=nxt))
        return s, []
    nxt = dict(s.next_index)
    nxt[peer] = max(1, min(nxt.get(peer, 1) - 1, p["match_index"] + 1))
    s = replace(s, next_index=nxt)
    return s, [_append_for(s, peer)]
