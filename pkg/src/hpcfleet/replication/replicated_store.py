"""State store replicated across simulated servers.

Strong keys (and leases, origins) go through the replicated log and are applied
to one ``StateStore`` per replica in commit order. Eventual keys live in the
gossip replicas and spread by anti-entropy.
"""
from __future__ import annotations

import json
from typing import Optional

from ..errors import (
    ConsistencyMismatch,
    FleetError,
    NotFound,
    NotOwner,
    StaleVersion,
    UnknownOrigin,
    VersionGap,
)
from ..statestore.keys import KeyRange, StateKey
from ..statestore.policy import ConsistencyPolicy
from ..statestore.records import Consistency, Kind, ReadMode, StateRecord, check_value
from ..statestore.store import DESIRE_OWNER, StateStore
from .cluster import RaftCluster
from .gossip import GossipCluster


def apply_command(store: StateStore, cmd: dict):
    op = cmd["op"]
    if op == "put_fact":
        return store.put_fact(cmd["owner"], StateKey(*cmd["key"]), cmd["value"], cmd.get("version"))
    if op == "put_desire":
        return store.put_desire(StateKey(*cmd["key"]), cmd["value"], cmd["origin"])
    if op == "transfer":
        return store.transfer_ownership(KeyRange.from_json(cmd["range"]), cmd["from"], cmd["to"],
                                        cmd["epoch"])
    if op == "origin":
        return store.register_origin(cmd["origin"], cmd["kind"])
    if op == "barrier":
        return None
    raise ValueError(f"unknown command {op!r}")


class ReplicatedStateStore:
    def __init__(self, replicas: int = 3, seed: int = 0, store_id: str = "main",
                 policy: Optional[ConsistencyPolicy] = None, **net):
        self.store_id = store_id
        self.policy = policy or ConsistencyPolicy()
        self.raft = RaftCluster(replicas, seed, apply=self._apply, on_restart=self._reset, **net)
        self.ids = list(self.raft.ids)
        self.stores = {rid: self._fresh(rid) for rid in self.ids}
        self.gossip = GossipCluster(ids=self.ids, seed=seed)
        self._results: dict[tuple, object] = {}
        self._seq = 0

    def _fresh(self, rid) -> StateStore:
        return StateStore(self.store_id, self.policy, replica_id=rid)

    def _reset(self, rid) -> None:
        self.stores[rid] = self._fresh(rid)

    def _apply(self, rid, entry) -> None:
        try:
            res = apply_command(self.stores[rid], json.loads(entry.command))
        except FleetError as exc:
            res = exc
        self._results.setdefault((entry.index, entry.epoch), res)

    # -- faults ---------------------------------------------------------------

    def crash(self, rid) -> None:
        self.raft.crash(rid)
        self.gossip.alive.discard(rid)

    def recover(self, rid) -> None:
        self.raft.recover(rid)
        self.gossip.alive.add(rid)

    def partition(self, *groups) -> None:
        self.raft.partition(*groups)
        self.gossip.partition(*groups)

    def heal(self) -> None:
        self.raft.heal()
        self.gossip.heal()

    # -- strong path ------------------------------------------------------------

    def _commit(self, cmd: dict, max_ticks: int = 100):
        self._seq += 1
        cmd = dict(cmd, seq=self._seq)
        text = json.dumps(cmd, sort_keys=True)
        index = self.raft.propose(text, max_ticks=max_ticks)
        leader = self.raft.leader()
        epoch = self.raft.states[leader].log[index - 1].epoch if leader else None
        res = self._results.get((index, epoch))
        if res is None:
            for (i, _), r in self._results.items():
                if i == index:
                    res = r
        if isinstance(res, FleetError):
            raise res
        return res

    def register_origin(self, origin: str, kind: str = "render") -> None:
        self._commit({"op": "origin", "origin": origin, "kind": kind})

    def transfer_ownership(self, key_range: KeyRange, frm, to, epoch):
        return self._commit({"op": "transfer", "range": key_range.to_json(), "from": frm,
                             "to": to, "epoch": epoch})

    def _local_replica(self, via) -> str:
        if via is not None:
            return via
        live = [r for r in self.ids if r in self.raft.alive]
        return self.raft.leader() or live[0]

    def put_fact(self, owner, key, value, version=None, via=None, max_ticks: int = 100) -> StateRecord:
        key = StateKey.of(*key)
        check_value(value)
        if self.policy.classify(key) is Consistency.STRONG:
            return self._commit({"op": "put_fact", "owner": owner, "key": list(key), "value": value,
                                 "version": version}, max_ticks)
        rid = self._local_replica(via)
        holder = self.stores[rid].leases.owner_of(key)
        if holder != owner:
            raise NotOwner(f"{owner!r} does not hold the lease for {key} (holder: {holder!r})")
        cur = self.gossip.replicas[rid].read(key, Kind.FACT)
        latest = cur.version if cur is not None and cur.owner == owner else 0
        if version is None:
            version = latest + 1
        elif version <= latest:
            raise StaleVersion(f"{key}: version {version} <= latest {latest}")
        elif version != latest + 1:
            raise VersionGap(f"{key}: version {version} skips past {latest} + 1")
        return self.gossip.replicas[rid].write(key, value, owner, Kind.FACT, version=version)

    def put_desire(self, key, value, origin, via=None, max_ticks: int = 100) -> StateRecord:
        key = StateKey.of(*key)
        check_value(value)
        if self.policy.classify(key) is Consistency.STRONG:
            return self._commit({"op": "put_desire", "key": list(key), "value": value,
                                 "origin": origin}, max_ticks)
        rid = self._local_replica(via)
        if self.stores[rid].origin_kind(origin) is None:
            raise UnknownOrigin(f"origin {origin!r} is not registered")
        return self.gossip.replicas[rid].write(key, value, DESIRE_OWNER, Kind.DESIRE, origin=origin)

    def get(self, key, kind: Kind = Kind.FACT, read_mode: ReadMode = ReadMode.LOCAL,
            via=None, max_ticks: int = 100) -> StateRecord:
        key = StateKey.of(*key)
        kind = Kind(kind)
        read_mode = ReadMode(read_mode)
        strong_key = self.policy.classify(key) is Consistency.STRONG
        if read_mode is ReadMode.STRONG:
            if not strong_key:
                raise ConsistencyMismatch(f"{key} is eventually consistent")
            # read barrier: anything committed before this read is applied on the leader
            self._commit({"op": "barrier"}, max_ticks)
            rec = self.stores[self.raft.leader()].peek(key, kind)
        else:
            rid = self._local_replica(via)
            if strong_key:
                rec = self.stores[rid].peek(key, kind)
            else:
                rec = self.gossip.replicas[rid].read(key, kind)
        if rec is None:
            raise NotFound(f"no {kind.value} for {key}")
        return rec

    def anti_entropy(self, rounds: int = 1) -> int:
        return sum(self.gossip.run_round() for _ in range(rounds))

    def tick(self, n: int = 1) -> None:
        self.raft.run(n)
