"""Rolling updates in fixed-size batches with checkpointed progress."""
from __future__ import annotations

from dataclasses import dataclass, field

from ..digest import digest_of
from ..errors import CheckpointInvalid
from ..fleetmodel.phases import IN_SERVICE, NodePhase
from ..statestore.keys import StateKey
from ..statestore.records import Kind
from .checkpoint import RESUME_ONLY


@dataclass
class CompletionReport:
    task_id: str
    image: str
    status: str                      # running | complete | partial | stalled
    updated: list = field(default_factory=list)
    failed: list = field(default_factory=list)

    @property
    def partial_failure(self) -> bool:
        return bool(self.failed)

    def to_json(self) -> dict:
        return {"task_id": self.task_id, "image": self.image, "status": self.status,
                "updated": len(self.updated), "failed": self.failed}


class RollingUpdate:
    """Update ``targets`` (ascending node id) to ``image``.

    A batch holds at most ``max_unavailable`` nodes, less any nodes of earlier
    batches still down after failing; the next batch starts only when every
    node of the current one is back in service at the new image or has failed.
    """

    kind = "rolling_update"
    safety = RESUME_ONLY

    def __init__(self, orch, task_id, image, targets, max_unavailable, *, cursor=0,
                 batch_end=None, failed=(), status="running"):
        self.orch = orch
        self.store = orch.store
        self.task_id = task_id
        self.image = image
        self.targets = list(targets)
        self.max_unavailable = max_unavailable
        self.cursor = cursor
        self.batch_end = batch_end
        self.failed = set(failed)
        self.status = status
        self.origin = f"rollout:{task_id}"
        if self.store.origin_kind(self.origin) is None:
            self.store.register_origin(self.origin, "rollout")

    # -- checkpoints ---------------------------------------------------------------------

    def _completed_digest(self) -> str:
        return digest_of(sorted(set(self.targets[:self.cursor]) - self.failed))

    def begin(self) -> None:
        self.orch.checkpoints.append(self.task_id, {
            "type": "begin", "kind": self.kind, "safety": self.safety, "image": self.image,
            "targets": self.targets, "max_unavailable": self.max_unavailable})

    def checkpoint(self) -> None:
        self.orch.checkpoints.append(self.task_id, {
            "type": "progress", "kind": self.kind, "safety": self.safety, "status": self.status,
            "cursor": self.cursor, "batch_end": self.batch_end, "failed": sorted(self.failed),
            "completed_digest": self._completed_digest()})

    @classmethod
    def from_checkpoint(cls, orch, begin: dict, last: dict) -> "RollingUpdate":
        t = cls(orch, begin["task_id"], begin["image"], begin["targets"], begin["max_unavailable"])
        if last is not begin:
            t.cursor = last["cursor"]
            t.batch_end = last["batch_end"]
            t.failed = set(last["failed"])
            t.status = last["status"]
            if t._completed_digest() != last["completed_digest"]:
                raise CheckpointInvalid(f"{t.task_id}: completed-unit digest does not match cursor")
        return t

    # -- progress ------------------------------------------------------------------------------

    def _phase(self, n) -> NodePhase:
        return NodePhase(self.store.value(StateKey("node", n, "phase"), default="Unknown"))

    def done(self, n) -> bool:
        return (self.store.value(StateKey("node", n, "image")) == self.image
                and self._phase(n) in IN_SERVICE)

    def _failed_now(self, n) -> bool:
        p = self._phase(n)
        return p is NodePhase.QUARANTINED or (p is NodePhase.FAULTED and n in self.orch.gave_up)

    def _start_batch(self) -> bool:
        down = [n for n in self.failed if self._phase(n) not in IN_SERVICE]
        room = self.max_unavailable - len(down)
        if room <= 0:
            return False
        self.batch_end = min(len(self.targets), self.cursor + room)
        for n in self.targets[self.cursor:self.batch_end]:
            key = StateKey("node", n, "image")
            if self.store.value(key, Kind.DESIRE) != self.image and not self.done(n):
                self.store.put_desire(key, self.image, self.origin)
        self.checkpoint()
        return True

    def step(self) -> None:
        while self.status == "running":
            if self.batch_end is None:
                if self.cursor >= len(self.targets):
                    self.status = "partial" if self.failed else "complete"
                    self.checkpoint()
                    break
                if not self._start_batch():
                    self.status = "stalled"
                    self.checkpoint()
                    break
            pending = False
            for n in self.targets[self.cursor:self.batch_end]:
                if n in self.failed or self.done(n):
                    continue
                if self._failed_now(n):
                    self.failed.add(n)
                    continue
                pending = True
            if pending:
                return
            self.cursor = self.batch_end
            self.batch_end = None
            self.checkpoint()
        self.orch.tasks.pop(self.task_id, None)

    @property
    def batch_index(self) -> int:
        return self.cursor // self.max_unavailable

    def report(self) -> CompletionReport:
        updated = [n for n in self.targets if n not in self.failed and self.done(n)]
        return CompletionReport(self.task_id, self.image, self.status, updated, sorted(self.failed))
