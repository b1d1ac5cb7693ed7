"""The control loop that drives facts toward desires."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional

from ..digest import digest_of
from ..errors import (
    CheckpointInvalid,
    InvalidPlan,
    InvalidTransition,
    LeaseLost,
    NotOwner,
    Unreachable,
    ValidationError,
)
from ..fleetmodel.graph import MutationGraph
from ..fleetmodel.phases import IN_SERVICE, NodePhase
from ..statestore.keys import KeyRange, StateKey
from ..statestore.query import ready_for_reboot
from ..statestore.records import Kind
from .checkpoint import RESUME_ONLY, SAFE_TO_REPEAT, CheckpointStore
from .emergency import remediate as _remediate
from .flows import FlowDefinition, FlowRegistry

log = logging.getLogger(__name__)

ORCH_NS = "orch"
LEASE_RANGE = KeyRange.namespace(ORCH_NS)
_LEASE_PROBE = StateKey(ORCH_NS, "lease", "holder")

TASK_SAFETY = {"rolling_update": RESUME_ONLY, "sequence": SAFE_TO_REPEAT}

# facts the provisioner writes at dispatch time; they never change what to do next
_QUIET = {("prov", "accepted")}


@dataclass
class ReconcileConfig:
    interval: int = 1
    max_parallel_actions: int = 64
    max_retries: int = 3

    def __post_init__(self):
        if self.max_parallel_actions < 1:
            raise ValidationError("max_parallel_actions must be >= 1")
        if self.interval < 1:
            raise ValidationError("interval must be >= 1")


@dataclass(frozen=True)
class Dispatch:
    entity: tuple
    action: str
    intent: str
    params: dict = field(default_factory=dict, compare=False)
    emergency: bool = False


class Orchestrator:
    """One incarnation of the orchestration service.

    ``executor`` carries out node actions (``dispatch``) and cluster or
    service settings (``apply_setting``); the simulator implements both.
    Intent facts are written before every dispatch, and the executor reports
    ``prov/<node>/accepted`` and ``prov/<node>/completed``, so a restarted
    incarnation can tell in-flight work from work that never left.
    """

    def __init__(self, store, executor, graph: Optional[MutationGraph] = None,
                 config: Optional[ReconcileConfig] = None, orch_id: str = "orch",
                 checkpoints: Optional[CheckpointStore] = None,
                 flows: Iterable[FlowDefinition] = ()):
        self.store = store
        self.executor = executor
        self.graph = graph or getattr(executor, "graph", None) or MutationGraph.default()
        self.config = config or ReconcileConfig()
        self.id = orch_id
        self.checkpoints = checkpoints if checkpoints is not None else CheckpointStore()
        planned = {e.action for e in self.graph.edges if not e.external}
        self.flows = FlowRegistry(planned)
        for f in flows:
            self.flows.register(f)
        self.dirty: set = set()
        self.emergency: set = set()
        self.flow_queue: dict = {}
        self.attempts: dict = {}
        self.gave_up: set = set()
        self.tasks: dict = {}
        self.blocked_tasks: dict = {}
        self.dispatched: list = []
        self.alive = False
        self.epoch = 0
        self._seq = 0
        # test hook: called with a stage name before each intent write and dispatch
        self.fault_hook: Optional[Callable[[str], None]] = None

    # -- lifecycle -------------------------------------------------------------------

    def start(self) -> "Orchestrator":
        self.acquire()
        self.store.subscribe(self._on_change)
        self.alive = True
        self.resync()
        for tid in self.checkpoints.tasks():
            try:
                self.resume(tid)
            except CheckpointInvalid as exc:
                self.blocked_tasks[tid] = str(exc)
                log.error("task %s needs operator action: %s", tid, exc)
        return self

    def acquire(self) -> None:
        lease = self.store.leases.lease_for(_LEASE_PROBE)
        frm = None if lease is None else lease.owner
        epoch = 1 if lease is None else lease.epoch + 1
        self.store.transfer_ownership(LEASE_RANGE, frm, self.id, epoch)
        self.epoch = epoch

    def holds_lease(self) -> bool:
        lease = self.store.leases.lease_for(_LEASE_PROBE)
        return lease is not None and lease.owner == self.id and lease.epoch == self.epoch

    def kill(self) -> None:
        """Drop this incarnation: in-memory state is lost, nothing more is dispatched."""
        self.alive = False
        self.store.unsubscribe(self._on_change)

    def resync(self) -> None:
        st = self.store
        for ns in ("node", "service", "cluster"):
            for kind in (Kind.FACT, Kind.DESIRE):
                for rec in st.scan(ns, kind):
                    self.dirty.add((ns, rec.key.entity))
        for rec in st.scan(None, Kind.DESIRE):
            if st.origin_kind(rec.origin) == "emergency":
                self.emergency.add(self._entity_of(rec.key))

    @staticmethod
    def _entity_of(key) -> tuple:
        ns = key[0]
        return ("node", key[1]) if ns in ("node", "prov", "job") else (ns, key[1])

    def _on_change(self, rec) -> None:
        ns, ent, prop = rec.key
        if ns == ORCH_NS or (ns, prop) in _QUIET:
            return
        e = self._entity_of(rec.key)
        self.dirty.add(e)
        if rec.kind is Kind.DESIRE and self.store.origin_kind(rec.origin) == "emergency":
            self.emergency.add(e)

    # -- the loop --------------------------------------------------------------------------

    def tick(self, now: int) -> list:
        if not self.alive or now % self.config.interval:
            return []
        if not self.holds_lease():
            raise LeaseLost(f"{self.id} no longer holds the orchestration lease")
        for task in list(self.tasks.values()):
            task.step()
        return self.reconcile_once()

    def _priority(self, e) -> tuple:
        if e in self.emergency:
            return (0, e)
        if e[0] == "node" and self.flow_queue.get(e[1]):
            return (1, e)
        return (2, e)

    def reconcile_once(self) -> list:
        if not self.alive or not self.holds_lease():
            raise LeaseLost(f"{self.id} no longer holds the orchestration lease")
        budget = self.config.max_parallel_actions
        out = []
        for e in sorted(self.dirty, key=self._priority):
            if budget <= 0:
                break
            if e[0] == "node":
                step = self._plan_node(e[1])
                self.dirty.discard(e)
                if step is None:
                    continue
                action, params = step
                out.append(self._dispatch_node(e, action, params))
                budget -= 1
            else:
                settings = self._plan_setting(e)
                for key, value in settings[:budget]:
                    out.append(self._apply_setting(e, key, value))
                    budget -= 1
                if len(settings) <= budget or not settings:
                    self.dirty.discard(e)
            if e in self.emergency and not self._has_diff(e):
                self.emergency.discard(e)
        return out

    def _has_diff(self, e) -> bool:
        return any(d.key[0] == e[0] for d in self.store.diff(e[1]))

    # -- planning ---------------------------------------------------------------------------

    def _busy(self, n: str) -> bool:
        st = self.store
        rec = st.value(StateKey(ORCH_NS, n, "intent"))
        if rec is None:
            return False
        iid = rec.split("|", 1)[0]
        return (st.value(StateKey("prov", n, "accepted")) == iid
                and st.value(StateKey("prov", n, "completed")) != iid)

    def _plan_node(self, n: str):
        st = self.store
        if self._busy(n):
            return None
        phase = NodePhase(st.value(StateKey("node", n, "phase"), default="Unknown"))
        if phase is NodePhase.QUARANTINED:
            return None
        fired = self.flows.evaluate(st, n)
        if fired:
            self.flow_queue.setdefault(n, []).extend(fired)
        want_phase = st.peek(StateKey("node", n, "phase"), Kind.DESIRE)
        want_image = st.peek(StateKey("node", n, "image"), Kind.DESIRE)
        image = None if want_image is None else want_image.value
        params = {"image": image}
        if want_phase is not None and want_phase.value == NodePhase.QUARANTINED.value:
            return self._first(phase, NodePhase.QUARANTINED), params
        if phase is NodePhase.FAULTED and self.attempts.get(n, 0) >= self.config.max_retries:
            self.gave_up.add(n)
            return None
        queue = self.flow_queue.get(n)
        while queue:
            action = queue.pop(0)
            try:
                self.graph.edge(phase, action)
            except InvalidTransition:
                continue
            if self._may_take_down(n, phase, action):
                return action, params
        img_diff = image is not None and st.value(StateKey("node", n, "image")) != image
        if phase is NodePhase.JOB_RUNNING:
            # running work is never interrupted; privileged updates drain first
            if img_diff and st.origin_kind(want_image.origin) in ("rollout", "emergency"):
                return "drain", params
            return None
        if phase is NodePhase.DRAINING:
            return "drain_complete", params
        if want_phase is not None:
            target = NodePhase(want_phase.value)
        elif image is not None:
            target = NodePhase.SERVICES_READY
        else:
            return None
        try:
            if img_diff:
                path = self.graph.plan(phase, target)
                if "load_minimal_os" not in path:
                    path = (self.graph.plan(phase, NodePhase.POWERED_ON)
                            + self.graph.plan(NodePhase.POWERED_ON, target))
            elif phase is target:
                self.attempts.pop(n, None)
                self.gave_up.discard(n)
                return None
            else:
                path = self.graph.plan(phase, target)
        except Unreachable as exc:
            log.warning("%s: %s", n, exc)
            return None
        action = path[0]
        if not self._may_take_down(n, phase, action):
            return None
        return action, params

    def _first(self, phase, target):
        try:
            return self.graph.plan(phase, target)[0]
        except (Unreachable, IndexError):
            return None

    def _may_take_down(self, n, phase, action) -> bool:
        if phase is NodePhase.SERVICES_READY and action in ("reboot", "power_off", "start_job"):
            return bool(self.store.query_ready(ready_for_reboot(self.store, n)))
        return True

    def _plan_setting(self, e) -> list:
        return [(d.key, d.desire.value) for d in self.store.diff(e[1]) if d.key[0] == e[0]]

    # -- dispatch ----------------------------------------------------------------------------

    def _next_intent(self) -> str:
        self._seq += 1
        return f"{self.id}.{self._seq}"

    def _write_intent(self, entity: str, intent: str, action: str) -> None:
        if self.fault_hook:
            self.fault_hook("before_intent")
        try:
            self.store.put_fact(self.id, StateKey(ORCH_NS, entity, "intent"), f"{intent}|{action}")
        except NotOwner:
            self.alive = False
            raise LeaseLost(f"{self.id} lost the orchestration lease") from None
        if self.fault_hook:
            self.fault_hook("before_dispatch")

    def _dispatch_node(self, e, action, params) -> Dispatch:
        n = e[1]
        if action is None:
            return None
        intent = self._next_intent()
        phase = self.store.value(StateKey("node", n, "phase"))
        if phase == NodePhase.FAULTED.value:
            self.attempts[n] = self.attempts.get(n, 0) + 1
        self._write_intent(n, intent, action)
        d = Dispatch(e, action, intent, params, e in self.emergency)
        self.dispatched.append(d)
        self.executor.dispatch(n, action, intent, params)
        return d

    def _apply_setting(self, e, key, value) -> Dispatch:
        intent = self._next_intent()
        self._write_intent(f"{e[0]}:{e[1]}", intent, "apply_setting")
        d = Dispatch(e, "apply_setting", intent, {"key": str(key), "value": value}, e in self.emergency)
        self.dispatched.append(d)
        self.executor.apply_setting(key, value, intent)
        return d

    # -- operator surface ----------------------------------------------------------------------

    def register_flow(self, flow: FlowDefinition) -> str:
        return self.flows.register(flow)

    def remediate(self, event: dict) -> list:
        recs = _remediate(self.store, event)
        for r in recs:
            e = self._entity_of(r.key)
            self.emergency.add(e)
            self.dirty.add(e)
        return recs

    def rolling_update(self, image: str, max_unavailable: int, targets=None,
                       task_id: Optional[str] = None) -> "RollingUpdate":
        from .rolling import RollingUpdate

        if isinstance(max_unavailable, bool) or not isinstance(max_unavailable, int) \
                or max_unavailable < 1:
            raise InvalidPlan(f"max_unavailable must be a positive integer, got {max_unavailable!r}")
        images = getattr(self.executor, "images", None)
        if images is not None and image not in images:
            raise InvalidPlan(f"image {image!r} is not known to the provisioner")
        if targets is None:
            targets = sorted({r.key.entity for r in self.store.scan("node")
                              if r.key.property == "phase"})
        targets = sorted(set(targets))
        if not targets:
            raise InvalidPlan("rolling update has no target nodes")
        task_id = task_id or f"rollout-{digest_of([image, targets])[6:18]}"
        task = RollingUpdate(self, task_id, image, targets, max_unavailable)
        task.begin()
        self.tasks[task_id] = task
        task.step()
        return task

    def resume(self, task_id: str, kind: Optional[str] = None, restart: Optional[Callable] = None):
        """Continue a checkpointed task; returns its handle, or ``None`` for finished tasks.

        A corrupt checkpoint raises ``CheckpointInvalid`` unless ``kind`` is
        safe to repeat and ``restart`` is given, in which case the task starts over.
        """
        from .rolling import RollingUpdate

        try:
            recs = self.checkpoints.records(task_id)
        except CheckpointInvalid:
            if kind is not None and TASK_SAFETY.get(kind) == SAFE_TO_REPEAT and restart is not None:
                return restart()
            raise
        if not recs:
            raise CheckpointInvalid(f"no checkpoint records for {task_id!r}")
        begin = recs[0]
        if begin.get("type") != "begin":
            raise CheckpointInvalid(f"checkpoint for {task_id!r} lacks its begin record")
        if begin["kind"] != "rolling_update":
            return None
        task = RollingUpdate.from_checkpoint(self, begin, recs[-1])
        if task.status != "running":
            return None
        self.tasks[task_id] = task
        return task
