"""Deterministic discrete-event simulator of the physical fleet.

The simulator plays the provisioning agent (executing mutation-graph actions
dispatched by the orchestrator), the scheduler (starting and ending jobs) and
the hardware (switches, BMCs, faults). Every observable change is written to
the state store under the owning principal and appended to a JSONL trace.
"""
from __future__ import annotations

import heapq
import json
import math
import random
from dataclasses import dataclass, field
from typing import Callable, Optional

from ..errors import (
    AccessDenied,
    AddressTimeout,
    BmcUnreachable,
    DigestMismatch,
    DiscoveryTimeout,
    FleetError,
    InsufficientMemory,
    InvalidTransition,
    UnknownNode,
    UnknownSwitch,
    ValidationError,
)
from ..fleetmodel.graph import MutationGraph
from ..fleetmodel.identity import TopologyLocation, derive_identity, hardware_address
from ..fleetmodel.node import NodeRecord, apply_transition
from ..fleetmodel.phases import NodePhase
from ..statestore.keys import KeyRange, StateKey
from ..statestore.store import StateStore
from .boot import BootTrace, attest, boot_node
from .images import ImageManifest
from .scenario import NodeSpec, Scenario

PROVISIONER = "prov"
SCHEDULER = "srm"

_POWERED_OFF = {NodePhase.UNKNOWN, NodePhase.DISCOVERED, NodePhase.POWERED_OFF}

FAULT_KINDS = ("crash", "partition", "slow_link", "corrupt_layer", "lldp_off", "bmc_off")


@dataclass
class SimNode:
    spec: NodeSpec
    phase: NodePhase = NodePhase.UNKNOWN
    image: Optional[str] = None
    gen: int = 0
    inflight: Optional[str] = None
    job_end: Optional[int] = None
    bmc_on: bool = True
    staged: set = field(default_factory=set)
    corrupt: set = field(default_factory=set)
    measured: list = field(default_factory=list)
    booted_manifest: Optional[ImageManifest] = None
    boot_trace: Optional[BootTrace] = None
    rng: Optional[random.Random] = None
    power: Optional[str] = None

    @property
    def node_id(self):
        return self.spec.node_id

    def record(self) -> NodeRecord:
        return NodeRecord(self.node_id, self.spec.location, self.spec.nic,
                          f"bmc-{self.node_id}", self.image, self.phase)


@dataclass
class SwitchState:
    chassis: int
    lldp: bool = True
    ra: bool = True
    slow: float = 1.0


def claim_leases(store: StateStore) -> None:
    """Give the simulated agents the key ranges they write, if nobody owns them."""
    for ns, owner in (("node", PROVISIONER), ("prov", PROVISIONER), ("service", PROVISIONER),
                      ("cluster", PROVISIONER), ("job", SCHEDULER)):
        rng = KeyRange.namespace(ns)
        if not store.leases.overlapping(rng):
            store.transfer_ownership(rng, None, owner, 1)


class Simulator:
    def __init__(self, scenario: Scenario, store: Optional[StateStore] = None,
                 graph: Optional[MutationGraph] = None, trace_path=None):
        self.scenario = scenario
        self.store = store if store is not None else StateStore()
        claim_leases(self.store)
        self.graph = graph or (MutationGraph.load(scenario.graph) if scenario.graph
                               else MutationGraph.default())
        self.seed = scenario.seed
        self.now = 0
        self._heap: list = []
        self._seq = 0
        self.nodes: dict[str, SimNode] = {n.node_id: SimNode(n) for n in scenario.nodes}
        self.switches = {c: SwitchState(c, s.lldp, s.router_advertisements)
                         for c, s in scenario.switches.items()}
        self.images: dict[str, ImageManifest] = dict(scenario.images)
        self.trace: list = []
        self.trace_path = trace_path
        self._accepted: set = set()
        self.tickers: list = []
        self.groups: Optional[dict] = None
        self.gossip = None
        self.deliveries: list = []
        self.on_attest_fail: Optional[Callable] = None
        self.job_count: dict[str, int] = {}
        for f in scenario.faults:
            self.inject_fault(f)
        for j in scenario.jobs:
            self.schedule_job(j["node"], int(j["at"]), int(j["duration"]))

    # -- plumbing --------------------------------------------------------------

    def _node(self, node_id) -> SimNode:
        try:
            return self.nodes[node_id]
        except KeyError:
            raise UnknownNode(f"no node {node_id!r} in scenario") from None

    def _switch(self, chassis) -> SwitchState:
        try:
            return self.switches[chassis]
        except KeyError:
            raise UnknownSwitch(f"no switch with chassis id {chassis!r}") from None

    def _rng(self, n: SimNode) -> random.Random:
        if n.rng is None:
            n.rng = random.Random(f"{self.seed}/{n.node_id}")
        return n.rng

    def schedule(self, delay: int, kind: str, data) -> int:
        self._seq += 1
        heapq.heappush(self._heap, (self.now + max(0, int(delay)), self._seq, kind, data))
        return self._seq

    def emit(self, ev: str, **fields) -> None:
        rec = {"t": self.now, "ev": ev}
        rec.update(fields)
        self.trace.append(rec)

    def trace_bytes(self) -> bytes:
        return b"".join(json.dumps(r, sort_keys=True, separators=(",", ":")).encode() + b"\n"
                        for r in self.trace)

    def flush_trace(self, path=None) -> None:
        with open(path or self.trace_path, "wb") as fh:
            fh.write(self.trace_bytes())

    def _fact(self, owner, ns, entity, prop, value) -> None:
        self.store.put_fact(owner, StateKey(ns, entity, prop), value)

    def _set_phase(self, n: SimNode, phase: NodePhase, action: str) -> None:
        prev = n.phase
        n.phase = phase
        self.emit("phase", node=n.node_id, frm=prev.value, to=phase.value, action=action)
        self._fact(PROVISIONER, "node", n.node_id, "phase", phase.value)
        if phase is not NodePhase.QUARANTINED:
            power = "off" if phase in _POWERED_OFF else "on"
            if power != n.power:
                n.power = power
                self._fact(PROVISIONER, "node", n.node_id, "power", power)

    # -- time --------------------------------------------------------------------

    def add_ticker(self, fn: Callable[[int], None]) -> None:
        self.tickers.append(fn)

    def tick(self) -> None:
        self.now += 1
        heap = self._heap
        while heap and heap[0][0] <= self.now:
            _, seq, kind, data = heapq.heappop(heap)
            getattr(self, "_on_" + kind)(seq, data)
        for fn in list(self.tickers):
            fn(self.now)

    def run(self, ticks: int) -> None:
        for _ in range(ticks):
            self.tick()

    def run_until(self, predicate: Callable[[], bool], max_ticks: int = 100000) -> bool:
        for _ in range(max_ticks):
            if predicate():
                return True
            self.tick()
        return predicate()

    def idle(self) -> bool:
        return not self._heap and all(n.inflight is None for n in self.nodes.values())

    # -- provisioning agent ----------------------------------------------------------

    def busy(self, node_id) -> bool:
        return self._node(node_id).inflight is not None

    def _duration(self, n: SimNode, base: int) -> int:
        if base <= 0:
            return 1
        rng = self._rng(n)
        d = base + rng.randint(0, max(1, base // 2))
        if rng.random() < self.scenario.straggler_rate:
            d *= 3
        slow = self.switches[n.spec.location.chassis].slow
        return max(1, math.ceil(d * slow))

    def dispatch(self, node_id: str, action: str, intent: str, params: Optional[dict] = None) -> bool:
        """Accept one action. Duplicate intents are ignored, so redelivery is harmless."""
        n = self._node(node_id)
        if intent in self._accepted:
            return False
        self._accepted.add(intent)
        self._fact(PROVISIONER, "prov", node_id, "accepted", intent)
        params = dict(params or {})
        try:
            edge = self.graph.edge(n.phase, action)
        except InvalidTransition:
            self.emit("reject", node=node_id, action=action, intent=intent, phase=n.phase.value)
            self._fact(PROVISIONER, "prov", node_id, "completed", intent)
            return True
        if n.inflight is not None:
            self.emit("reject", node=node_id, action=action, intent=intent, phase="busy")
            self._fact(PROVISIONER, "prov", node_id, "completed", intent)
            return True
        n.inflight = intent
        outcome = self._begin(n, action, params)
        self.emit("start", node=node_id, action=action, intent=intent)
        self.schedule(self._duration(n, edge.duration), "complete",
                      (node_id, action, intent, n.gen, outcome, self.now))
        return True

    def apply_setting(self, key, value, intent: str) -> bool:
        """Apply a cluster or service setting; it takes effect immediately."""
        if intent in self._accepted:
            return False
        self._accepted.add(intent)
        key = StateKey(*key)
        if key.namespace not in ("cluster", "service"):
            raise ValidationError(f"{key} is not a cluster or service setting")
        self.store.put_fact(PROVISIONER, key, value)
        self.emit("setting", key=str(key), intent=intent)
        return True

    def _begin(self, n: SimNode, action: str, params: dict) -> str:
        if action == "discover":
            try:
                self.discover_topology(n.node_id)
            except DiscoveryTimeout:
                return "discovery_timeout"
        elif action == "net_boot":
            try:
                self.assign_address(n.node_id, self.scenario.address_mode)
            except AddressTimeout:
                return "address_timeout"
        elif action == "load_minimal_os":
            return self._load(n, params.get("image") or self.scenario.default_image)
        return "ok"

    def boot_params(self, n: SimNode, image: str) -> dict:
        addr, host = derive_identity(n.spec.location, self.scenario.site_prefix)
        return {"hostname": host, "ip": str(addr), "image": image, "ro": True, "overlay": "tmpfs"}

    def _load(self, n: SimNode, image: str) -> str:
        manifest = self.images.get(image)
        if manifest is None:
            return "unknown_image"
        self.emit("load_start", node=n.node_id, image=image)
        n.booted_manifest = manifest
        try:
            n.boot_trace = boot_node(
                n.node_id, manifest, self.scenario.boot_mode, self.boot_params(n, image),
                memory=n.spec.memory, reads=self.scenario.reads.get(n.node_id, ()),
                staged=n.staged, corrupt=n.corrupt, start=self.now)
        except DigestMismatch as exc:
            n.boot_trace = exc.trace
            n.measured = list(exc.trace.measured)
            return "digest_mismatch"
        except InsufficientMemory:
            n.measured = []
            return "insufficient_memory"
        n.measured = list(n.boot_trace.measured)
        return "ok"

    def _on_complete(self, seq, data) -> None:
        node_id, action, intent, gen, outcome, started = data
        n = self.nodes[node_id]
        if n.gen != gen:
            self.emit("abort", node=node_id, action=action, intent=intent)
            n.inflight = None
            self._fact(PROVISIONER, "prov", node_id, "completed", intent)
            return
        if action == "drain_complete" and n.job_end is not None:
            timeout = self.scenario.drain_timeout
            if timeout is None or self.now - started < timeout:
                due = n.job_end if timeout is None else min(n.job_end, started + timeout)
                self.schedule(max(1, due - self.now), "complete", data)
                return
            self._end_job(n, killed=True)
        edge = self.graph.edge(n.phase, action)
        ok = outcome == "ok"
        new = apply_transition(n.record(), edge, ok).phase
        n.inflight = None
        if action == "load_minimal_os":
            self.emit("load", node=node_id, image=n.booted_manifest.image_id if n.booted_manifest else None,
                      outcome=outcome, bytes=n.boot_trace.bytes_transferred if n.boot_trace else 0)
        if new is not n.phase:
            self._set_phase(n, new, action)
        if ok and action == "load_minimal_os":
            n.image = n.booted_manifest.image_id
            self._fact(PROVISIONER, "node", node_id, "image", n.image)
        elif not ok:
            self.emit("fail", node=node_id, action=action, outcome=outcome)
        self._fact(PROVISIONER, "prov", node_id, "completed", intent)
        if outcome == "digest_mismatch":
            report = self.attest_node(node_id, n.booted_manifest)
            if not report.passed and self.on_attest_fail is not None:
                self.on_attest_fail(report)

    # -- world operations -------------------------------------------------------------------

    def discover_topology(self, node_id) -> TopologyLocation:
        n = self._node(node_id)
        loc = n.spec.location
        if not self._switch(loc.chassis).lldp:
            raise DiscoveryTimeout(f"{node_id}: no discovery frames from chassis {loc.chassis}")
        self._fact(PROVISIONER, "node", node_id, "location", f"{loc.chassis}:{loc.port}")
        return loc

    def assign_address(self, node_id, mode: str = "location"):
        n = self._node(node_id)
        if not self._switch(n.spec.location.chassis).ra:
            raise AddressTimeout(f"{node_id}: no router advertisement received")
        if mode == "location":
            return derive_identity(n.spec.location, self.scenario.site_prefix)[0]
        if mode == "hardware":
            return hardware_address(n.spec.nic, self.scenario.site_prefix)
        raise ValidationError(f"unknown address mode {mode!r}")

    def attest_node(self, node_id, expected: Optional[ImageManifest] = None):
        n = self._node(node_id)
        expected = expected or n.booted_manifest
        if expected is None:
            raise ValidationError(f"{node_id} has not booted an image")
        report = attest(node_id, expected, n.measured)
        self.emit("attest", node=node_id, verdict=report.verdict, layer=report.failed_layer)
        return report

    def stage_artifact_oob(self, node_id, digest: str) -> str:
        n = self._node(node_id)
        if not n.bmc_on:
            raise BmcUnreachable(f"bmc of {node_id} is powered off")
        n.staged.add(digest)
        self.emit("oob_stage", node=node_id, digest=digest)
        return "staged"

    def node_fetch_staging_credentials(self, node_id) -> None:
        """A node-side principal asking for the staging channel's credentials."""
        self._node(node_id)
        self.emit("oob_denied", node=node_id)
        raise AccessDenied(f"{node_id}: node principals may not read staging credentials")

    # -- scheduler -------------------------------------------------------------------------

    def schedule_job(self, node_id, at: int, duration: int) -> int:
        self._node(node_id)
        return self.schedule(max(1, at - self.now), "job_start", (node_id, duration, 0))

    def _on_job_start(self, seq, data) -> None:
        node_id, duration, attempt = data
        n = self.nodes[node_id]
        if n.phase is not NodePhase.SERVICES_READY or n.inflight is not None or n.job_end is not None:
            if attempt < 200:
                self.schedule(5, "job_start", (node_id, duration, attempt + 1))
            return
        n.job_end = self.now + duration
        self.job_count[node_id] = 1
        self._fact(SCHEDULER, "job", node_id, "count", 1)
        self._set_phase(n, NodePhase.JOB_RUNNING, "start_job")
        self.schedule(duration, "job_end", (node_id, n.gen, n.job_end))

    def _on_job_end(self, seq, data) -> None:
        node_id, gen, end = data
        n = self.nodes[node_id]
        if n.gen != gen or n.job_end != end:
            return
        self._end_job(n)

    def _end_job(self, n: SimNode, killed: bool = False) -> None:
        n.job_end = None
        self.job_count[n.node_id] = 0
        self._fact(SCHEDULER, "job", n.node_id, "count", 0)
        prev = self.store.value(StateKey("job", n.node_id, "finished"), default=0)
        self._fact(SCHEDULER, "job", n.node_id, "finished", prev + 1)
        self.emit("job_end", node=n.node_id, killed=killed)
        if n.phase is NodePhase.JOB_RUNNING:
            self._set_phase(n, NodePhase.SERVICES_READY, "job_complete")

    # -- faults ------------------------------------------------------------------------------

    def inject_fault(self, spec: dict) -> int:
        kind = spec.get("kind")
        if kind not in FAULT_KINDS:
            raise ValidationError(f"unknown fault kind {kind!r}")
        if kind in ("crash", "corrupt_layer", "bmc_off"):
            self._node(spec.get("node"))
        if kind in ("slow_link", "lldp_off"):
            self._switch(spec.get("switch"))
        if kind == "partition":
            groups = spec.get("groups") or []
            if len(groups) < 2:
                raise ValidationError("a partition needs at least two groups")
        at = int(spec.get("at", self.now))
        return self.schedule(max(0, at - self.now), "fault", dict(spec))

    def _on_fault(self, seq, spec) -> None:
        kind = spec["kind"]
        self.emit("fault", kind=kind, id=seq, **{k: v for k, v in spec.items()
                                                  if k not in ("kind", "at")})
        dur = spec.get("duration")
        if kind == "crash":
            n = self.nodes[spec["node"]]
            try:
                edge = self.graph.edge(n.phase, "crash")
            except InvalidTransition:
                return
            n.gen += 1
            n.inflight = None
            if n.job_end is not None:
                self._end_job(n, killed=True)
            self._set_phase(n, edge.dst, "crash")
            return
        if kind == "partition":
            self.groups = {m: gi for gi, g in enumerate(spec["groups"]) for m in g}
            if self.gossip is not None:
                self.gossip.partition(*spec["groups"])
        elif kind == "slow_link":
            self.switches[spec["switch"]].slow = float(spec.get("factor", 2.0))
        elif kind == "corrupt_layer":
            self.nodes[spec["node"]].corrupt.add(int(spec.get("layer", 0)))
        elif kind == "lldp_off":
            self.switches[spec["switch"]].lldp = False
        elif kind == "bmc_off":
            self.nodes[spec["node"]].bmc_on = False
        if dur is not None:
            self.schedule(int(dur), "fault_end", spec)

    def _on_fault_end(self, seq, spec) -> None:
        kind = spec["kind"]
        self.emit("fault_end", kind=kind)
        if kind == "partition":
            self.groups = None
            if self.gossip is not None:
                self.gossip.heal()
        elif kind == "slow_link":
            self.switches[spec["switch"]].slow = 1.0
        elif kind == "corrupt_layer":
            self.nodes[spec["node"]].corrupt.discard(int(spec.get("layer", 0)))
        elif kind == "lldp_off":
            self.switches[spec["switch"]].lldp = True
        elif kind == "bmc_off":
            self.nodes[spec["node"]].bmc_on = True

    # -- replication traffic -----------------------------------------------------------------

    def attach_gossip(self, cluster, interval: int = 1) -> None:
        """Drive anti-entropy rounds from the clock; deliveries are logged with their tick."""
        self.gossip = cluster

        def ticker(now):
            if now % interval:
                return
            before = len(cluster.deliveries)
            cluster.run_round()
            for a, b in cluster.deliveries[before:]:
                self.deliveries.append((now, a, b))

        self.add_ticker(ticker)

    # -- queries ---------------------------------------------------------------------------------

    def phases(self) -> dict:
        out: dict = {}
        for n in self.nodes.values():
            out[n.phase] = out.get(n.phase, 0) + 1
        return out

    def all_in(self, phase: NodePhase) -> bool:
        return all(n.phase is phase for n in self.nodes.values())
