"""A whole simulated cluster: state store, fleet simulator, renderer and orchestrator."""
from __future__ import annotations

import logging
from typing import Iterable, Optional

from .configlayers import ConfigLayer, Renderer, SecretStore, merge_layers
from .errors import OrchestratorKilled
from .fleetmodel.phases import IN_SERVICE, NodePhase
from .orchestrator import CheckpointStore, FlowDefinition, Orchestrator, ReconcileConfig, quarantine_node
from .provisim import Scenario, Simulator
from .statestore import StateKey, StateStore

log = logging.getLogger(__name__)


class ClusterRuntime:
    """Composes the services of one cluster around a single state store.

    The orchestrator runs as a simulator ticker; it can be killed and
    restarted at any tick, and each incarnation takes the orchestration
    lease with a higher epoch.
    """

    def __init__(self, scenario: Scenario, *, config: Optional[ReconcileConfig] = None,
                 checkpoint_dir=None, flows: Iterable[FlowDefinition] = (),
                 store: Optional[StateStore] = None, secrets: Optional[SecretStore] = None,
                 render_log=None, trace_path=None):
        self.store = store if store is not None else StateStore()
        self.sim = Simulator(scenario, self.store, trace_path=trace_path)
        self.config = config or ReconcileConfig()
        self.checkpoints = CheckpointStore(checkpoint_dir)
        self.flows = list(flows)
        self.renderer = Renderer(self.store, self.sim.images, secrets, render_log)
        self.incarnation = 0
        self.orch: Optional[Orchestrator] = None
        self.kills = 0
        self.sim.on_attest_fail = self._quarantine
        self.sim.add_ticker(self._tick)
        self.start_orchestrator()

    @property
    def now(self) -> int:
        return self.sim.now

    @property
    def node_ids(self) -> list:
        return sorted(self.sim.nodes)

    def _quarantine(self, report) -> None:
        rec = quarantine_node(self.store, report.node, "attestation")
        if self.orch is not None and self.orch.alive:
            self.orch.emergency.add(("node", report.node))
        return rec

    # -- orchestrator lifecycle ---------------------------------------------------------

    def start_orchestrator(self) -> Orchestrator:
        self.incarnation += 1
        self.orch = Orchestrator(self.store, self.sim, self.sim.graph, self.config,
                                 f"orch-{self.incarnation}", self.checkpoints, self.flows).start()
        return self.orch

    def kill_orchestrator(self) -> None:
        if self.orch is not None:
            self.orch.kill()
            self.kills += 1
        self.orch = None

    def restart_orchestrator(self) -> Orchestrator:
        self.kill_orchestrator()
        return self.start_orchestrator()

    def _tick(self, now: int) -> None:
        if self.orch is None or not self.orch.alive:
            return
        try:
            self.orch.tick(now)
        except OrchestratorKilled:
            log.info("orchestrator %s killed at tick %d", self.orch.id, now)
            self.kill_orchestrator()

    # -- desired state -------------------------------------------------------------------

    def render(self, layers: Iterable[ConfigLayer]):
        return self.renderer.render(merge_layers(list(layers)), self.node_ids)

    def deploy(self, image: str, select: str = "*"):
        """Desire ``image`` on every node matching ``select`` through a rendered base layer."""
        base = ConfigLayer("base", "base", {"groups": {"all": {"select": select, "image": image}}})
        return self.render([base])

    # -- running -------------------------------------------------------------------------------

    def run(self, ticks: int) -> None:
        self.sim.run(ticks)

    def run_until(self, predicate, max_ticks: int = 100000) -> bool:
        return self.sim.run_until(predicate, max_ticks)

    def all_ready(self) -> bool:
        return self.sim.all_in(NodePhase.SERVICES_READY)

    def in_service(self, node: str) -> bool:
        return self.sim.nodes[node].phase in IN_SERVICE

    def phase(self, node: str) -> NodePhase:
        return self.sim.nodes[node].phase

    def fact(self, ns, entity, prop, default=None):
        return self.store.value(StateKey(ns, entity, prop), default=default)
