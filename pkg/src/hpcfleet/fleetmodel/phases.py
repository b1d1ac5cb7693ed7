from __future__ import annotations

import enum


class NodePhase(str, enum.Enum):
    UNKNOWN = "Unknown"
    DISCOVERED = "Discovered"
    POWERED_OFF = "PoweredOff"
    POWERED_ON = "PoweredOn"
    NET_BOOTING = "NetBooting"
    MINIMAL_OS = "MinimalOS"
    SERVICES_READY = "ServicesReady"
    JOB_RUNNING = "JobRunning"
    DRAINING = "Draining"
    FAULTED = "Faulted"
    QUARANTINED = "Quarantined"

    def __str__(self):
        return self.value


# phases in which a node carries no workload and may be taken down
IDLE_PHASES = frozenset({
    NodePhase.UNKNOWN, NodePhase.DISCOVERED, NodePhase.POWERED_OFF, NodePhase.POWERED_ON,
    NodePhase.NET_BOOTING, NodePhase.MINIMAL_OS, NodePhase.SERVICES_READY, NodePhase.FAULTED,
})

# phases that count as "in service" for availability budgets
IN_SERVICE = frozenset({NodePhase.SERVICES_READY, NodePhase.JOB_RUNNING})
