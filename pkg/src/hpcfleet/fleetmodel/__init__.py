from .graph import MutationEdge, MutationGraph, plan_mutations
from .identity import (
    DEFAULT_PREFIX,
    TopologyLocation,
    derive_identity,
    format_mac,
    hardware_address,
    parse_mac,
)
from .node import NodeRecord, apply_transition
from .phases import IDLE_PHASES, IN_SERVICE, NodePhase

__all__ = [
    "DEFAULT_PREFIX", "IDLE_PHASES", "IN_SERVICE", "MutationEdge", "MutationGraph", "NodePhase",
    "NodeRecord", "TopologyLocation", "apply_transition", "derive_identity", "format_mac",
    "hardware_address", "parse_mac", "plan_mutations",
]
