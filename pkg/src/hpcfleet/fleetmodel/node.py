from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

from ..errors import InvalidTransition, ValidationError
from .graph import MutationEdge
from .identity import TopologyLocation, format_mac, parse_mac
from .phases import NodePhase


@dataclass(frozen=True)
class NodeRecord:
    node_id: str
    location: TopologyLocation
    nic: int
    bmc: str = ""
    image: Optional[str] = None
    phase: NodePhase = NodePhase.UNKNOWN

    def __post_init__(self):
        if not self.node_id:
            raise ValidationError("node id must be non-empty")
        object.__setattr__(self, "nic", parse_mac(self.nic))
        object.__setattr__(self, "phase", NodePhase(self.phase))

    def to_json(self) -> dict:
        return {"node_id": self.node_id, "location": self.location.to_json(),
                "nic": format_mac(self.nic), "bmc": self.bmc, "image": self.image,
                "phase": self.phase.value}


def apply_transition(node: NodeRecord, edge: MutationEdge, success: bool = True) -> NodeRecord:
    """Move ``node`` along ``edge``. Persisting the new phase is the caller's job."""
    if isinstance(success, str):
        if success not in ("success", "failure"):
            raise ValidationError(f"outcome must be success or failure, got {success!r}")
        success = success == "success"
    if edge.src != node.phase:
        raise InvalidTransition(
            f"{edge.action} leaves {edge.src.value} but {node.node_id} is {node.phase.value}")
    return replace(node, phase=edge.dst if success else edge.failure_phase)
