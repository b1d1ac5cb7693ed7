from .cluster import RaftCluster
from .gossip import (
    EventualReplica,
    GossipCluster,
    gossip_round,
    merge,
    vv_compare,
)
from .linearizability import Op, check_register
from .messages import Message
from .raft import LogEntry, ReplicaState, Role, client_append, new_replica, restart, step, tick
from .replicated_store import ReplicatedStateStore
from .safety import SafetyMonitor

__all__ = [
    "EventualReplica", "GossipCluster", "LogEntry", "Message", "Op", "RaftCluster",
    "ReplicaState", "ReplicatedStateStore", "Role", "SafetyMonitor", "check_register",
    "client_append", "gossip_round", "merge", "new_replica", "restart", "step", "tick",
    "vv_compare",
]
