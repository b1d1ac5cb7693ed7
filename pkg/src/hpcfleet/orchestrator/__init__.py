from .checkpoint import RESUME_ONLY, SAFE_TO_REPEAT, CheckpointStore
from .dag import SHUTDOWN, STARTUP, DependencyDag, SequenceReport, run_sequence
from .emergency import EVENT_KINDS, quarantine_node, remediate
from .flows import FlowDefinition, FlowRegistry, Trigger, load_flows
from .reconciler import Dispatch, Orchestrator, ReconcileConfig
from .rolling import CompletionReport, RollingUpdate

__all__ = [
    "EVENT_KINDS", "RESUME_ONLY", "SAFE_TO_REPEAT", "SHUTDOWN", "STARTUP", "CheckpointStore",
    "CompletionReport", "DependencyDag", "Dispatch", "FlowDefinition", "FlowRegistry",
    "Orchestrator", "ReconcileConfig", "RollingUpdate", "SequenceReport", "Trigger",
    "load_flows", "quarantine_node", "remediate", "run_sequence",
]
