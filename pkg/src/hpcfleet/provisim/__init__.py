from .boot import (
    METADATA_BYTES_PER_LAYER,
    AttestationReport,
    BootTrace,
    ExtentCache,
    Full,
    Lazy,
    attest,
    boot_node,
)
from .images import BuildPolicy, ImageManifest, Layer, build_images
from .scenario import NodeSpec, Scenario, SwitchSpec, generate_nodes
from .simulator import PROVISIONER, SCHEDULER, SimNode, Simulator, claim_leases

__all__ = [
    "METADATA_BYTES_PER_LAYER", "PROVISIONER", "SCHEDULER", "AttestationReport", "BootTrace",
    "BuildPolicy", "ExtentCache", "Full", "ImageManifest", "Layer", "Lazy", "NodeSpec",
    "Scenario", "SimNode", "Simulator", "SwitchSpec", "attest", "boot_node", "build_images",
    "claim_leases", "generate_nodes",
]
