"""Scenario files: switches, nodes, images, faults and workload."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import yaml

from ..errors import DuplicateAttachment, ValidationError
from ..fleetmodel.identity import DEFAULT_PREFIX, TopologyLocation, parse_mac
from .boot import Full, Lazy, METADATA_BYTES_PER_LAYER
from .images import ImageManifest

DEFAULT_MEMORY = 64 * 2**30
DEFAULT_IMAGE = {"id": "mos-1", "kind": "minimal_os",
                 "layers": [{"name": "kernel", "size": 12 * 2**20},
                            {"name": "initrd", "size": 48 * 2**20},
                            {"name": "base", "size": 256 * 2**20}]}


@dataclass
class SwitchSpec:
    chassis: int
    lldp: bool = True
    router_advertisements: bool = True


@dataclass
class NodeSpec:
    node_id: str
    location: TopologyLocation
    nic: int
    memory: int = DEFAULT_MEMORY


@dataclass
class Scenario:
    seed: int = 0
    site_prefix: str = DEFAULT_PREFIX
    switches: dict = field(default_factory=dict)
    nodes: list = field(default_factory=list)
    images: dict = field(default_factory=dict)
    default_image: Optional[str] = None
    faults: list = field(default_factory=list)
    jobs: list = field(default_factory=list)
    reads: dict = field(default_factory=dict)
    boot_mode: object = field(default_factory=Full)
    address_mode: str = "location"
    straggler_rate: float = 0.01
    drain_timeout: Optional[int] = None
    graph: Optional[str] = None
    ticks_per_second: float = 1.0

    @classmethod
    def load(cls, path) -> "Scenario":
        with open(path) as fh:
            return cls.from_dict(yaml.safe_load(fh) or {})

    @classmethod
    def from_dict(cls, d: dict) -> "Scenario":
        sc = cls(seed=int(d.get("seed", 0)), site_prefix=d.get("site_prefix", DEFAULT_PREFIX),
                 address_mode=d.get("address_mode", "location"),
                 straggler_rate=float(d.get("straggler_rate", 0.01)),
                 drain_timeout=d.get("drain_timeout"), graph=d.get("graph"),
                 ticks_per_second=float(d.get("ticks_per_second", 1.0)))
        if sc.address_mode not in ("location", "hardware"):
            raise ValidationError(f"address_mode must be location or hardware")
        for s in d.get("switches") or []:
            sw = SwitchSpec(int(s["chassis"]), bool(s.get("lldp", True)),
                            bool(s.get("router_advertisements", True)))
            sc.switches[sw.chassis] = sw
        raw_nodes = list(d.get("nodes") or [])
        gen = d.get("generate")
        if gen:
            raw_nodes.extend(generate_nodes(**gen))
        for n in raw_nodes:
            if isinstance(n, NodeSpec):
                sc.nodes.append(n)
                continue
            try:
                sc.nodes.append(NodeSpec(str(n["id"]), TopologyLocation(int(n["chassis"]), int(n["port"])),
                                         parse_mac(n["nic"]), int(n.get("memory", DEFAULT_MEMORY))))
            except KeyError as exc:
                raise ValidationError(f"node entry {n!r} missing {exc}") from None
        for r in d.get("images") or [DEFAULT_IMAGE]:
            m = ImageManifest.from_recipe(r)
            sc.images[m.image_id] = m
        sc.default_image = d.get("default_image") or next(iter(sc.images))
        sc.faults = list(d.get("faults") or [])
        sc.jobs = list(d.get("jobs") or [])
        sc.reads = {k: [tuple(x) for x in v] for k, v in (d.get("reads") or {}).items()}
        bm = d.get("boot_mode") or {"mode": "full"}
        if bm.get("mode") == "lazy":
            sc.boot_mode = Lazy(int(bm["cache_bytes"]), int(bm.get("metadata_bytes", METADATA_BYTES_PER_LAYER)))
        elif bm.get("mode", "full") == "full":
            sc.boot_mode = Full()
        else:
            raise ValidationError(f"unknown boot mode {bm!r}")
        sc.validate()
        return sc

    def validate(self) -> None:
        ids = set()
        seen = {}
        for n in self.nodes:
            if n.node_id in ids:
                raise ValidationError(f"duplicate node id {n.node_id}")
            ids.add(n.node_id)
            other = seen.get(n.location)
            if other is not None:
                raise DuplicateAttachment(
                    f"{other} and {n.node_id} both wired to chassis {n.location.chassis} port {n.location.port}")
            seen[n.location] = n.node_id
            self.switches.setdefault(n.location.chassis, SwitchSpec(n.location.chassis))
        if self.default_image not in self.images:
            raise ValidationError(f"default image {self.default_image!r} not defined")


def generate_nodes(count: int, ports_per_switch: int = 256, memory: int = DEFAULT_MEMORY,
                   prefix: str = "n", first_chassis: int = 0) -> list:
    width = len(str(max(count - 1, 0)))
    out = []
    for i in range(count):
        c, p = divmod(i, ports_per_switch)
        out.append(NodeSpec(f"{prefix}{i:0{width}d}", TopologyLocation(first_chassis + c, p),
                            0x020000000000 + i, memory))
    return out
