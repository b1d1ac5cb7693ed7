"""Image manifests and the three image-building policies."""
from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Optional

from ..digest import digest_of
from ..errors import ValidationError

KINDS = ("minimal_os", "service_container", "job_container")


@dataclass(frozen=True)
class Layer:
    digest: str
    size: int
    name: str = ""


@dataclass(frozen=True)
class ImageManifest:
    image_id: str
    kind: str
    layers: tuple
    read_only_root: bool = False
    overlay: bool = False
    # node this manifest was customized for (per-node images and overlays)
    node: Optional[str] = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValidationError(f"{self.image_id}: unknown image kind {self.kind!r}")
        layers = tuple(l if isinstance(l, Layer) else Layer(*l) for l in self.layers)
        object.__setattr__(self, "layers", layers)
        digests = [l.digest for l in layers]
        if len(set(digests)) != len(digests):
            raise ValidationError(f"{self.image_id}: duplicate layer digests")
        if any(l.size < 0 for l in layers):
            raise ValidationError(f"{self.image_id}: negative layer size")
        if self.kind == "minimal_os" and not (self.read_only_root and self.overlay):
            raise ValidationError(
                f"{self.image_id}: a minimal OS image needs a read-only root and a memory overlay")

    @property
    def size(self) -> int:
        return sum(l.size for l in self.layers)

    @property
    def digest(self) -> str:
        return digest_of([self.kind, [[l.digest, l.size] for l in self.layers]])

    def to_json(self) -> dict:
        return {"image_id": self.image_id, "kind": self.kind,
                "layers": [[l.digest, l.size, l.name] for l in self.layers],
                "read_only_root": self.read_only_root, "overlay": self.overlay,
                "node": self.node, "digest": self.digest}

    @classmethod
    def from_recipe(cls, recipe: dict) -> "ImageManifest":
        """``{id, kind, layers: [{name, size}]}``; layer digests derive from content names."""
        try:
            image_id = str(recipe["id"])
            kind = recipe.get("kind", "minimal_os")
            layers = tuple(
                Layer(digest_of([image_id, l["name"], int(l["size"])]), int(l["size"]), str(l["name"]))
                for l in recipe["layers"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ValidationError(f"malformed image recipe {recipe!r}: {exc}") from None
        if not layers:
            raise ValidationError(f"recipe {image_id!r} defines no base layers")
        ro = recipe.get("read_only_root", kind == "minimal_os")
        ov = recipe.get("overlay", kind == "minimal_os")
        return cls(image_id, kind, layers, bool(ro), bool(ov))


class BuildPolicy(str, enum.Enum):
    GENERALIZED = "Generalized"
    PER_NODE = "PerNode"
    OVERLAY_PER_NODE = "OverlayPerNode"


def _node_id(n):
    return getattr(n, "node_id", n)


def build_images(policy, fleet, recipe: dict) -> list:
    """Return manifests for ``fleet`` under ``policy``.

    Generalized: one shared image, node specifics come from boot parameters.
    PerNode: one image per node with a node-specific customization layer.
    OverlayPerNode: one shared base plus one overlay manifest per node.
    """
    policy = BuildPolicy(policy)
    base = ImageManifest.from_recipe(recipe)
    nodes = sorted(_node_id(n) for n in fleet)
    custom = int(recipe.get("node_layer_size", 4096))
    if policy is BuildPolicy.GENERALIZED:
        return [base]

    def node_layer(n):
        return Layer(digest_of([base.image_id, "node-config", n, custom]), custom, f"config-{n}")

    if policy is BuildPolicy.PER_NODE:
        return [ImageManifest(f"{base.image_id}-{n}", base.kind, base.layers + (node_layer(n),),
                              base.read_only_root, base.overlay, node=n) for n in nodes]
    overlays = [ImageManifest(f"{base.image_id}-overlay-{n}", "service_container", (node_layer(n),),
                              overlay=True, node=n) for n in nodes]
    return [base] + overlays
