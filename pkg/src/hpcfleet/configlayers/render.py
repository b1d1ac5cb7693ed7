"""Render an effective configuration into per-entity desires.

Recognized keys:

* ``groups.<name>.select`` (glob over node ids) or ``groups.<name>.nodes`` (list),
  plus ``groups.<name>.image`` and ``groups.<name>.phase``
* ``image`` / ``phase`` in a node layer, overriding the node's group
* ``services.<name>.<property>``, e.g. ``replicas``; a string value
  ``secret:<name>`` renders as the sealed secret's public reference
"""
from __future__ import annotations

import fnmatch
import threading
from dataclasses import dataclass, field
from typing import Iterable, Optional

from ..digest import digest_of
from ..errors import KeyNotFound, UnknownImage, ValidationError
from ..fleetmodel.phases import NodePhase
from ..framing import RecordLog
from ..statestore.keys import StateKey
from .layers import EffectiveConfig
from .secrets import SecretStore

SECRET_PREFIX = "secret:"


def _node_ids(fleet) -> list:
    return sorted(getattr(n, "node_id", n) for n in fleet)


def _groups(values: dict) -> dict:
    groups: dict = {}
    for k, v in values.items():
        parts = k.split(".")
        if parts[0] != "groups":
            continue
        if len(parts) != 3:
            raise ValidationError(f"group key {k!r} must be groups.<name>.<property>")
        groups.setdefault(parts[1], {})[parts[2]] = v
    return groups


def _members(name: str, spec: dict, nodes: list) -> list:
    if "nodes" in spec:
        listed = spec["nodes"]
        if not isinstance(listed, list):
            raise ValidationError(f"groups.{name}.nodes must be a list")
        known = set(nodes)
        return sorted(n for n in listed if n in known)
    if "select" in spec:
        return [n for n in nodes if fnmatch.fnmatchcase(n, str(spec["select"]))]
    raise ValidationError(f"group {name!r} needs select or nodes")


def _resolve(value, secrets: Optional[SecretStore]):
    if isinstance(value, str) and value.startswith(SECRET_PREFIX):
        name = value[len(SECRET_PREFIX):]
        if secrets is None or name not in secrets:
            raise ValidationError(f"config references unknown secret {name!r}")
        return secrets.get(name).ref
    return value


def _check_node_value(node, prop, value, images):
    if prop == "image":
        if images is not None and value not in images:
            raise UnknownImage(f"image {value!r} for {node} is not in the registry")
    elif prop == "phase":
        try:
            NodePhase(value)
        except ValueError:
            raise ValidationError(f"{node}: unknown phase {value!r}") from None


def render_desires(effective: EffectiveConfig, fleet, images: Optional[Iterable[str]] = None,
                   secrets: Optional[SecretStore] = None) -> dict:
    """Pure fan-out of configuration into ``{StateKey: value}``."""
    images = None if images is None else set(images)
    nodes = _node_ids(fleet)
    out: dict = {}
    per_node: dict = {}
    for gname, spec in sorted(_groups(effective.values).items()):
        for n in _members(gname, spec, nodes):
            for prop in ("image", "phase"):
                if prop not in spec:
                    continue
                prev = per_node.setdefault(n, {}).get(prop)
                if prev is not None and prev[1] != spec[prop]:
                    raise ValidationError(
                        f"{n} is in groups {prev[0]!r} and {gname!r} with different {prop}")
                per_node[n][prop] = (gname, spec[prop])
    for n in nodes:
        props = {p: v for p, (_, v) in per_node.get(n, {}).items()}
        for prop in ("image", "phase"):
            if prop in effective.node_values.get(n, {}):
                props[prop] = effective.node_values[n][prop]
        for prop, v in props.items():
            _check_node_value(n, prop, v, images)
            out[StateKey("node", n, prop)] = v
    for k, v in effective.values.items():
        parts = k.split(".")
        if parts[0] != "services":
            continue
        if len(parts) != 3:
            raise ValidationError(f"service key {k!r} must be services.<name>.<property>")
        v = _resolve(v, secrets)
        if parts[2] == "replicas" and (isinstance(v, bool) or not isinstance(v, int) or v < 0):
            raise ValidationError(f"{k} must be a non-negative integer")
        if not isinstance(v, (bool, int, str)):
            raise ValidationError(f"{k}: only scalar service properties are rendered")
        out[StateKey("service", parts[1], parts[2])] = v
    return dict(sorted(out.items()))


@dataclass(frozen=True)
class Changeset:
    added: tuple = ()
    removed: tuple = ()
    modified: tuple = ()

    def __bool__(self):
        return bool(self.added or self.removed or self.modified)

    def to_json(self) -> dict:
        return {name: [str(k) for k in getattr(self, name)]
                for name in ("added", "removed", "modified")}


@dataclass(frozen=True)
class RenderResult:
    render_id: str
    desires: dict
    changeset: Changeset
    stack_version: str = ""
    written: tuple = field(default=())


def changeset(previous: dict, current: dict) -> Changeset:
    added = tuple(sorted(k for k in current if k not in previous))
    removed = tuple(sorted(k for k in previous if k not in current))
    modified = tuple(sorted(k for k in current if k in previous and previous[k] != current[k]))
    return Changeset(added, removed, modified)


class Renderer:
    """Renders into a state store and keeps an append-only, checksummed render log.

    Only added or modified desires are written, so re-rendering unchanged
    configuration creates no new desire versions.
    """

    def __init__(self, store, images: Optional[Iterable[str]] = None,
                 secrets: Optional[SecretStore] = None, log_path=None):
        self.store = store
        self.images = None if images is None else set(images)
        self.secrets = secrets
        self.log = RecordLog(log_path)
        self.previous: dict = {}
        self.count = 0
        self._lock = threading.Lock()

    def render(self, effective: EffectiveConfig, fleet) -> RenderResult:
        with self._lock:
            desires = render_desires(effective, fleet, self.images, self.secrets)
            self.count += 1
            rid = f"r{self.count}"
            cs = changeset(self.previous, desires)
            self.store.register_origin(rid, "render")
            written = []
            for k in cs.added + cs.modified:
                written.append(self.store.put_desire(k, desires[k], rid))
            for k in cs.removed:
                self.store.retract_desire(k, rid)
            self.log.append({
                "render_id": rid,
                "stack_version": effective.stack_version,
                "changeset": cs.to_json(),
                "values": {str(k): desires[k] for k in cs.added + cs.modified},
                "desires_digest": digest_of({str(k): v for k, v in desires.items()}),
            })
            self.previous = desires
            return RenderResult(rid, desires, cs, effective.stack_version, tuple(written))
