"""Emergency remediation: desires written under an emergency origin.

The reconcile loop services entities with emergency-origin desires before
anything else.
"""
from __future__ import annotations

import fnmatch

from ..errors import UnknownEventKind, ValidationError
from ..statestore.keys import StateKey
from ..statestore.records import Kind

EVENT_KINDS = ("firewall_rule", "revoke_access", "emergency_patch")
CLUSTER = "cluster"


def _origin(store, name: str) -> str:
    origin = f"emergency:{name}"
    if store.origin_kind(origin) is None:
        store.register_origin(origin, "emergency")
    return origin


def quarantine_node(store, node: str, reason: str = "attestation") -> object:
    return store.put_desire(StateKey("node", node, "phase"), "Quarantined", _origin(store, reason))


def remediate(store, event: dict, nodes=None) -> list:
    """Apply one emergency event and return the desire records written.

    * ``{"kind": "revoke_access", "user": u}`` -> ``cluster/access/deny:u = True``
    * ``{"kind": "firewall_rule", "rule": r}`` -> ``r`` appended to ``cluster/firewall/rules``
    * ``{"kind": "emergency_patch", "image": i, "nodes": [...] or "select": glob}``
      -> image desires for the selected nodes
    """
    kind = event.get("kind")
    if kind not in EVENT_KINDS:
        raise UnknownEventKind(f"unknown emergency event kind {kind!r}")
    origin = _origin(store, kind)
    if kind == "revoke_access":
        user = event.get("user")
        if not user:
            raise ValidationError("revoke_access needs a user")
        return [store.put_desire(StateKey(CLUSTER, "access", f"deny:{user}"), True, origin)]
    if kind == "firewall_rule":
        rule = str(event.get("rule") or "").strip()
        if not rule or ";" in rule:
            raise ValidationError("firewall_rule needs one rule without ';'")
        key = StateKey(CLUSTER, "firewall", "rules")
        cur = store.value(key, Kind.DESIRE) or ""
        rules = [r for r in cur.split(";") if r]
        if rule in rules:
            return []
        return [store.put_desire(key, ";".join(rules + [rule]), origin)]
    image = event.get("image")
    if not image:
        raise ValidationError("emergency_patch needs an image")
    targets = event.get("nodes")
    if targets is None:
        pattern = event.get("select", "*")
        if nodes is None:
            nodes = {r.key.entity for r in store.scan("node")}
            nodes |= {r.key.entity for r in store.scan("node", Kind.DESIRE)}
        pool = nodes
        targets = [n for n in pool if fnmatch.fnmatchcase(n, pattern)]
    return [store.put_desire(StateKey("node", n, "image"), image, origin) for n in sorted(targets)]
