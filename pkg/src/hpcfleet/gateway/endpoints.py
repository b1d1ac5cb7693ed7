"""Gateway endpoints published as eventually consistent facts."""
from __future__ import annotations

from dataclasses import dataclass

from ..statestore import KeyRange, StateKey

GATEWAY_NS = "gateway"
GATEWAY_OWNER = "gateway"
_PREFIX = "ep:"


def _claim(store, owner: str) -> None:
    rng = KeyRange.namespace(GATEWAY_NS)
    if not store.leases.overlapping(rng):
        store.transfer_ownership(rng, None, owner, 1)


def publish_endpoint(store, address: str, cluster: str = "default", live: bool = True,
                     owner: str = GATEWAY_OWNER):
    _claim(store, owner)
    return store.put_fact(owner, StateKey(GATEWAY_NS, cluster, _PREFIX + address), bool(live))


def withdraw_endpoint(store, address: str, cluster: str = "default", owner: str = GATEWAY_OWNER):
    return publish_endpoint(store, address, cluster, False, owner)


@dataclass(frozen=True)
class EndpointSet:
    cluster: str
    endpoints: tuple

    def __len__(self):
        return len(self.endpoints)

    def __iter__(self):
        return iter(self.endpoints)

    @classmethod
    def from_store(cls, store, cluster: str = "default") -> "EndpointSet":
        live = sorted(r.key.property[len(_PREFIX):] for r in store.scan(GATEWAY_NS)
                      if r.key.entity == cluster and r.key.property.startswith(_PREFIX) and r.value)
        return cls(cluster, tuple(live))

    def to_json(self) -> dict:
        return {"cluster": self.cluster, "endpoints": list(self.endpoints)}

    @classmethod
    def from_json(cls, d: dict) -> "EndpointSet":
        return cls(str(d.get("cluster", "default")), tuple(d.get("endpoints") or ()))
