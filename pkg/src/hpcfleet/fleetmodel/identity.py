"""Topology-derived node identity.

Address layout (128 bits): site prefix (64) | switch chassis (32) | switch port (16) | zeros (16).
Hostname: ``node-c{chassis}-p{port}``. Neither depends on the NIC, so a node
replaced at the same switch port keeps its name and address.
"""
from __future__ import annotations

import ipaddress
from dataclasses import dataclass
from typing import Union

from ..errors import ValidationError

DEFAULT_PREFIX = "fd00::/64"

_U32 = (1 << 32) - 1
_U16 = (1 << 16) - 1
_U48 = (1 << 48) - 1


@dataclass(frozen=True, order=True)
class TopologyLocation:
    chassis: int
    port: int

    def __post_init__(self):
        for name, val, hi in (("chassis", self.chassis, _U32), ("port", self.port, _U16)):
            if isinstance(val, bool) or not isinstance(val, int) or not 0 <= val <= hi:
                raise ValidationError(f"switch {name} id {val!r} out of range 0..{hi}")

    def to_json(self) -> list:
        return [self.chassis, self.port]


def _prefix_bits(site_prefix) -> int:
    net = ipaddress.IPv6Network(site_prefix, strict=False)
    if net.prefixlen > 64:
        raise ValidationError(f"site prefix {site_prefix} is longer than /64")
    return int(net.network_address) >> 64


def derive_identity(location: TopologyLocation, site_prefix=DEFAULT_PREFIX):
    """Return ``(IPv6Address, hostname)`` for a switch location."""
    bits = (_prefix_bits(site_prefix) << 64) | (location.chassis << 32) | (location.port << 16)
    return ipaddress.IPv6Address(bits), f"node-c{location.chassis}-p{location.port}"


def parse_mac(mac: Union[str, int]) -> int:
    if isinstance(mac, int):
        if not 0 <= mac <= _U48:
            raise ValidationError(f"hardware address {mac:#x} exceeds 48 bits")
        return mac
    parts = mac.replace("-", ":").split(":")
    if len(parts) != 6:
        raise ValidationError(f"malformed hardware address {mac!r}")
    try:
        return int("".join(f"{int(p, 16):02x}" for p in parts), 16)
    except ValueError:
        raise ValidationError(f"malformed hardware address {mac!r}") from None


def format_mac(mac: int) -> str:
    return ":".join(f"{(mac >> s) & 0xFF:02x}" for s in range(40, -1, -8))


def hardware_address(mac, site_prefix=DEFAULT_PREFIX) -> ipaddress.IPv6Address:
    """Address self-assigned from the NIC.

    The low 64 bits are the upper 24 NIC bits, 16 zero bits, then the lower 24
    NIC bits (EUI-64 placement with a zero filler and no bit inversion).
    """
    m = parse_mac(mac)
    iid = ((m >> 24) << 40) | (m & 0xFFFFFF)
    return ipaddress.IPv6Address((_prefix_bits(site_prefix) << 64) | iid)
