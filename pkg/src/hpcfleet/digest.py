"""Fast 64-bit content digests (FNV-1a).

These are integrity fingerprints for the simulator and audit records, not a
security primitive.
"""
import json

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_MASK = 0xFFFFFFFFFFFFFFFF

PREFIX = "fnv64:"


def fnv1a64(data: bytes) -> int:
    h = _FNV_OFFSET
    for b in data:
        h ^= b
        h = (h * _FNV_PRIME) & _MASK
    return h


def digest_bytes(data: bytes) -> str:
    return f"{PREFIX}{fnv1a64(data):016x}"


def canonical_json(obj) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), default=str).encode()


def digest_of(obj) -> str:
    """Digest of the canonical JSON encoding of ``obj``."""
    return digest_bytes(canonical_json(obj))


def is_digest(value) -> bool:
    return isinstance(value, str) and value.startswith(PREFIX) and len(value) == len(PREFIX) + 16
