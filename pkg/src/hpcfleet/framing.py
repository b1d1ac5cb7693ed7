"""Length-prefixed, checksummed record logs.

Layout of one record: ``>I`` payload length, ``>I`` CRC-32 of the payload,
then the payload (canonical JSON). Used for the audit log, render log and
orchestrator checkpoints.
"""
from __future__ import annotations

import json
import os
import struct
import threading
import zlib

from .digest import canonical_json

_HEADER = struct.Struct(">II")


class CorruptRecord(Exception):
    def __init__(self, offset, reason):
        super().__init__(f"corrupt record at byte {offset}: {reason}")
        self.offset = offset


def encode_record(obj) -> bytes:
    payload = canonical_json(obj)
    return _HEADER.pack(len(payload), zlib.crc32(payload)) + payload


def decode_records(data: bytes, strict: bool = True):
    """Yield decoded objects from ``data``.

    With ``strict=False`` a torn tail (partial last record) is ignored, which is
    what a reader recovering after a crash wants. Checksum failures always raise.
    """
    offset = 0
    n = len(data)
    while offset < n:
        if n - offset < _HEADER.size:
            if strict:
                raise CorruptRecord(offset, "truncated header")
            return
        length, crc = _HEADER.unpack_from(data, offset)
        start = offset + _HEADER.size
        end = start + length
        if end > n:
            if strict:
                raise CorruptRecord(offset, "truncated payload")
            return
        payload = data[start:end]
        if zlib.crc32(payload) != crc:
            raise CorruptRecord(offset, "checksum mismatch")
        yield json.loads(payload)
        offset = end


class RecordLog:
    """Append-only record log kept in memory and optionally mirrored to a file."""

    def __init__(self, path: str | os.PathLike | None = None):
        self.path = os.fspath(path) if path is not None else None
        self._buf = bytearray()
        self._lock = threading.Lock()
        if self.path and os.path.exists(self.path):
            with open(self.path, "rb") as fh:
                self._buf.extend(fh.read())

    def append(self, obj) -> int:
        rec = encode_record(obj)
        with self._lock:
            offset = len(self._buf)
            self._buf.extend(rec)
            if self.path:
                with open(self.path, "ab") as fh:
                    fh.write(rec)
        return offset

    def records(self, strict: bool = True):
        return list(decode_records(bytes(self._buf), strict=strict))

    def raw(self) -> bytes:
        return bytes(self._buf)

    def __len__(self):
        return len(self.records(strict=False))
