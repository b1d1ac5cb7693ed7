"""Sealed secrets: AES-GCM envelopes under keys from a local keyring file."""
from __future__ import annotations

import base64
import json
import os
from dataclasses import dataclass
from typing import Optional

from cryptography.exceptions import InvalidTag
from cryptography.hazmat.primitives.ciphers.aead import AESGCM

from ..digest import digest_of
from ..errors import IntegrityError, KeyNotFound

TAG_BYTES = 16


def _b64(b: bytes) -> str:
    return base64.b64encode(b).decode()


def _unb64(s: str) -> bytes:
    return base64.b64decode(s.encode())


class Keyring:
    def __init__(self, keys: Optional[dict] = None, path=None):
        self._keys: dict[str, bytes] = dict(keys or {})
        self.path = path

    @classmethod
    def load(cls, path) -> "Keyring":
        with open(path) as fh:
            raw = json.load(fh)
        return cls({k: _unb64(v) for k, v in raw.items()}, path)

    def save(self, path=None) -> None:
        path = path or self.path
        fd = os.open(path, os.O_WRONLY | os.O_CREAT | os.O_TRUNC, 0o600)
        with os.fdopen(fd, "w") as fh:
            json.dump({k: _b64(v) for k, v in sorted(self._keys.items())}, fh)

    def generate(self, key_id: str) -> None:
        self._keys[key_id] = AESGCM.generate_key(bit_length=256)

    def key(self, key_id: str) -> bytes:
        try:
            return self._keys[key_id]
        except KeyError:
            raise KeyNotFound(f"key {key_id!r} not in keyring") from None

    def __contains__(self, key_id):
        return key_id in self._keys


@dataclass(frozen=True)
class SealedSecret:
    key_id: str
    nonce: bytes
    ciphertext: bytes
    tag: bytes

    def to_json(self) -> dict:
        return {"key_id": self.key_id, "nonce": _b64(self.nonce),
                "ciphertext": _b64(self.ciphertext), "tag": _b64(self.tag)}

    @classmethod
    def from_json(cls, d: dict) -> "SealedSecret":
        return cls(d["key_id"], _unb64(d["nonce"]), _unb64(d["ciphertext"]), _unb64(d["tag"]))

    @property
    def ref(self) -> str:
        """Stable public reference; safe to persist anywhere."""
        return f"sealed:{self.key_id}:{digest_of(self.to_json())}"


def seal_secret(plaintext, key_id: str, keyring: Keyring) -> SealedSecret:
    if isinstance(plaintext, str):
        plaintext = plaintext.encode()
    key = keyring.key(key_id)
    nonce = os.urandom(12)
    blob = AESGCM(key).encrypt(nonce, plaintext, key_id.encode())
    return SealedSecret(key_id, nonce, blob[:-TAG_BYTES], blob[-TAG_BYTES:])


def unseal_secret(sealed: SealedSecret, keyring: Keyring) -> bytes:
    key = keyring.key(sealed.key_id)
    try:
        return AESGCM(key).decrypt(sealed.nonce, sealed.ciphertext + sealed.tag,
                                   sealed.key_id.encode())
    except InvalidTag:
        raise IntegrityError(f"sealed secret under {sealed.key_id!r} failed authentication") from None


class SecretStore:
    """Named sealed secrets, persisted as JSON ciphertext only."""

    def __init__(self, keyring: Keyring):
        self.keyring = keyring
        self._sealed: dict[str, SealedSecret] = {}

    def put(self, name: str, plaintext, key_id: str) -> SealedSecret:
        s = seal_secret(plaintext, key_id, self.keyring)
        self._sealed[name] = s
        return s

    def get(self, name: str) -> SealedSecret:
        try:
            return self._sealed[name]
        except KeyError:
            raise KeyNotFound(f"no sealed secret named {name!r}") from None

    def reveal(self, name: str) -> bytes:
        return unseal_secret(self.get(name), self.keyring)

    def __contains__(self, name):
        return name in self._sealed

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump({n: s.to_json() for n, s in sorted(self._sealed.items())}, fh, sort_keys=True)

    @classmethod
    def load(cls, path, keyring: Keyring) -> "SecretStore":
        out = cls(keyring)
        with open(path) as fh:
            for n, d in json.load(fh).items():
                out._sealed[n] = SealedSecret.from_json(d)
        return out
