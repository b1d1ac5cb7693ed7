"""Replication wire messages: JSON objects ``{type, from, to, epoch, payload}``."""
from __future__ import annotations

import json
from dataclasses import dataclass, field

VOTE_REQUEST = "vote_request"
VOTE_REPLY = "vote_reply"
APPEND_REQUEST = "append_request"
APPEND_REPLY = "append_reply"

MESSAGE_TYPES = (VOTE_REQUEST, VOTE_REPLY, APPEND_REQUEST, APPEND_REPLY)

# payload fields each type must carry
_REQUIRED = {
    VOTE_REQUEST: ("last_index", "last_epoch"),
    VOTE_REPLY: ("granted",),
    APPEND_REQUEST: ("prev_index", "prev_epoch", "entries", "leader_commit"),
    APPEND_REPLY: ("success", "match_index"),
}


@dataclass(frozen=True, slots=True)
class Message:
    type: str
    src: str
    dst: str
    epoch: int
    payload: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(
            {"type": self.type, "from": self.src, "to": self.dst, "epoch": self.epoch,
             "payload": self.payload},
            sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_json(cls, text: str) -> "Message":
        obj = json.loads(text)
        return cls(obj["type"], obj["from"], obj["to"], obj["epoch"], obj.get("payload") or {})


def well_formed(msg) -> bool:
    if not isinstance(msg, Message) or msg.type not in _REQUIRED:
        return False
    if not isinstance(msg.epoch, int) or msg.epoch < 0:
        return False
    if not isinstance(msg.payload, dict):
        return False
    return all(k in msg.payload for k in _REQUIRED[msg.type])
