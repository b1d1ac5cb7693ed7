"""Resumable task checkpoints stored as checksummed records, one log per task."""
from __future__ import annotations

import os
import re
from typing import Optional

from ..errors import CheckpointInvalid, ValidationError
from ..framing import CorruptRecord, RecordLog

SAFE_TO_REPEAT = "safe-to-repeat"
RESUME_ONLY = "resume-only"

_TASK_ID = re.compile(r"^[A-Za-z0-9_.-]+$")


class CheckpointStore:
    """``directory=None`` keeps logs in memory (shared by every holder of this object)."""

    def __init__(self, directory=None):
        self.directory = directory
        if directory is not None:
            os.makedirs(directory, exist_ok=True)
        self._mem: dict[str, RecordLog] = {}

    def _log(self, task_id: str) -> RecordLog:
        if not _TASK_ID.match(task_id):
            raise ValidationError(f"bad task id {task_id!r}")
        if self.directory is None:
            return self._mem.setdefault(task_id, RecordLog())
        return RecordLog(os.path.join(self.directory, f"{task_id}.ckpt"))

    def path(self, task_id: str) -> Optional[str]:
        return None if self.directory is None else os.path.join(self.directory, f"{task_id}.ckpt")

    def append(self, task_id: str, record: dict) -> None:
        self._log(task_id).append(dict(record, task_id=task_id))

    def records(self, task_id: str) -> list:
        try:
            recs = self._log(task_id).records(strict=True)
        except CorruptRecord as exc:
            raise CheckpointInvalid(f"checkpoint for {task_id!r}: {exc}") from None
        if any(r.get("task_id") != task_id for r in recs):
            raise CheckpointInvalid(f"checkpoint for {task_id!r} holds another task's records")
        return recs

    def tasks(self) -> list:
        if self.directory is None:
            return sorted(self._mem)
        return sorted(f[:-5] for f in os.listdir(self.directory) if f.endswith(".ckpt"))

    def latest(self, task_id: str) -> Optional[dict]:
        recs = self.records(task_id)
        return recs[-1] if recs else None
