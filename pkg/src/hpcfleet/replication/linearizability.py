"""Linearizability checking for single-register histories.

Search over linearization orders with memoization on (remaining ops,
register value). Operations whose outcome is unknown (the client timed out)
have ``response=None``: they may take effect at any point after invocation, or
not at all.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional


@dataclass(frozen=True)
class Op:
    id: int
    kind: str            # "w" or "r"
    value: object
    invoke: float
    response: Optional[float]   # None: outcome unknown

    @property
    def end(self) -> float:
        return math.inf if self.response is None else self.response


def check_register(history, initial=None) -> bool:
    ops = {op.id: op for op in history}
    memo: set = set()

    def search(remaining: frozenset, value) -> bool:
        if all(ops[i].response is None for i in remaining):
            return True
        state = (remaining, value)
        if state in memo:
            return False
        memo.add(state)
        horizon = min(ops[i].end for i in remaining)
        for i in sorted(remaining):
            op = ops[i]
            if op.invoke > horizon:
                continue
            rest = remaining - {i}
            if op.kind == "w":
                if search(rest, op.value):
                    return True
            elif op.value == value and search(rest, value):
                return True
            if op.response is None and search(rest, value):
                return True
        return False

    return search(frozenset(ops), initial)
