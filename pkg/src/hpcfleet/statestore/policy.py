"""Per-key consistency classes.

Rules are ``namespace/property`` patterns (``*`` wildcards allowed on either
side); the first matching rule wins. Entities never take part in matching so
the decision can be cached per (namespace, property).
"""
from __future__ import annotations

from fnmatch import fnmatchcase

import yaml

from ..errors import ValidationError
from .records import Consistency

DEFAULT_RULES = (
    ("*/power", Consistency.STRONG),
    ("*/phase", Consistency.STRONG),
    ("*/image", Consistency.EVENTUAL),
    ("*/config", Consistency.EVENTUAL),
    ("gateway/*", Consistency.EVENTUAL),
)


class ConsistencyPolicy:
    def __init__(self, rules=DEFAULT_RULES, default=Consistency.STRONG):
        self.rules = [(pat, Consistency(cls)) for pat, cls in rules]
        for pat, _ in self.rules:
            if pat.count("/") != 1:
                raise ValidationError(f"policy pattern {pat!r} must be namespace/property")
        self.default = Consistency(default)
        self._cache: dict[tuple, Consistency] = {}

    def classify(self, key) -> Consistency:
        ck = (key[0], key[2])
        hit = self._cache.get(ck)
        if hit is None:
            probe = f"{key[0]}/{key[2]}"
            hit = self.default
            for pat, cls in self.rules:
                if fnmatchcase(probe, pat):
                    hit = cls
                    break
            self._cache[ck] = hit
        return hit

    @classmethod
    def load(cls, path) -> "ConsistencyPolicy":
        with open(path) as fh:
            doc = yaml.safe_load(fh) or {}
        rules = [(r["match"], r["class"]) for r in doc.get("rules", [])]
        return cls(rules or DEFAULT_RULES, doc.get("default", "strong"))
