"""Rule-based closure-type annotation from free-text descriptions.

Patterns are whitespace-separated tokens:

* ``word``  matches exactly that word,
* ``word*`` matches any word starting with ``word``,
* ``*``     matches any run of words, possibly empty.

A pattern may match anywhere in the description. Matching is
case-insensitive and ignores punctuation.
"""
from __future__ import annotations

import enum
import re
from functools import lru_cache


class ClosureType(str, enum.Enum):
    ROAD = "RoadClosure"
    LANE = "LaneClosure"
    NONE = "NoClosure"


# (pattern, source it was observed in, closure type); road patterns are tried first
PATTERNS: tuple[tuple[str, str, ClosureType], ...] = (
    ("close* * roadwork", "Bing", ClosureType.ROAD),
    ("close* * bridge", "Bing", ClosureType.ROAD),
    ("close* * roadwork", "MapQuest", ClosureType.ROAD),
    ("road close* *", "MapQuest", ClosureType.ROAD),
    ("hard shoulder close*", "Bing", ClosureType.LANE),
    ("* lane* block*", "Bing", ClosureType.LANE),
    ("* reduced * lane*", "Bing", ClosureType.LANE),
    ("* lane* close*", "Bing", ClosureType.LANE),
    ("* lane closure*", "MapQuest", ClosureType.LANE),
    ("hard shoulder block*", "MapQuest", ClosureType.LANE),
    ("* reduced * lane*", "MapQuest", ClosureType.LANE),
    ("* lane* block*", "MapQuest", ClosureType.LANE),
    ("* lane* close*", "MapQuest", ClosureType.LANE),
    ("* shoulder close*", "MapQuest", ClosureType.LANE),
)

_WORD = re.compile(r"[a-z0-9]+")


def _tokens(text: str) -> list[str]:
    return _WORD.findall(text.lower())


@lru_cache(maxsize=None)
def compile_pattern(pattern: str) -> re.Pattern:
    """Translate a wildcard pattern into a regex over the space-joined token string."""
    parts = []
    for tok in pattern.lower().split():
        if tok == "*":
            parts.append(None)
        elif tok.endswith("*"):
            parts.append(re.escape(tok[:-1]) + r"[a-z0-9]*")
        else:
            parts.append(re.escape(tok))
    body = ""
    need_sep = False
    for p in parts:
        if p is None:
            # any run of whole words, including none
            body += r"(?: [a-z0-9]+)*" if need_sep else r"(?:[a-z0-9]+ )*"
            continue
        body += (" " if need_sep else "") + p
        need_sep = True
    return re.compile(r"(?:^| )" + body + r"(?= |$)")


def matches(pattern: str, description: str) -> bool:
    return compile_pattern(pattern).search(" ".join(_tokens(description))) is not None


def annotate_closure(description: str, patterns=PATTERNS) -> ClosureType:
    text = " ".join(_tokens(description or ""))
    if not text:
        return ClosureType.NONE
    for pattern, _source, kind in patterns:
        if compile_pattern(pattern).search(text):
            return kind
    return ClosureType.NONE
