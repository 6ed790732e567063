"""Rule cascade mapping a query to WHY > WHEN > ENTITY > GENERAL."""

from __future__ import annotations

import re
from typing import Iterable

from ..model import Intent, normalize_entity
from .timeparse import MONTHS, WEEKDAYS

_WHY = re.compile(r"\b(why|cause[ds]?|causing|reasons?|because|how come|led to|result of)\b")
_WHEN = re.compile(
    r"\b(when|what time|what date|which (day|date|year|month)|how long ago|"
    r"yesterday|today|tomorrow|ago|last (week|month|year)|"
    + "|".join(WEEKDAYS + [m for m in MONTHS if m not in ("may", "march")]) + r"|\d{4}-\d{2}-\d{2}|(19|20)\d{2})\b"
)
# before/after followed by something that reads like an event reference
_ORDERING = re.compile(r"\b(before|after)\s+(the|a|an|his|her|their|my|our|\w+ing)\b")
_WHO = re.compile(r"\b(who|whom|whose)\b")
_WH = re.compile(r"^\s*(what|which|where|how many|how much|who|whom|whose|name|list)\b")
_WORD = re.compile(r"[A-Za-z][\w'’-]*")
_NOT_NAMES = {"I", "I'm", "I've", "I'd", "I'll", "What", "Which", "Where", "When", "Who", "How",
              "Why", "Did", "Does", "Do", "Is", "Are", "Was", "Were", "Can", "Could", "Would",
              "Tell", "The", "A", "An", "In", "On"} | {d.capitalize() for d in WEEKDAYS} \
    | {m.capitalize() for m in MONTHS}


def proper_nouns(query: str) -> list[str]:
    """Capitalised tokens that are not sentence-initial or function words."""
    words = _WORD.findall(query)
    out = []
    for i, w in enumerate(words):
        base = re.sub(r"['’]s$", "", w)
        if i == 0 or not base[:1].isupper() or base in _NOT_NAMES:
            continue
        out.append(base)
    return out


def classify_intent(query: str, known_entities: Iterable[str] = ()) -> Intent:
    q = query.lower()
    if _WHY.search(q):
        return Intent.WHY
    if _WHEN.search(q) or _ORDERING.search(q):
        return Intent.WHEN
    if _WHO.search(q):
        return Intent.ENTITY
    known = {normalize_entity(e) for e in known_entities if e.strip(" .,'\"")}
    mentions_known = any(
        re.search(r"\b" + re.escape(name) + r"(['’]s)?\b", q) for name in known)
    if _WH.search(q) and (proper_nouns(query) or mentions_known):
        return Intent.ENTITY
    return Intent.GENERAL
