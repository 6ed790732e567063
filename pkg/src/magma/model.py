"""Domain types shared across the engine.

Every type here is an immutable value. Stores replace values instead of
mutating them, so instances can be handed to other threads freely.
"""

from __future__ import annotations

import re
import string
from dataclasses import dataclass, field, fields
from datetime import date, datetime, timezone
from enum import Enum
from typing import Any, Iterable

from .errors import DegenerateEntityError


class EdgeType(str, Enum):
    TEMPORAL = "TEMPORAL"
    CAUSAL = "CAUSAL"
    SEMANTIC = "SEMANTIC"
    ENTITY = "ENTITY"

    @property
    def directed(self) -> bool:
        return self in (EdgeType.TEMPORAL, EdgeType.CAUSAL)


class Origin(str, Enum):
    FAST_PATH = "FAST_PATH"
    CONSOLIDATION = "CONSOLIDATION"
    MANUAL = "MANUAL"


class Intent(str, Enum):
    WHY = "WHY"
    WHEN = "WHEN"
    ENTITY = "ENTITY"
    GENERAL = "GENERAL"


# ---------------------------------------------------------------------------
# time helpers
# ---------------------------------------------------------------------------

def to_epoch(value: Any) -> int:
    """Coerce an int, datetime, date or ISO-8601 string to UTC epoch seconds."""
    if isinstance(value, bool):
        raise TypeError("bool is not a timestamp")
    if isinstance(value, (int, float)):
        return int(value)
    if isinstance(value, datetime):
        if value.tzinfo is None:
            value = value.replace(tzinfo=timezone.utc)
        return int(value.timestamp())
    if isinstance(value, date):
        return int(datetime(value.year, value.month, value.day, tzinfo=timezone.utc).timestamp())
    if isinstance(value, str):
        text = value.strip()
        if text.endswith("Z"):
            text = text[:-1] + "+00:00"
        try:
            parsed = datetime.fromisoformat(text)
        except ValueError as exc:
            raise ValueError(f"unparseable timestamp {value!r}") from exc
        return to_epoch(parsed)
    raise TypeError(f"cannot interpret {type(value).__name__} as a timestamp")


def from_epoch(ts: int) -> datetime:
    return datetime.fromtimestamp(ts, tz=timezone.utc)


def iso(ts: int) -> str:
    """Render epoch seconds as ``YYYY-MM-DDTHH:MM:SSZ``."""
    return from_epoch(ts).strftime("%Y-%m-%dT%H:%M:%SZ")


# ---------------------------------------------------------------------------
# entity names
# ---------------------------------------------------------------------------

_PUNCT = string.punctuation + "‘’“”"
_WS = re.compile(r"\s+")


def normalize_entity(name: str) -> str:
    """Canonical form used to merge entity mentions.

    >>> normalize_entity("  JOHN  SMITH ")
    'john smith'
    """
    canon = _WS.sub(" ", name.casefold()).strip().strip(_PUNCT).strip()
    if not canon:
        raise DegenerateEntityError(f"degenerate entity: {name!r}")
    return canon


# ---------------------------------------------------------------------------
# records
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AttributeSet:
    entities: tuple[str, ...] = ()
    topic: str = ""
    relationships: tuple[str, ...] = ()
    semantic_facts: tuple[str, ...] = ()
    dates_mentioned: tuple[str, ...] = ()
    speaker: str = ""
    summary: str = ""

    LIST_FIELDS = ("entities", "relationships", "semantic_facts", "dates_mentioned")
    TEXT_FIELDS = ("topic", "speaker", "summary")

    def to_dict(self) -> dict[str, Any]:
        return {f.name: list(v) if isinstance(v := getattr(self, f.name), tuple) else v
                for f in fields(self)}

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "AttributeSet":
        kwargs: dict[str, Any] = {}
        for name in cls.LIST_FIELDS:
            kwargs[name] = tuple(str(x) for x in data.get(name) or ())
        for name in cls.TEXT_FIELDS:
            kwargs[name] = str(data.get(name) or "")
        return cls(**kwargs)

    def texts(self) -> Iterable[str]:
        """All free text carried by the attributes (used for keyword indexing)."""
        yield from self.entities
        yield self.topic
        yield from self.relationships
        yield from self.semantic_facts
        yield from self.dates_mentioned
        yield self.summary


@dataclass(frozen=True)
class EventNode:
    id: str
    content: str
    timestamp: int
    embedding: tuple[float, ...]
    attributes: AttributeSet = field(default_factory=AttributeSet)
    episode_id: str | None = None
    timestamp_text: str = ""

    def __post_init__(self) -> None:
        if not isinstance(self.embedding, tuple):
            object.__setattr__(self, "embedding", tuple(float(x) for x in self.embedding))

    def to_dict(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "content": self.content,
            "timestamp": self.timestamp,
            "timestamp_text": self.timestamp_text,
            "embedding": list(self.embedding),
            "attributes": self.attributes.to_dict(),
            "episode_id": self.episode_id,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "EventNode":
        return cls(
            id=str(data["id"]),
            content=str(data["content"]),
            timestamp=int(data["timestamp"]),
            embedding=tuple(float(x) for x in data["embedding"]),
            attributes=AttributeSet.from_dict(data.get("attributes") or {}),
            episode_id=data.get("episode_id"),
            timestamp_text=str(data.get("timestamp_text") or ""),
        )


@dataclass(frozen=True)
class EntityNode:
    id: str
    canonical_name: str
    aliases: frozenset[str] = frozenset()

    def __post_init__(self) -> None:
        if not self.canonical_name:
            raise DegenerateEntityError("entity with empty canonical name")
        aliases = frozenset(self.aliases) | {self.canonical_name}
        object.__setattr__(self, "aliases", aliases)

    @staticmethod
    def id_for(canonical_name: str) -> str:
        return "ent:" + canonical_name

    @classmethod
    def from_mention(cls, mention: str) -> "EntityNode":
        canon = normalize_entity(mention)
        return cls(cls.id_for(canon), canon, frozenset({mention.strip()}))

    def with_alias(self, alias: str) -> "EntityNode":
        if alias in self.aliases:
            return self
        return EntityNode(self.id, self.canonical_name, self.aliases | {alias})

    def to_dict(self) -> dict[str, Any]:
        return {"id": self.id, "canonical_name": self.canonical_name,
                "aliases": sorted(self.aliases)}

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "EntityNode":
        return cls(str(data["id"]), str(data["canonical_name"]),
                   frozenset(str(a) for a in data.get("aliases") or ()))


@dataclass(frozen=True)
class TypedEdge:
    src: str
    dst: str
    edge_type: EdgeType
    confidence: float = 1.0
    origin: Origin = Origin.MANUAL
    created_at: int = 0

    @property
    def key(self) -> tuple[str, str, EdgeType]:
        return (self.src, self.dst, self.edge_type)

    def other(self, node_id: str) -> str:
        return self.dst if node_id == self.src else self.src

    def to_dict(self) -> dict[str, Any]:
        return {
            "src": self.src,
            "dst": self.dst,
            "edge_type": self.edge_type.value,
            "confidence": self.confidence,
            "origin": self.origin.value,
            "created_at": self.created_at,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "TypedEdge":
        return cls(
            src=str(data["src"]),
            dst=str(data["dst"]),
            edge_type=EdgeType(data["edge_type"]),
            confidence=float(data.get("confidence", 1.0)),
            origin=Origin(data.get("origin", Origin.MANUAL.value)),
            created_at=int(data.get("created_at", 0)),
        )
