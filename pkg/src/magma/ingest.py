"""Fast path: segment, embed, append to the backbone, index, enqueue.

Nothing here calls a reasoning provider. The only external call is the
embedding request, made before the write gate is taken so a slow encoder
never blocks readers.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Any, Sequence

from .errors import EncoderError, MagmaError, OutOfOrderEventError
from .model import AttributeSet, EventNode, iso, to_epoch
from .providers import Encoder
from .store import MemoryStore

SEGMENT_POLICIES = ("per-turn", "split-paragraphs")
_PARAGRAPH = re.compile(r"\n\s*\n")


@dataclass(frozen=True)
class Interaction:
    speaker: str
    text: str
    timestamp: int
    session: str | None = None
    timestamp_text: str = ""

    @classmethod
    def create(cls, speaker: str, text: str, timestamp: Any,
               session: str | None = None) -> "Interaction":
        ts = to_epoch(timestamp)
        raw = timestamp if isinstance(timestamp, str) else iso(ts)
        return cls(speaker or "", text, ts, session, raw)

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "Interaction":
        for key in ("text", "timestamp"):
            if key not in data:
                raise ValueError(f"interaction missing {key!r}")
        return cls.create(str(data.get("speaker", "")), str(data["text"]), data["timestamp"],
                          data.get("session"))


@dataclass(frozen=True)
class EventDraft:
    content: str
    timestamp: int
    speaker: str
    episode_id: str | None
    timestamp_text: str = ""


def segment_event(interaction: Interaction, policy: str = "per-turn") -> list[EventDraft]:
    if not interaction.text.strip():
        raise ValueError("interaction text is blank")
    if policy == "per-turn":
        pieces = [interaction.text.strip()]
    elif policy == "split-paragraphs":
        pieces = [p.strip() for p in _PARAGRAPH.split(interaction.text) if p.strip()]
    else:
        raise ValueError(f"unknown segmentation policy {policy!r}")
    return [EventDraft(p, interaction.timestamp, interaction.speaker, interaction.session,
                       interaction.timestamp_text) for p in pieces]


def ingest(store: MemoryStore, interaction: Interaction, encoder: Encoder,
           policy: str = "per-turn") -> list[str]:
    """Add every segment of ``interaction`` to the store; returns new ids in order."""
    drafts = segment_event(interaction, policy)
    try:
        vectors = encoder.embed([d.content for d in drafts])
    except MagmaError:
        raise
    except Exception as exc:  # encoder plugins may raise anything
        raise EncoderError(f"encoder failed: {exc}") from exc
    if len(vectors) != len(drafts) or any(len(v) != store.dim for v in vectors):
        raise EncoderError("encoder returned vectors of the wrong shape")
    ids: list[str] = []
    with store.gate.write():
        tail = store.graph.last_event_id
        tail_ts = store.graph.nodes[tail].timestamp if tail else None
        if tail_ts is not None and interaction.timestamp < tail_ts \
                and not store.graph.clamp_out_of_order:
            # reject before touching anything so the interaction is all-or-nothing
            raise OutOfOrderEventError(
                f"out-of-order event: {iso(interaction.timestamp)} precedes tail {iso(tail_ts)}")
        for draft, vec in zip(drafts, vectors):
            node = EventNode(
                id=store.next_event_id(),
                content=draft.content,
                timestamp=draft.timestamp,
                embedding=tuple(vec),
                attributes=AttributeSet(speaker=draft.speaker),
                episode_id=draft.episode_id,
                timestamp_text=draft.timestamp_text,
            )
            ids.append(store.insert_event(node))
            store.queue.enqueue(node.id)
    return ids


def ingest_many(store: MemoryStore, interactions: Sequence[Interaction], encoder: Encoder,
                policy: str = "per-turn") -> list[str]:
    out: list[str] = []
    for it in interactions:
        out.extend(ingest(store, it, encoder, policy))
    return out


def as_interaction(obj: Any) -> Interaction:
    if isinstance(obj, Interaction):
        return obj
    if isinstance(obj, dict):
        return Interaction.from_dict(obj)
    raise TypeError(f"cannot build an Interaction from {type(obj).__name__}")
