"""One execution path for every operator verb, shared by the CLI and the HTTP service."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Any, Iterable, Mapping

from . import __version__
from .config import EngineConfig
from .consolidate import Consolidator
from .errors import MagmaError, OutOfOrderEventError, ProviderError
from .ingest import Interaction, as_interaction, ingest
from .model import iso, to_epoch
from .providers import (ROLES, ChatProvider, Encoder, HashingEncoder, HttpChatProvider,
                        HttpEncoder, MockProvider, load_rules, synthesize_answer)
from .retrieval.pipeline import RetrievalResult, retrieve
from .store import MemoryStore

logger = logging.getLogger(__name__)

CHAT_ROLES = tuple(r for r in ROLES if r != "embedder")


@dataclass
class QueryOutcome:
    question: str
    now: str
    context: str
    intent: str
    answer: str | None = None
    error: str | None = None
    writeback: list[str] = field(default_factory=list)
    diagnostics: dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        out = {"question": self.question, "now": self.now, "intent": self.intent,
               "context": self.context, "diagnostics": self.diagnostics}
        if self.answer is not None:
            out["answer"] = self.answer
        if self.error is not None:
            out["error"] = self.error
        if self.writeback:
            out["writeback"] = self.writeback
        return out

    def render(self) -> str:
        lines = [self.context]
        if self.answer is not None:
            lines += ["", f"Answer: {self.answer}"]
        if self.error is not None:
            lines += ["", f"Answer unavailable: {self.error}"]
        return "\n".join(lines)


def build_providers(config: EngineConfig) -> tuple[dict[str, ChatProvider], Encoder]:
    """Mock mode wires every role to the bundled rule tables; otherwise only
    roles with an endpoint get a client."""
    if config.mock:
        rules = load_rules(config.mock_rules or None)
        chat = {role: MockProvider(role, rules.get(role, {})) for role in CHAT_ROLES}
        return chat, HashingEncoder(config.dim)
    chat: dict[str, ChatProvider] = {}
    for role in CHAT_ROLES:
        pc = config.provider_config(role)
        if pc.endpoint:
            chat[role] = HttpChatProvider(pc)
    emb = config.provider_config("embedder")
    if not emb.endpoint:
        raise ProviderError("no embedder endpoint configured")
    return chat, HttpEncoder(emb, config.dim)


class Engine:
    def __init__(self, config: EngineConfig, store: MemoryStore | None = None, *,
                 providers: Mapping[str, ChatProvider] | None = None,
                 encoder: Encoder | None = None, ablation: str = "none"):
        self.config = config
        self.ablation = ablation
        self.policy = config.traversal_policy(ablation)
        self.anchor_cfg = config.anchor_config()
        if providers is None or encoder is None:
            built, built_encoder = build_providers(config)
            providers = built if providers is None else providers
            encoder = built_encoder if encoder is None else encoder
        self.providers = dict(providers)
        self.encoder = encoder
        if store is None:
            store = MemoryStore.open(config.store_path, config.dim, config.theta_sim,
                                     config.clamp_out_of_order)
        self.store = store
        self.consolidator = Consolidator(store, self.providers.get("extractor"),
                                         self.providers.get("reasoner"),
                                         config.consolidation_config())

    @classmethod
    def in_memory(cls, config: EngineConfig, **kwargs: Any) -> "Engine":
        store = MemoryStore(config.dim, config.theta_sim,
                            clamp_out_of_order=config.clamp_out_of_order)
        return cls(config, store, **kwargs)

    def require(self, roles: Iterable[str]) -> None:
        missing = [r for r in roles if r not in self.providers]
        if missing:
            raise ProviderError(f"no provider configured for: {', '.join(missing)}")

    def envelope(self) -> dict[str, Any]:
        return {"version": __version__, "config_hash": self.config.config_hash()}

    # -- verbs ---------------------------------------------------------------

    def ingest(self, items: Iterable[Interaction | dict]) -> list[str]:
        ids: list[str] = []
        for item in items:
            ids.extend(ingest(self.store, as_interaction(item), self.encoder,
                              self.config.segment_policy))
        return ids

    def consolidate(self, max_items: int | None = None) -> dict[str, Any]:
        self.require(("extractor", "reasoner"))
        failed: list[str] = []
        processed = self.consolidator.run_worker(
            max_items, after_item=lambda r: failed.append(r.node_id) if r.failed else None)
        return {"processed": processed, "failed": failed, "remaining": len(self.store.queue)}

    def retrieve(self, question: str, now: Any = None) -> RetrievalResult:
        return retrieve(self.store, question, self._now(now), self.encoder, self.anchor_cfg,
                        self.policy, self.config.token_budget)

    def query(self, question: str, now: Any = None, answer: bool = True) -> QueryOutcome:
        if not question or not question.strip():
            raise ValueError("question is blank")
        stamp = self._now(now)
        result = self.retrieve(question, stamp)
        diag = dict(result.diagnostics)
        diag["variant"] = self.ablation
        out = QueryOutcome(question, iso(stamp), result.context.rendered,
                           result.plan.intent.value, diagnostics=diag)
        if answer and "answerer" in self.providers:
            try:
                out.answer = synthesize_answer(self.providers["answerer"], question,
                                               result.context.rendered, result.plan.intent)
            except ProviderError as exc:
                out.error = str(exc)
        if self.config.loop_writeback and out.answer is not None:
            out.writeback = self._write_back(question, out.answer, stamp)
        return out

    def _write_back(self, question: str, answer: str, stamp: int) -> list[str]:
        """Append the exchange to memory so the next query can see it."""
        turns = [Interaction.create("user", question, stamp, "loop"),
                 Interaction.create("assistant", answer, stamp, "loop")]
        try:
            return self.ingest(turns)
        except OutOfOrderEventError as exc:
            logger.info("write-back skipped: %s", exc)
            return []

    def audit(self) -> list[str]:
        with self.store.gate.read():
            found = [str(v) for v in self.store.graph.audit()]
            if not self.store.coherent():
                found.append("index-coherence: indexes disagree with the graph")
        return found

    def health(self) -> dict[str, Any]:
        with self.store.gate.read():
            return {"status": "ok", "events": len(self.store.graph.nodes),
                    "entities": len(self.store.graph.entities),
                    "edges": self.store.graph.edge_count(), "queue": len(self.store.queue)}

    def save(self) -> None:
        if self.store.directory is not None:
            self.store.save()

    @staticmethod
    def _now(now: Any) -> int:
        if now is None:
            return int(datetime.now(timezone.utc).timestamp())
        return to_epoch(now)


__all__ = ["Engine", "QueryOutcome", "build_providers", "CHAT_ROLES", "MagmaError"]
