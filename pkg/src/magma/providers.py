"""Clients for external text services, plus deterministic rule-table mocks.

Every chat-style role (extractor, reasoner, answerer, judge) goes through the
same ``complete(system, user) -> str`` call. Mocks implement that call by
reading the rendered prompt, so the parse/validate path is the one real
providers exercise.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import re
import threading
import time
import urllib.error
import urllib.request
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Protocol, Sequence

import numpy as np

from . import prompts
from .errors import EncoderError, ProviderError, SchemaViolationError
from .index import tokenize
from .model import AttributeSet, Intent
from .retrieval.timeparse import find_temporal

logger = logging.getLogger(__name__)

ROLES = ("extractor", "reasoner", "answerer", "judge", "embedder")


@dataclass(frozen=True)
class ProviderConfig:
    role: str
    endpoint: str = ""
    model: str = ""
    temperature: float = 0.0
    timeout: float = 30.0
    max_retries: int = 2
    api_key_env: str = "MAGMA_API_KEY"
    max_in_flight: int = 4

    def __post_init__(self) -> None:
        if self.role not in ROLES:
            raise ValueError(f"unknown provider role {self.role!r}")

    @classmethod
    def from_dict(cls, role: str, data: dict[str, Any]) -> "ProviderConfig":
        known = {f for f in cls.__dataclass_fields__ if f != "role"}
        return cls(role=role, **{k: v for k, v in data.items() if k in known})


class ChatProvider(Protocol):
    def complete(self, system: str, user: str) -> str: ...


class Encoder(Protocol):
    dim: int

    def embed(self, texts: Sequence[str]) -> list[list[float]]: ...


# ---------------------------------------------------------------------------
# HTTP transport
# ---------------------------------------------------------------------------

def _post_json(url: str, payload: dict, timeout: float, api_key_env: str) -> Any:
    body = json.dumps(payload).encode("utf-8")
    headers = {"Content-Type": "application/json"}
    key = os.environ.get(api_key_env)
    if key:
        headers["Authorization"] = f"Bearer {key}"
    req = urllib.request.Request(url, data=body, headers=headers, method="POST")
    with urllib.request.urlopen(req, timeout=timeout) as resp:
        return json.loads(resp.read().decode("utf-8"))


def _first_text(response: Any) -> str:
    """First text content in a chat response, across the common layouts."""
    if isinstance(response, str):
        return response
    if isinstance(response, dict):
        for choice in response.get("choices") or ():
            msg = choice.get("message") or {}
            if isinstance(msg.get("content"), str):
                return msg["content"]
            if isinstance(choice.get("text"), str):
                return choice["text"]
        content = response.get("content")
        if isinstance(content, str):
            return content
        if isinstance(content, list):
            for part in content:
                if isinstance(part, dict) and isinstance(part.get("text"), str):
                    return part["text"]
        if isinstance(response.get("text"), str):
            return response["text"]
    raise ProviderError("response carries no text content")


class HttpChatProvider:
    def __init__(self, config: ProviderConfig):
        if not config.endpoint:
            raise ProviderError(f"no endpoint configured for {config.role}")
        self.config = config
        self._slots = threading.BoundedSemaphore(max(1, config.max_in_flight))

    def complete(self, system: str, user: str) -> str:
        cfg = self.config
        payload = {
            "model": cfg.model,
            "temperature": cfg.temperature,
            "messages": [{"role": "system", "content": system},
                         {"role": "user", "content": user}],
        }
        last: Exception | None = None
        for attempt in range(cfg.max_retries + 1):
            try:
                with self._slots:
                    return _first_text(_post_json(cfg.endpoint, payload, cfg.timeout,
                                                  cfg.api_key_env))
            except (urllib.error.URLError, TimeoutError, OSError, ValueError) as exc:
                last = exc
                logger.warning("%s call failed (attempt %d): %s", cfg.role, attempt + 1, exc)
                time.sleep(min(2.0, 0.1 * 2 ** attempt))
        raise ProviderError(f"{cfg.role} provider unavailable: {last}")


class HttpEncoder:
    def __init__(self, config: ProviderConfig, dim: int):
        if not config.endpoint:
            raise EncoderError("no embedding endpoint configured")
        self.config = config
        self.dim = dim

    def embed(self, texts: Sequence[str]) -> list[list[float]]:
        cfg = self.config
        last: Exception | None = None
        for attempt in range(cfg.max_retries + 1):
            try:
                data = _post_json(cfg.endpoint, {"texts": list(texts)}, cfg.timeout,
                                  cfg.api_key_env)
                vectors = data["embeddings"]
                if len(vectors) != len(texts) or any(len(v) != self.dim for v in vectors):
                    raise EncoderError("embedding response has the wrong shape")
                return [[float(x) for x in v] for v in vectors]
            except EncoderError:
                raise
            except (urllib.error.URLError, TimeoutError, OSError, ValueError,
                    KeyError, TypeError) as exc:
                last = exc
                time.sleep(min(2.0, 0.1 * 2 ** attempt))
        raise EncoderError(f"embedding provider unavailable: {last}")


# ---------------------------------------------------------------------------
# offline encoder
# ---------------------------------------------------------------------------

class HashingEncoder:
    """Hashed bag of words: each token adds one to bucket hash(token) mod dim,
    then the count vector is L2-normalised."""

    def __init__(self, dim: int = 384):
        self.dim = dim

    def _bucket(self, token: str) -> int:
        digest = hashlib.blake2b(token.encode("utf-8"), digest_size=8).digest()
        return int.from_bytes(digest, "big") % self.dim

    def embed_one(self, text: str) -> list[float]:
        vec = np.zeros(self.dim)
        for tok in tokenize(text):
            vec[self._bucket(tok)] += 1.0
        norm = np.linalg.norm(vec)
        if norm > 0:
            vec /= norm
        return vec.tolist()

    def embed(self, texts: Sequence[str]) -> list[list[float]]:
        return [self.embed_one(t) for t in texts]


class CountingEncoder:
    def __init__(self, inner: Encoder):
        self.inner = inner
        self.dim = inner.dim
        self.calls = 0
        self.texts = 0
        self._lock = threading.Lock()

    def embed(self, texts: Sequence[str]) -> list[list[float]]:
        with self._lock:
            self.calls += 1
            self.texts += len(texts)
        return self.inner.embed(texts)


class CountingProvider:
    """Spy that records every call made through a chat provider."""

    def __init__(self, inner: ChatProvider):
        self.inner = inner
        self.calls = 0
        self._lock = threading.Lock()

    def complete(self, system: str, user: str) -> str:
        with self._lock:
            self.calls += 1
        return self.inner.complete(system, user)


# ---------------------------------------------------------------------------
# tolerant JSON + schema validation
# ---------------------------------------------------------------------------

_FENCE = re.compile(r"```(?:json)?\s*(.*?)```", re.DOTALL)


def parse_json_object(text: str) -> dict[str, Any]:
    """Parse the first JSON object in ``text``.

    Markdown fences and any prose before the first ``{`` are discarded.
    """
    fenced = _FENCE.search(text)
    if fenced:
        text = fenced.group(1)
    start = text.find("{")
    if start < 0:
        raise SchemaViolationError("no JSON object in response")
    try:
        obj, _ = json.JSONDecoder().raw_decode(text[start:])
    except json.JSONDecodeError as exc:
        raise SchemaViolationError(f"malformed JSON: {exc.msg}") from None
    if not isinstance(obj, dict):
        raise SchemaViolationError("response is not a JSON object")
    return obj


def validate_extraction(obj: dict[str, Any]) -> AttributeSet:
    missing = [f for f in AttributeSet.LIST_FIELDS + AttributeSet.TEXT_FIELDS if f not in obj]
    if missing:
        raise SchemaViolationError(f"extraction missing fields: {', '.join(missing)}")
    for name in AttributeSet.LIST_FIELDS:
        value = obj[name]
        if not isinstance(value, list) or not all(isinstance(x, str) for x in value):
            raise SchemaViolationError(f"{name} must be a list of strings")
    for name in AttributeSet.TEXT_FIELDS:
        if not isinstance(obj[name], str):
            raise SchemaViolationError(f"{name} must be a string")
    return AttributeSet.from_dict(obj)


def extract_attributes(provider: ChatProvider, speaker: str, text: str,
                       prev_summary: str = "") -> AttributeSet:
    """Fill the extractor template and validate the reply.

    One repair attempt is made with a JSON-only reminder appended.
    """
    system, user = prompts.extractor_prompt(speaker, text, prev_summary)
    try:
        return validate_extraction(parse_json_object(provider.complete(system, user)))
    except SchemaViolationError as first:
        logger.info("extractor reply rejected (%s); retrying", first)
    return validate_extraction(parse_json_object(
        provider.complete(system, user + prompts.JSON_REMINDER)))


@dataclass(frozen=True)
class CausalPair:
    src: str
    dst: str
    confidence: float
    rationale: str = ""


def parse_causal_pairs(text: str) -> list[CausalPair]:
    obj = parse_json_object(text)
    raw = obj.get("causal_pairs")
    if not isinstance(raw, list):
        raise SchemaViolationError("causal_pairs must be a list")
    pairs = []
    for item in raw:
        try:
            pairs.append(CausalPair(str(item["src"]), str(item["dst"]),
                                    float(item["confidence"]), str(item.get("rationale", ""))))
        except (KeyError, TypeError, ValueError):
            raise SchemaViolationError(f"bad causal pair {item!r}") from None
    return pairs


def synthesize_answer(provider: ChatProvider, question: str, context: str,
                      intent: Intent) -> str:
    if not str(context).strip():
        raise ValueError("context is empty")
    system, user = prompts.qa_prompt(question, str(context), intent)
    answer = provider.complete(system, user)
    if not isinstance(answer, str):
        raise ProviderError("answerer returned no text")
    return answer.strip()


@dataclass(frozen=True)
class JudgeResult:
    score: float
    reasoning: str


def judge(provider: ChatProvider, question: str, gold: str, candidate: str) -> JudgeResult:
    system, user = prompts.judge_prompt(question, gold, candidate)
    last: Exception | None = None
    for _ in range(2):
        try:
            obj = parse_json_object(provider.complete(system, user))
            score = float(obj["score"])
            if score != score:
                raise ValueError("NaN score")
            return JudgeResult(min(1.0, max(0.0, score)), str(obj.get("reasoning", "")))
        except (SchemaViolationError, KeyError, TypeError, ValueError) as exc:
            last = exc
    raise ProviderError(f"judge reply unusable: {last}")


# ---------------------------------------------------------------------------
# rule-table mocks
# ---------------------------------------------------------------------------

def default_rules_path() -> Path:
    return Path(str(resources.files("magma") / "data" / "mock_rules.json"))


def load_rules(path: str | Path | None = None) -> dict[str, Any]:
    with open(path or default_rules_path(), encoding="utf-8") as fh:
        return json.load(fh)


_CAPITALIZED = re.compile(r"\b[A-Z][A-Za-z'’-]*")
_SENTENCE = re.compile(r"(?<=[.!?])\s+")
_EVENT_LINE = re.compile(r"^\[ref:(\S+)\] \((\S+)\) [^:]*: (.*)$", re.MULTILINE)
_BLOCK_LINE = re.compile(r"^<t:[^>]+> (.*) <ref:[^>]+>$", re.MULTILINE)


def _normal_words(text: str) -> list[str]:
    return re.findall(r"[a-z0-9]+", text.lower())


@dataclass
class MockProvider:
    """Deterministic stand-in for a chat provider, driven by a rule table."""

    role: str
    rules: dict[str, Any] = field(default_factory=dict)

    @classmethod
    def from_file(cls, role: str, path: str | Path | None = None) -> "MockProvider":
        return cls(role, load_rules(path).get(role, {}))

    def complete(self, system: str, user: str) -> str:
        handler = getattr(self, f"_{self.role}", None)
        if handler is None:
            raise ProviderError(f"no mock behaviour for role {self.role!r}")
        return handler(user)

    # extractor ---------------------------------------------------------

    def _extractor(self, user: str) -> str:
        m = re.search(r"- Speaker: (.*?)\n- Text: (.*?)\n- Context: ", user, re.DOTALL)
        if not m:
            raise ProviderError("mock extractor could not read the prompt")
        speaker, text = m.group(1).strip(), m.group(2).strip()
        stop = set(self.rules.get("entity_stoplist", ()))
        entities: list[str] = []
        for tok in _CAPITALIZED.findall(text):
            tok = re.sub(r"['’]s$", "", tok).strip("'’-")
            if tok and tok not in stop and tok not in entities:
                entities.append(tok)
        lowered = text.lower()
        topic = self.rules.get("default_topic", "general")
        for rule in self.rules.get("topics", ()):
            if re.search(rule["pattern"], lowered):
                topic = rule["topic"]
                break
        relationships = []
        for rule in self.rules.get("relationships", ()):
            for rm in re.finditer(rule["pattern"], text):
                relationships.append(rule["template"].format(*rm.groups()))
        sentences = [s.strip() for s in _SENTENCE.split(text) if s.strip()]
        dates = [t.text for t in find_temporal(text, 0)]
        summary = f"{speaker} said: {sentences[0]}" if sentences else f"{speaker} spoke"
        return json.dumps({
            "entities": entities, "topic": topic, "relationships": relationships,
            "semantic_facts": sentences, "dates_mentioned": dates,
            "speaker": speaker, "summary": summary,
        })

    # reasoner ----------------------------------------------------------

    def _reasoner(self, user: str) -> str:
        focal = re.search(r"Focal event: \[ref:(\S+)\]", user)
        events = [(m.group(1), m.group(3)) for m in _EVENT_LINE.finditer(user)]
        pairs = []
        for rule in self.rules.get("rules", ()):
            cause, effect = re.compile(rule["cause"], re.I), re.compile(rule["effect"], re.I)
            for a, text_a in events:
                for b, text_b in events:
                    if a == b or (focal and focal.group(1) not in (a, b)):
                        continue
                    if cause.search(text_a) and effect.search(text_b):
                        pairs.append({"src": a, "dst": b, "confidence": rule["confidence"],
                                      "rationale": rule.get("rationale", "rule match")})
        return json.dumps({"causal_pairs": pairs})

    # answerer ----------------------------------------------------------

    def _answerer(self, user: str) -> str:
        ctx = re.search(r"Context:\n(.*?)\n\nCurrent Query:", user, re.DOTALL)
        q = re.search(r"- Question: (.*)", user)
        context = ctx.group(1) if ctx else ""
        question = q.group(1).strip() if q else ""
        for rule in self.rules.get("rules", ()):
            if re.search(rule["question"], question, re.I):
                if re.search(rule.get("requires", ""), context, re.I):
                    return rule["answer"]
                return prompts.NOT_FOUND
        if self.rules.get("default") == "echo_first_block":
            first = _BLOCK_LINE.search(context)
            return first.group(1) if first else prompts.NOT_FOUND
        return prompts.NOT_FOUND

    # judge -------------------------------------------------------------

    def _judge(self, user: str) -> str:
        m = re.search(r"Question: (.*?) \| Gold: (.*?) \| Candidate: (.*)\n", user, re.DOTALL)
        if not m:
            raise ProviderError("mock judge could not read the prompt")
        gold, cand = _normal_words(m.group(2)), _normal_words(m.group(3))
        refusals = [_normal_words(r) for r in self.rules.get(
            "refusal_phrases", ["information not found"])]
        if gold == ["unanswerable"]:
            ok = cand in refusals
            return json.dumps({"score": 1.0 if ok else 0.0,
                               "reasoning": "refusal expected" + ("" if ok else "; got a claim")})
        if gold == cand:
            return json.dumps({"score": 1.0, "reasoning": "exact match"})
        partial = self.rules.get("containment_score")
        if partial is not None and gold and set(gold) <= set(cand):
            return json.dumps({"score": float(partial), "reasoning": "gold contained"})
        return json.dumps({"score": 0.0, "reasoning": "no match"})
