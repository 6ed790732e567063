"""Evaluation harness: dataset loading, the ingest/consolidate/answer loop, metrics, reports."""

from __future__ import annotations

import hashlib
import json
import math
import time
from collections import Counter
from contextlib import contextmanager
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Iterator, Mapping, Sequence

from . import __version__
from .config import ABLATIONS, EngineConfig
from .engine import CHAT_ROLES, Engine
from .errors import MagmaError, ProviderError
from .ingest import Interaction
from .model import to_epoch
from .providers import ChatProvider, Encoder, judge

CATEGORIES = ("single-hop", "multi-hop", "temporal", "open-domain", "adversarial")
LOCOMO_CATEGORIES = {1: "multi-hop", 2: "temporal", 3: "open-domain", 4: "single-hop",
                     5: "adversarial"}
LONGMEMEVAL_CATEGORIES = {
    "single-session-user": "single-hop",
    "single-session-assistant": "single-hop",
    "single-session-preference": "open-domain",
    "multi-session": "multi-hop",
    "knowledge-update": "multi-hop",
    "temporal-reasoning": "temporal",
}
UNANSWERABLE = "Unanswerable"
VARIANT_NOTES = {
    "none": "full engine",
    "no-causal": "CAUSAL edges excluded from traversal",
    "no-temporal": "TEMPORAL edges excluded from traversal",
    "no-entity": "ENTITY edges excluded from traversal",
    "no-semantic": "SEMANTIC edges excluded from traversal",
    "no-adaptive": "uniform edge weights for every intent (adaptive policy disabled)",
}
# keys dropped before hashing a report: they vary run to run
VOLATILE_KEYS = frozenset({"generated_at", "timings", "fingerprint"})


# ---------------------------------------------------------------------------
# metrics
# ---------------------------------------------------------------------------

def metric_tokens(text: str) -> list[str]:
    return str(text).lower().split()


def token_f1(gold: str, candidate: str) -> float:
    g, c = metric_tokens(gold), metric_tokens(candidate)
    if not g or not c:
        return 0.0
    overlap = sum((Counter(g) & Counter(c)).values())
    if overlap == 0:
        return 0.0
    p, r = overlap / len(c), overlap / len(g)
    return 2 * p * r / (p + r)


def bleu1(gold: str, candidate: str) -> float:
    g, c = metric_tokens(gold), metric_tokens(candidate)
    if not g or not c:
        return 0.0
    clipped = sum((Counter(c) & Counter(g)).values())
    bp = 1.0 if len(c) >= len(g) else math.exp(1.0 - len(g) / len(c))
    return clipped / len(c) * bp


# ---------------------------------------------------------------------------
# dataset
# ---------------------------------------------------------------------------

class LabelLeakError(MagmaError):
    """The answer path read a category label."""


class QASample:
    """A question with its gold answer; the category is guarded against the answer path."""

    def __init__(self, sample_id: str, question: str, answer: str, category: str,
                 conversation: str, now: Any = None):
        if category not in CATEGORIES:
            raise ValueError(f"unknown category {category!r}")
        self.sample_id = sample_id
        self.question = question
        self.answer = answer
        self.conversation = conversation
        self.now = now
        self._category = category
        self._blind = False
        self.category_reads = 0

    @property
    def category(self) -> str:
        if self._blind:
            raise LabelLeakError(f"category of {self.sample_id} read while answering")
        self.category_reads += 1
        return self._category

    @contextmanager
    def blind(self) -> Iterator["QASample"]:
        self._blind = True
        try:
            yield self
        finally:
            self._blind = False

    def __repr__(self) -> str:
        return f"QASample({self.sample_id!r}, {self.question!r})"


@dataclass
class Conversation:
    conv_id: str
    turns: list[Interaction]


@dataclass
class Dataset:
    name: str
    conversations: list[Conversation]
    samples: list[QASample]

    def __post_init__(self) -> None:
        known = {c.conv_id for c in self.conversations}
        orphans = sorted({s.conversation for s in self.samples} - known)
        if orphans:
            raise ValueError(f"samples reference unknown conversations: {', '.join(orphans)}")

    def samples_for(self, conv_id: str) -> list[QASample]:
        return [s for s in self.samples if s.conversation == conv_id]


def _internal(data: Mapping[str, Any], name: str) -> Dataset:
    convs = []
    for c in data["conversations"]:
        turns = [Interaction.create(t.get("speaker", ""), t["text"], t["timestamp"],
                                    t.get("session")) for t in c["turns"]]
        convs.append(Conversation(str(c["id"]), turns))
    samples = []
    for i, s in enumerate(data["samples"]):
        samples.append(QASample(str(s.get("id", f"q{i:03d}")), s["question"], str(s["answer"]),
                                s["category"], str(s["conversation"]), s.get("now")))
    return Dataset(name, convs, samples)


def _locomo_time(text: str) -> int:
    # "1:56 pm on 8 May, 2023"
    parsed = datetime.strptime(" ".join(text.split()), "%I:%M %p on %d %B, %Y")
    return int(parsed.replace(tzinfo=timezone.utc).timestamp())


def _locomo(data: Sequence[Mapping[str, Any]], name: str) -> Dataset:
    convs, samples = [], []
    for ci, item in enumerate(data):
        conv_id = str(item.get("sample_id", f"conv-{ci}"))
        conv = item["conversation"]
        sessions = sorted((int(k.split("_")[1]), k) for k in conv
                          if k.startswith("session_") and k.count("_") == 1
                          and isinstance(conv[k], list))
        turns = []
        for num, key in sessions:
            stamp = _locomo_time(conv[f"{key}_date_time"])
            for t in conv[key]:
                turns.append(Interaction.create(t.get("speaker", ""), t["text"], stamp,
                                                f"{conv_id}:S{num}"))
        convs.append(Conversation(conv_id, turns))
        last = turns[-1].timestamp if turns else 0
        for qi, qa in enumerate(item.get("qa", ())):
            cat = LOCOMO_CATEGORIES[int(qa["category"])]
            gold = UNANSWERABLE if cat == "adversarial" else str(qa.get("answer", ""))
            samples.append(QASample(f"{conv_id}-q{qi:03d}", qa["question"], gold, cat,
                                    conv_id, last))
    return Dataset(name, convs, samples)


def _lme_time(text: str) -> int:
    # "2023/05/20 (Sat) 02:21"
    parts = text.split()
    parsed = datetime.strptime(f"{parts[0]} {parts[-1]}", "%Y/%m/%d %H:%M")
    return int(parsed.replace(tzinfo=timezone.utc).timestamp())


def convert_longmemeval(data: Sequence[Mapping[str, Any]], name: str = "longmemeval") -> Dataset:
    """Each LongMemEval item becomes its own conversation holding its haystack."""
    convs, samples = [], []
    for item in data:
        qid = str(item["question_id"])
        sessions = sorted(zip(item["haystack_dates"], item["haystack_session_ids"],
                              item["haystack_sessions"]), key=lambda s: _lme_time(s[0]))
        turns = [Interaction.create(t["role"], t["content"], _lme_time(date), str(sid))
                 for date, sid, session in sessions for t in session if t["content"].strip()]
        convs.append(Conversation(qid, turns))
        abstain = qid.endswith("_abs")
        cat = "adversarial" if abstain else LONGMEMEVAL_CATEGORIES[item["question_type"]]
        gold = UNANSWERABLE if abstain else str(item["answer"])
        samples.append(QASample(qid, item["question"], gold, cat, qid,
                                _lme_time(item["question_date"])))
    return Dataset(name, convs, samples)


def load_dataset(path: str | Path) -> Dataset:
    path = Path(path)
    data = json.loads(path.read_text(encoding="utf-8"))
    if isinstance(data, dict) and "conversations" in data:
        return _internal(data, path.stem)
    first = data[0] if isinstance(data, list) and data and isinstance(data[0], dict) else {}
    if "conversation" in first:
        return _locomo(data, path.stem)
    if "haystack_sessions" in first:
        return convert_longmemeval(data, path.stem)
    raise ValueError(f"unrecognised dataset layout in {path}")


# ---------------------------------------------------------------------------
# runs
# ---------------------------------------------------------------------------

@dataclass
class RunReport:
    data: dict[str, Any] = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(self.data, indent=2, sort_keys=True, ensure_ascii=False) + "\n"

    def fingerprint(self) -> str:
        return report_fingerprint(self.data)

    def table(self) -> str:
        return render_table(self.data)

    def write(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json(), encoding="utf-8")


def strip_volatile(obj: Any) -> Any:
    if isinstance(obj, dict):
        return {k: strip_volatile(v) for k, v in obj.items() if k not in VOLATILE_KEYS}
    if isinstance(obj, list):
        return [strip_volatile(v) for v in obj]
    return obj


def report_fingerprint(data: Mapping[str, Any]) -> str:
    blob = json.dumps(strip_volatile(data), sort_keys=True, separators=(",", ":"),
                      ensure_ascii=False)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def _mean(values: Sequence[float]) -> float | None:
    return round(sum(values) / len(values), 6) if values else None


def aggregate(records: Sequence[Mapping[str, Any]]) -> dict[str, Any]:
    def summary(rows: Sequence[Mapping[str, Any]]) -> dict[str, Any]:
        judged = [r["judge"] for r in rows if r["judge"] is not None]
        return {"n": len(rows), "judged": len(judged), "judge": _mean(judged),
                "f1": _mean([r["f1"] for r in rows]), "bleu1": _mean([r["bleu1"] for r in rows]),
                "tokens": _mean([r["tokens"] for r in rows])}

    cats = {c: summary([r for r in records if r["category"] == c])
            for c in CATEGORIES if any(r["category"] == c for r in records)}
    return {"categories": cats, "overall": summary(records)}


def run_eval(dataset: Dataset | str | Path, config: EngineConfig, ablation: str = "none", *,
             providers: Mapping[str, ChatProvider] | None = None,
             encoder: Encoder | None = None, use_judge: bool = True) -> RunReport:
    if ablation not in ABLATIONS:
        raise ValueError(f"unknown ablation {ablation!r}")
    if not isinstance(dataset, Dataset):
        dataset = load_dataset(dataset)

    # build one engine up front so a missing provider aborts before any ingestion
    probe = Engine.in_memory(config, providers=providers, encoder=encoder, ablation=ablation)
    probe.require(CHAT_ROLES if use_judge else ("extractor", "reasoner", "answerer"))

    records: list[dict[str, Any]] = []
    for conv in dataset.conversations:
        engine = Engine.in_memory(config, providers=probe.providers, encoder=probe.encoder,
                                  ablation=ablation)
        t0 = time.perf_counter()
        engine.ingest(conv.turns)
        t1 = time.perf_counter()
        drained = engine.consolidate()
        t2 = time.perf_counter()
        default_now = conv.turns[-1].timestamp if conv.turns else 0
        for sample in dataset.samples_for(conv.conv_id):
            with sample.blind():
                rec = _answer(engine, sample, default_now, use_judge)
            rec["timings"]["ingest_ms"] = round((t1 - t0) * 1000, 3)
            rec["timings"]["consolidate_ms"] = round((t2 - t1) * 1000, 3)
            rec["consolidation_failures"] = len(drained["failed"])
            records.append(rec)

    # labels are read only here, for aggregation
    for sample, rec in zip(_ordered(dataset), records):
        rec["category"] = sample.category

    data = {
        "version": __version__,
        "dataset": dataset.name,
        "variant": ablation,
        "variant_note": VARIANT_NOTES[ablation],
        "config_hash": config.config_hash(),
        "config": config.to_dict(),
        "generated_at": datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ"),
        "samples": records,
        **aggregate(records),
    }
    data["fingerprint"] = report_fingerprint(data)
    return RunReport(data)


def _ordered(dataset: Dataset) -> list[QASample]:
    return [s for c in dataset.conversations for s in dataset.samples_for(c.conv_id)]


def _answer(engine: Engine, sample: QASample, default_now: int,
            use_judge: bool) -> dict[str, Any]:
    now = to_epoch(sample.now) if sample.now is not None else default_now
    start = time.perf_counter()
    outcome = engine.query(sample.question, now)
    answered = time.perf_counter()
    answer = outcome.answer if outcome.answer is not None else ""
    score, reasoning, judge_error = None, "", None
    if use_judge:
        try:
            verdict = judge(engine.providers["judge"], sample.question, sample.answer, answer)
            score, reasoning = verdict.score, verdict.reasoning
        except ProviderError as exc:
            judge_error = str(exc)
    diag = outcome.diagnostics
    timings = dict(diag.get("timings", {}))
    timings["query_ms"] = round((answered - start) * 1000, 3)
    return {
        "id": sample.sample_id,
        "conversation": sample.conversation,
        "question": sample.question,
        "gold": sample.answer,
        "answer": answer,
        "answer_error": outcome.error,
        "intent": outcome.intent,
        "f1": round(token_f1(sample.answer, answer), 6),
        "bleu1": round(bleu1(sample.answer, answer), 6),
        "judge": score,
        "judge_reasoning": reasoning,
        "judge_error": judge_error,
        "tokens": diag.get("tokens", 0),
        "anchors": [a[0] for a in diag.get("anchors", [])],
        "subgraph_edges": diag.get("subgraph_edges", {}),
        "hops": diag.get("hops", []),
        "timings": timings,
    }


def render_table(data: Mapping[str, Any]) -> str:
    def fmt(v: Any) -> str:
        return "-" if v is None else f"{v:.3f}"

    rows = [("Category", "N", "Judge", "F1", "BLEU-1", "Tokens")]
    for cat, s in data["categories"].items():
        rows.append((cat, str(s["n"]), fmt(s["judge"]), fmt(s["f1"]), fmt(s["bleu1"]),
                     f"{s['tokens']:.0f}" if s["tokens"] is not None else "-"))
    o = data["overall"]
    rows.append(("overall", str(o["n"]), fmt(o["judge"]), fmt(o["f1"]), fmt(o["bleu1"]),
                 f"{o['tokens']:.0f}" if o["tokens"] is not None else "-"))
    widths = [max(len(r[i]) for r in rows) for i in range(len(rows[0]))]
    lines = [f"variant: {data['variant']} ({data['variant_note']})",
             f"config: {data['config_hash']}"]
    for i, r in enumerate(rows):
        lines.append("  ".join(c.ljust(w) if j == 0 else c.rjust(w)
                               for j, (c, w) in enumerate(zip(r, widths))))
        if i == 0:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines)
