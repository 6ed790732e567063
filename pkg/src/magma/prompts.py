"""Prompt templates for the extractor, consolidation reasoner, answerer and judge."""

from __future__ import annotations

from typing import Iterable, Sequence

from .model import EventNode, Intent, iso

EXTRACTOR_SYSTEM = """\
System Role: You are an automated Graph Memory Parser. Your task is to extract structured metadata from raw conversational logs to build a knowledge graph."""

EXTRACTOR_USER = """\
Input Data:
- Speaker: {speaker}
- Text: {text}
- Context: {prev_summary}

Instructions:
Analyze the input and return ONLY a valid JSON object matching the specific schema below. Do not include markdown formatting.

Target Schema:
- "entities": List of proper nouns (People, Locations, Organizations).
- "topic": String (1-3 words representing the main theme).
- "relationships": List of strings describing interactions (e.g., "X researches Y").
- "semantic_facts": List of atomic facts preserving key information.
- "dates_mentioned": List of temporal strings (e.g., "next Friday", "2024-01-01").
- "speaker": String (the speaker label as given).
- "summary": One-sentence summary preserving speaker attribution."""

JSON_REMINDER = "\n\nReminder: return only the JSON object, with no prose and no markdown fences."

REASONER_SYSTEM = """\
System Role: You are a memory consolidation engine. You read a focal event and its local neighbourhood in a memory graph and identify cause-and-effect links between events."""

REASONER_USER = """\
Focal event: [ref:{focal_id}]

Neighbourhood events (one per line, format: [ref:ID] (timestamp) speaker: content):
{events}

Episode history (summaries of earlier events in the same episode):
{history}

Instructions:
1. Propose a causal pair only when one event plausibly brings about, enables or explains the other.
2. Use only the ref ids listed above.
3. Give each pair a confidence in [0, 1].
4. Return ONLY a valid JSON object: {{"causal_pairs": [{{"src": "ID", "dst": "ID", "confidence": 0.0, "rationale": "short reason"}}]}}. Return an empty list when nothing is causal."""

QA_SYSTEM = """\
System Role: You are a precision QA assistant operating on retrieved memory contexts. Your goal is to answer the user's question accurately using only the provided information."""

QA_USER = """\
Context:
{context}

Current Query:
- Question: {question}
- Constraints: {constraints}

Instructions:
1. Use ONLY information explicitly stated in the context.
2. If the answer is not present, respond exactly with "Information not found".
3. Be concise (typically 1-10 words) unless detailed reasoning is required.
4. {dynamic_instruction}

Answer:"""

NOT_FOUND = "Information not found"

DYNAMIC_INSTRUCTIONS = {
    "multi-hop": ("Connect related facts across different nodes. For comparison queries "
                  "(e.g., 'both/all'), identify commonalities between entities rather than "
                  "listing individual details."),
    "temporal": ("Resolve relative dates (e.g., 'yesterday') using the event timestamps. "
                 "Output dates strictly in 'D Month YYYY' format. Calculate durations if asked."),
    "open-domain": ("Make reasonable inferences based on the user's personality traits, "
                    "interests, and past behaviors. Support hypothetical ('would/could') "
                    "reasoning with evidence."),
    "single-hop": ("Extract the specific entity, name, or method requested. Do not add "
                   "explanations. Return the exact fact matching the query intent."),
}

# Router intent -> answer style. The router never sees dataset category labels.
INTENT_STYLE = {
    Intent.WHY: "multi-hop",
    Intent.WHEN: "temporal",
    Intent.ENTITY: "single-hop",
    Intent.GENERAL: "open-domain",
}

INTENT_CONSTRAINTS = {
    Intent.WHY: "explain causes using the ordered evidence",
    Intent.WHEN: "answer with a date or time span",
    Intent.ENTITY: "answer with the specific fact",
    Intent.GENERAL: "answer briefly",
}

JUDGE_SYSTEM = """\
You are an expert evaluator assessing the semantic fidelity of a memory retrieval system. Score the Candidate Answer against the Gold Reference on a continuous scale [0.0, 1.0].

Scoring Rubric:
- 1.0 (Exact Alignment): Captures all key entities, temporal markers, and causal relationships. Semantically equivalent.
- 0.8 (Substantially Correct): Main point is accurate but lacks minor nuances or secondary details.
- 0.6 (Partial Match): Contains valid information but misses key constraints (e.g., wrong date but correct event).
- 0.4 (Tangential): Touches on the topic but misses the core information requirement.
- 0.2 (Incoherent): Factually incorrect with only minimal topical overlap.
- 0.0 (Contradiction/Hallucination): Completely unrelated or contradicts the ground truth.

Evaluation Constraints:
1. Temporal Flexibility: Accept relative time references (e.g., "next Tuesday") if they resolve to the same period as the Gold Reference.
2. Semantic Equivalence: Prioritize informational content over lexical matching.
3. Adversarial Handling: If the Gold Reference states "Unanswerable", the Candidate MUST explicitly state lack of information. Any hallucinated fact results in 0.0."""

JUDGE_USER = """\
Input: Question: {question} | Gold: {gold} | Candidate: {generated}
Output: JSON {{"score": float, "reasoning": "concise explanation"}}"""


def extractor_prompt(speaker: str, text: str, prev_summary: str) -> tuple[str, str]:
    return EXTRACTOR_SYSTEM, EXTRACTOR_USER.format(
        speaker=speaker or "unknown", text=text, prev_summary=prev_summary or "(none)")


def event_line(node: EventNode) -> str:
    speaker = node.attributes.speaker or "unknown"
    content = " ".join(node.content.split())
    return f"[ref:{node.id}] ({iso(node.timestamp)}) {speaker}: {content}"


def reasoner_prompt(focal_id: str, events: Sequence[EventNode],
                    history: Iterable[str]) -> tuple[str, str]:
    lines = "\n".join(event_line(n) for n in events) or "(none)"
    hist = "\n".join(f"- {h}" for h in history if h) or "(none)"
    return REASONER_SYSTEM, REASONER_USER.format(focal_id=focal_id, events=lines, history=hist)


def qa_prompt(question: str, context: str, intent: Intent) -> tuple[str, str]:
    style = INTENT_STYLE[intent]
    return QA_SYSTEM, QA_USER.format(
        context=context, question=question, constraints=INTENT_CONSTRAINTS[intent],
        dynamic_instruction=DYNAMIC_INSTRUCTIONS[style])


def judge_prompt(question: str, gold: str, generated: str) -> tuple[str, str]:
    return JUDGE_SYSTEM, JUDGE_USER.format(question=question, gold=gold, generated=generated)
