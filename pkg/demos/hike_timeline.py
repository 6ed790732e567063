"""Walk one conversation through the whole engine.

Ingest a short chat, consolidate it, look at what a relative-date
question retrieves, then ask for a date. Everything runs offline on the mock providers.

    python demos/hike_timeline.py
"""

from importlib import resources

from magma.cli import read_interactions
from magma.config import EngineConfig
from magma.engine import Engine
from magma.model import iso


def main() -> None:
    turns = read_interactions(resources.files("magma") / "data" / "melanie_hike.json")
    engine = Engine.in_memory(EngineConfig())

    ids = engine.ingest(turns)
    print(f"fast path: {len(ids)} events, health {engine.health()}")

    drained = engine.consolidate()
    print(f"slow path: {drained['processed']} items consolidated, "
          f"{engine.health()['edges']} edges now")

    # Retrieval only. "yesterday" becomes a one-day window, and a tight budget forces
    # low-salience blocks to collapse into "...N intermediate events...".
    # Watch which block goes first: an anchor keeps its fused rank score as salience
    # (around 0.05) while every traversed node gets at least exp(lambda1 * w) (around 2.7),
    # so the in-window hit is among the first to be elided.
    tight = Engine(EngineConfig(token_budget=90), engine.store,
                   providers=engine.providers, encoder=engine.encoder)
    outcome = tight.query("What did Melanie do yesterday?", now="2023-10-20T12:00:00Z",
                          answer=False)
    window = outcome.diagnostics["window"]
    print()
    print(f"'yesterday' at {outcome.now} -> window {iso(window[0])} .. {iso(window[1])}")
    print(outcome.render())
    kept = {b.split("<ref:")[1].rstrip(">") for b in outcome.context.splitlines() if "<ref:" in b}
    print(f"in-window event ev-000007 kept under the tight budget: {'ev-000007' in kept}")

    question = "When did Melanie go on the hike after the roadtrip?"
    outcome = engine.query(question, now="2023-10-20T12:00:00Z")
    diag = outcome.diagnostics
    print()
    print(f"Q: {question}")
    print(f"   intent={outcome.intent} anchors={len(diag['anchors'])} "
          f"visited={diag['visited']} tokens={diag['tokens']}")
    print(outcome.render())

    print()
    print(f"audit: {len(engine.audit())} violations")


if __name__ == "__main__":
    main()
