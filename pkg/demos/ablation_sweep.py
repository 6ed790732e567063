"""Run the bundled ten-question fixture under every ablation and compare.

Each variant switches off one edge type (or the intent-specific weights).
The table shows how many retrieved edges of each type survived, next to
the mock judge score.

    python demos/ablation_sweep.py
"""

from collections import Counter
from importlib import resources

from magma.config import ABLATIONS, EngineConfig
from magma.evaluation import run_eval


def main() -> None:
    dataset = resources.files("magma") / "data" / "mini.json"
    header = f"{'variant':<12} {'judge':>6} {'f1':>6}  retrieved edges"
    print(header)
    print("-" * len(header))
    for variant in ABLATIONS:
        report = run_eval(dataset, EngineConfig(), variant)
        kinds = Counter()
        for rec in report.data["samples"]:
            kinds.update(rec["subgraph_edges"])
        overall = report.data["overall"]
        edges = " ".join(f"{k}={v}" for k, v in sorted(kinds.items()))
        print(f"{variant:<12} {overall['judge']:>6.3f} {overall['f1']:>6.3f}  {edges}")


if __name__ == "__main__":
    main()
