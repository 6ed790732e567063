"""Query side: planning, anchor fusion, traversal and linearization."""

from .anchors import AnchorConfig, AnchorResult, find_anchors, fuse_rankings
from .intent import classify_intent
from .linearize import LinearizedContext, estimate_tokens, linearize
from .plan import QueryPlan, build_plan
from .timeparse import find_temporal, parse_time
from .traverse import RetrievedSubgraph, TraversalPolicy, beam_search, traverse

__all__ = [
    "AnchorConfig", "AnchorResult", "find_anchors", "fuse_rankings", "classify_intent",
    "LinearizedContext", "estimate_tokens", "linearize", 
    "QueryPlan", "build_plan", "find_temporal", "parse_time", "RetrievedSubgraph",
    "TraversalPolicy", "beam_search", "traverse",
]
