"""Graph-structured long-term memory for conversational agents."""

__version__ = "0.1.0"

from .errors import MagmaError
from .model import AttributeSet, EdgeType, EntityNode, EventNode, Intent, Origin, TypedEdge
from .graph import MemoryGraph
from .store import MemoryStore

__all__ = [
    "__version__", "MagmaError", "AttributeSet", "EdgeType", "EntityNode", "EventNode",
    "Intent", "Origin", "TypedEdge", "MemoryGraph", "MemoryStore",
]
