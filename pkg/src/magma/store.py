"""The memory store: graph, indexes and consolidation queue behind one write gate."""

from __future__ import annotations

import threading
from contextlib import contextmanager
from pathlib import Path
from typing import Iterator

from .errors import StoreError
from .graph import MemoryGraph
from .index import KeywordIndex, TimeIndex, VectorIndex
from .jobqueue import ConsolidationQueue
from .model import EventNode

GRAPH_FILE = "graph.jsonl"
QUEUE_FILE = "queue.jsonl"


class WriteGate:
    """Single-writer / multi-reader lock. Writers are preferred once waiting."""

    def __init__(self) -> None:
        self._cond = threading.Condition()
        self._readers = 0
        self._writer = False
        self._waiting_writers = 0

    @contextmanager
    def read(self) -> Iterator[None]:
        with self._cond:
            while self._writer or self._waiting_writers:
                self._cond.wait()
            self._readers += 1
        try:
            yield
        finally:
            with self._cond:
                self._readers -= 1
                if not self._readers:
                    self._cond.notify_all()

    @contextmanager
    def write(self) -> Iterator[None]:
        with self._cond:
            self._waiting_writers += 1
            while self._writer or self._readers:
                self._cond.wait()
            self._waiting_writers -= 1
            self._writer = True
        try:
            yield
        finally:
            with self._cond:
                self._writer = False
                self._cond.notify_all()


class MemoryStore:
    """Bundle of everything retrieval and consolidation read and write.

    ``directory`` is optional; without it the store lives purely in memory.
    """

    def __init__(self, dim: int = 384, theta_sim: float = 0.20, *,
                 directory: str | Path | None = None, clamp_out_of_order: bool = False,
                 graph: MemoryGraph | None = None, queue: ConsolidationQueue | None = None):
        self.directory = Path(directory) if directory is not None else None
        self.graph = graph if graph is not None else MemoryGraph(dim, theta_sim, clamp_out_of_order)
        self.vectors = VectorIndex(self.graph.dim)
        self.keywords = KeywordIndex()
        self.times = TimeIndex()
        if queue is None:
            journal = self.directory / QUEUE_FILE if self.directory else None
            queue = ConsolidationQueue(journal)
        self.queue = queue
        self.gate = WriteGate()
        for node in self.graph.nodes.values():
            self._index(node)

    @property
    def dim(self) -> int:
        return self.graph.dim

    def __len__(self) -> int:
        return len(self.graph)

    def next_event_id(self) -> str:
        return f"ev-{len(self.graph.nodes) + 1:06d}"

    # write helpers: callers must hold ``gate.write()``

    def insert_event(self, node: EventNode) -> str:
        node_id = self.graph.add_event(node)
        self._index(self.graph.nodes[node_id])
        return node_id

    def update_event(self, node: EventNode) -> None:
        self.graph.replace_event(node)
        self.keywords.add(node.id, self._texts(node))

    def _index(self, node: EventNode) -> None:
        self.vectors.add(node.id, node.embedding)
        self.keywords.add(node.id, self._texts(node))
        self.times.add(node.id, node.timestamp)

    @staticmethod
    def _texts(node: EventNode) -> list[str]:
        return [node.content, *node.attributes.texts()]

    def coherent(self) -> bool:
        ids = set(self.graph.nodes)
        return (ids == set(self.vectors.ids()) == set(self.keywords.doc_lengths)
                and len(self.vectors) == len(ids) == len(self.times))

    # persistence

    def save(self, directory: str | Path | None = None) -> Path:
        target = Path(directory) if directory is not None else self.directory
        if target is None:
            raise StoreError("store has no directory to save into")
        target.mkdir(parents=True, exist_ok=True)
        with self.gate.read():
            self.graph.save(target / GRAPH_FILE)
            if target != self.directory:
                q = ConsolidationQueue(target / QUEUE_FILE)
                (target / QUEUE_FILE).write_text("", encoding="utf-8")
                for node_id in self.queue.pending():
                    q.enqueue(node_id)
        return target

    @classmethod
    def open(cls, directory: str | Path, dim: int = 384, theta_sim: float = 0.20,
             clamp_out_of_order: bool = False, create: bool = True) -> "MemoryStore":
        directory = Path(directory)
        graph_file = directory / GRAPH_FILE
        if graph_file.exists():
            graph = MemoryGraph.load(graph_file, clamp_out_of_order)
            queue = ConsolidationQueue.open(directory / QUEUE_FILE)
            stale = [n for n in queue.pending() if n not in graph.nodes]
            if stale:
                # journal ran ahead of the last graph snapshot
                fresh = ConsolidationQueue(queue.journal)
                for node_id in queue.pending():
                    if node_id in graph.nodes:
                        fresh._pending.append(node_id)
                fresh.compact()
                queue = fresh
            return cls(directory=directory, graph=graph, queue=queue)
        if not create:
            raise StoreError(f"no store at {directory}")
        directory.mkdir(parents=True, exist_ok=True)
        queue = ConsolidationQueue.open(directory / QUEUE_FILE)
        return cls(dim, theta_sim, directory=directory,
                   clamp_out_of_order=clamp_out_of_order, queue=queue)
