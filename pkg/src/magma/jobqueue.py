"""Persistent FIFO of node ids awaiting consolidation.

Delivery is at-least-once: :meth:`claim` leases an id and :meth:`ack`
retires it. Leases are not journaled, so anything claimed but not acked
before a crash is handed out again after :meth:`open`.
"""

from __future__ import annotations

import json
import threading
from collections import deque
from pathlib import Path

from .errors import PersistenceError


class ConsolidationQueue:
    def __init__(self, journal: str | Path | None = None):
        self.journal = Path(journal) if journal is not None else None
        self._pending: deque[str] = deque()
        self._leased: dict[str, int] = {}
        self._lock = threading.Lock()
        self.enqueued = 0
        self.acked = 0

    @classmethod
    def open(cls, journal: str | Path) -> "ConsolidationQueue":
        q = cls(journal)
        path = Path(journal)
        if not path.exists():
            return q
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    rec = json.loads(line)
                    op, node_id = rec["op"], rec["id"]
                except (json.JSONDecodeError, KeyError, TypeError):
                    # a torn final write is the expected crash signature
                    if not line.endswith("\n"):
                        break
                    raise PersistenceError("bad journal record", lineno, line[:80]) from None
                if op == "enqueue":
                    q._pending.append(node_id)
                    q.enqueued += 1
                elif op == "ack":
                    try:
                        q._pending.remove(node_id)
                    except ValueError:
                        raise PersistenceError(f"ack for unknown id {node_id}", lineno) from None
                    q.acked += 1
        return q

    def __len__(self) -> int:
        with self._lock:
            return len(self._pending) + sum(self._leased.values())

    def pending(self) -> list[str]:
        with self._lock:
            return list(self._pending)

    def _append(self, op: str, node_id: str) -> None:
        if self.journal is None:
            return
        with open(self.journal, "a", encoding="utf-8") as fh:
            fh.write(json.dumps({"op": op, "id": node_id}) + "\n")

    def enqueue(self, node_id: str) -> None:
        with self._lock:
            self._append("enqueue", node_id)
            self._pending.append(node_id)
            self.enqueued += 1

    def claim(self) -> str | None:
        with self._lock:
            if not self._pending:
                return None
            node_id = self._pending.popleft()
            self._leased[node_id] = self._leased.get(node_id, 0) + 1
            return node_id

    def ack(self, node_id: str) -> None:
        with self._lock:
            self._release(node_id)
            self._append("ack", node_id)
            self.acked += 1

    def release(self, node_id: str) -> None:
        """Return a leased id to the front of the queue without acking."""
        with self._lock:
            self._release(node_id)
            self._pending.appendleft(node_id)

    def _release(self, node_id: str) -> None:
        count = self._leased.get(node_id, 0)
        if count == 0:
            raise KeyError(f"{node_id!r} is not leased")
        if count == 1:
            del self._leased[node_id]
        else:
            self._leased[node_id] = count - 1

    def compact(self) -> None:
        """Rewrite the journal to hold only outstanding items."""
        if self.journal is None:
            return
        with self._lock:
            outstanding = list(self._leased) + list(self._pending)
            tmp = self.journal.with_name(self.journal.name + ".tmp")
            with open(tmp, "w", encoding="utf-8") as fh:
                for node_id in outstanding:
                    fh.write(json.dumps({"op": "enqueue", "id": node_id}) + "\n")
            tmp.replace(self.journal)
            self.enqueued = len(outstanding)
            self.acked = 0
