"""Start the HTTP service on a free port and talk to it with urllib.

    python demos/service_roundtrip.py
"""

import json
import time
import urllib.request
from importlib import resources

from magma.cli import read_interactions
from magma.config import EngineConfig
from magma.engine import Engine
from magma.service import MemoryService


def call(base: str, method: str, path: str, body=None):
    data = json.dumps(body).encode() if body is not None else None
    req = urllib.request.Request(base + path, data=data, method=method,
                                 headers={"Content-Type": "application/json"})
    with urllib.request.urlopen(req) as resp:
        return json.loads(resp.read())


def main() -> None:
    turns = read_interactions(resources.files("magma") / "data" / "melanie_hike.json")
    with MemoryService(Engine.in_memory(EngineConfig()), idle_wait=0.01) as svc:
        print("serving at", svc.url)
        print("ingest  ->", call(svc.url, "POST", "/ingest", {"turns": turns})["ids"][-1])
        while call(svc.url, "GET", "/health")["queue"]:
            time.sleep(0.05)   # background worker drains the queue
        print("health  ->", call(svc.url, "GET", "/health"))
        reply = call(svc.url, "POST", "/query",
                     {"question": "When did Melanie go on the hike after the roadtrip?",
                      "now": "2023-10-20"})
        print("answer  ->", reply["answer"])
        print("audit   ->", call(svc.url, "GET", "/audit")["count"], "violations")


if __name__ == "__main__":
    main()
