"""Command-line surface: ingest, consolidate, query, eval, audit, serve, config."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any, Sequence

from .config import ABLATIONS, EngineConfig, coerce
from .engine import Engine
from .errors import ConfigError, MagmaError, ProviderError, StoreError

EXIT_OK, EXIT_USAGE, EXIT_STORE, EXIT_PROVIDER, EXIT_AUDIT = 0, 2, 3, 4, 5


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", metavar="FILE", default=argparse.SUPPRESS,
                   help="JSON config file (keys match EngineConfig fields)")
    p.add_argument("--store", metavar="DIR", default=argparse.SUPPRESS,
                   help="store directory (overrides store_path)")
    p.add_argument("--set", metavar="KEY=VALUE", action="append", default=argparse.SUPPRESS,
                   dest="overrides", help="override one config field; repeatable")
    p.add_argument("--json", action="store_true", default=argparse.SUPPRESS,
                   help="machine-readable output")
    p.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = argparse.ArgumentParser(prog="magma", parents=[common],
                                     description="Graph-structured conversational memory.")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("ingest", parents=[common], help="fast-path ingest of a transcript")
    p.add_argument("file", help="JSON list, JSONL, or {\"turns\": [...]} of interactions")

    p = sub.add_parser("consolidate", parents=[common], help="drain the consolidation queue")
    p.add_argument("--max-items", type=int, default=None)

    p = sub.add_parser("query", parents=[common], help="retrieve context and answer")
    p.add_argument("text")
    p.add_argument("--now", default=None, help="session time (ISO-8601); defaults to wall clock")
    p.add_argument("--no-answer", action="store_true", help="print the context only")

    p = sub.add_parser("eval", parents=[common], help="run the evaluation harness")
    p.add_argument("dataset")
    p.add_argument("--ablate", choices=[a for a in ABLATIONS if a != "none"], default=None)
    p.add_argument("--out", metavar="FILE", default=None, help="write the JSON report here")
    p.add_argument("--no-judge", action="store_true")

    sub.add_parser("audit", parents=[common], help="check graph invariants")

    p = sub.add_parser("serve", parents=[common], help="run the HTTP service")
    p.add_argument("--addr", default="127.0.0.1:8765", help="host:port")

    sub.add_parser("config", parents=[common], help="print the effective configuration")
    return parser


def load_config(args: argparse.Namespace) -> EngineConfig:
    overrides: dict[str, Any] = {}
    for item in getattr(args, "overrides", None) or ():
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        overrides[key.strip()] = coerce(key.strip(), value)
    if getattr(args, "store", None):
        overrides["store_path"] = args.store
    return EngineConfig.load(getattr(args, "config", None), overrides=overrides)


def read_interactions(path: str | Path) -> list[dict[str, Any]]:
    text = Path(path).read_text(encoding="utf-8")
    stripped = text.lstrip()
    if stripped.startswith("[") or stripped.startswith("{"):
        try:
            data = json.loads(text)
        except json.JSONDecodeError:
            data = None
        if isinstance(data, list):
            return data
        if isinstance(data, dict):
            return list(data.get("turns", [data]))
    return [json.loads(line) for line in text.splitlines() if line.strip()]


def _emit(args: argparse.Namespace, payload: dict[str, Any], text: str) -> None:
    if getattr(args, "json", False):
        print(json.dumps(payload, indent=2, sort_keys=True, ensure_ascii=False))
    else:
        print(text)


def dispatch(args: argparse.Namespace) -> int:
    config = load_config(args)
    cmd = args.command

    if cmd == "config":
        _emit(args, {"config": config.to_dict(), "config_hash": config.config_hash()},
              json.dumps(config.to_dict(), indent=2, sort_keys=True)
              + f"\nconfig_hash: {config.config_hash()}")
        return EXIT_OK

    if cmd == "eval":
        from .evaluation import run_eval
        report = run_eval(args.dataset, config, args.ablate or "none",
                          use_judge=not args.no_judge)
        if args.out:
            report.write(args.out)
        _emit(args, report.data, report.table())
        return EXIT_OK

    if cmd == "serve":
        from .service import serve
        host, _, port = args.addr.rpartition(":")
        serve(Engine(config), host or "127.0.0.1", int(port))
        return EXIT_OK

    engine = Engine(config)
    if cmd == "ingest":
        ids = engine.ingest(read_interactions(args.file))
        engine.save()
        span = f" ({ids[0]}..{ids[-1]})" if ids else ""
        _emit(args, {"ids": ids, **engine.envelope()}, f"ingested {len(ids)} events{span}")
        return EXIT_OK

    if cmd == "consolidate":
        result = engine.consolidate(args.max_items)
        engine.save()
        _emit(args, {**result, **engine.envelope()},
              f"consolidated {result['processed']} items; {result['remaining']} remaining"
              + (f"; failed: {', '.join(result['failed'])}" if result["failed"] else ""))
        return EXIT_OK

    if cmd == "query":
        outcome = engine.query(args.text, args.now, answer=not args.no_answer)
        if outcome.writeback:
            engine.save()
        _emit(args, {**outcome.to_dict(), **engine.envelope()}, outcome.render())
        return EXIT_PROVIDER if outcome.error else EXIT_OK

    if cmd == "audit":
        found = engine.audit()
        _emit(args, {"violations": found, "count": len(found), **engine.envelope()},
              "\n".join([*found, f"{len(found)} violations"]))
        return EXIT_AUDIT if found else EXIT_OK

    raise ConfigError(f"unknown command {cmd!r}")


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return dispatch(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except StoreError as exc:
        print(f"store error: {exc}", file=sys.stderr)
        return EXIT_STORE
    except ProviderError as exc:
        print(f"provider error: {exc}", file=sys.stderr)
        return EXIT_PROVIDER
    except (MagmaError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


def run() -> None:
    sys.exit(main())


if __name__ == "__main__":
    run()
