"""Command-line entry point: ``epimem ingest | ask | eval``.

Exit codes: 0 success, 2 input error, 3 backend error, 4 config error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Sequence

from epimem.agents.orchestrator import AllAssistantsFailedError
from epimem.archive import ArchiveError
from epimem.backend.base import BackendError
from epimem.config import ConfigError, EngineConfig, load_config
from epimem.engine import MODES, MemoryEngine
from epimem.evalkit.datasets import DatasetError, load_dialogue_dataset, load_streaming_docs
from epimem.evalkit.evaluate import EvaluationError, evaluate
from epimem.segmenter import StreamError

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_BACKEND = 3
EXIT_CONFIG = 4

DEFAULTS = EngineConfig()


class CLIError(Exception):
    def __init__(self, message: str, code: int) -> None:
        super().__init__(message)
        self.code = code


def _config(args: argparse.Namespace) -> EngineConfig | None:
    return load_config(args.config) if args.config else None


def _open_engine(args: argparse.Namespace, config: EngineConfig | None) -> MemoryEngine:
    if args.archive is None:
        return MemoryEngine(config)
    return MemoryEngine.open(args.archive, config)


def cmd_ingest(args: argparse.Namespace) -> int:
    path = Path(args.input)
    if not path.is_file():
        raise CLIError(f"input file not found: {path}", EXIT_INPUT)
    with MemoryEngine.open(args.archive, _config(args)) as engine:
        reports = engine.ingest_path(path, args.stream)
    for report in reports:
        n = len(report.units)
        status = "unchanged" if report.unchanged else "updated"
        print(f"stream {report.stream_id}: N={n} units, {report.total_tokens} tokens, {status}")
        for u in report.units:
            print(f"  {u.unit_id:<24} {u.state:<12} {u.tokens:>7} tokens  summary={u.summary:<8} {u.status}")
    return EXIT_OK


def _print_explain(answer) -> None:
    act = answer.activation
    if act is not None:
        print("\nactivation (unit, pathways, fused, per-pathway):")
        for entry in act.entries:
            scores = " ".join(f"{p}={s:.4f}" for p, s in sorted(entry.scores.items()))
            print(f"  {entry.unit_id:<24} {{{'|'.join(sorted(entry.pathways))}}} fused={entry.fused:.4f} {scores}")
    if answer.trace is not None:
        print(f"\ntrace ({len(answer.trace.steps)} step(s), termination={answer.trace.termination.value}):")
        for i, step in enumerate(answer.trace.steps, start=1):
            print(f"  {i}. {step.subquery!r} -> {', '.join(step.activated) or '(none)'}")
    led = answer.ledger
    print(
        f"\ncost: T_S={led.t_small} T_L={led.t_large} normalized={led.normalized_cost} "
        f"calls(small={led.calls_small}, large={led.calls_large}) "
        f"cache(hits={led.cache_hits}, misses={led.cache_misses})"
    )
    for failure in led.failures:
        print(f"  failed: {failure}")


def cmd_ask(args: argparse.Namespace) -> int:
    if not Path(args.archive).is_dir():
        raise CLIError(f"archive directory not found: {args.archive}", EXIT_INPUT)
    with MemoryEngine.open(args.archive, _config(args)) as engine:
        answer = engine.ask(
            args.question, mode=args.mode, stream_id=args.stream, tau=getattr(args, "tau", None),
            max_iterations=getattr(args, "max_iterations", None),
        )
    print(answer.answer.answer_core)
    if args.json:
        payload = {
            "answer": answer.answer.to_dict(),
            "activation": answer.activation.to_dict() if answer.activation else None,
            "ledger": answer.ledger.to_dict(),
        }
        print(json.dumps(payload, sort_keys=True, ensure_ascii=False))
    if args.explain:
        _print_explain(answer)
    return EXIT_OK


def cmd_eval(args: argparse.Namespace) -> int:
    path = Path(args.dataset)
    if not path.is_file():
        raise CLIError(f"dataset not found: {path}", EXIT_INPUT)
    if args.kind == "docs":
        if args.scale is None:
            raise CLIError("--scale is required for --kind docs", EXIT_INPUT)
        dataset = load_streaming_docs(path, args.scale)
    else:
        dataset = load_dialogue_dataset(path)
    if args.categories:
        dataset = dataset.filter(c for item in args.categories for c in item.split(","))
    engine = _open_engine(args, _config(args))
    try:
        report = evaluate(
            engine, dataset, args.mode, workers=args.workers, tau=getattr(args, "tau", None),
            max_iterations=getattr(args, "max_iterations", None),
        )
    finally:
        engine.close()
    if args.report:
        report.write(args.report)
    print(report.table())
    return EXIT_OK


def _default(section: str, key: str):
    return getattr(getattr(DEFAULTS, section), key)


def build_parser() -> argparse.ArgumentParser:
    fmt = argparse.ArgumentDefaultsHelpFormatter
    parser = argparse.ArgumentParser(prog="epimem", description=__doc__.splitlines()[0], formatter_class=fmt)
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", help="engine config (.toml or .json); defaults to the archive's saved config")

    p = sub.add_parser("ingest", help="segment, index and store a stream", formatter_class=fmt)
    p.add_argument("--input", required=True, help="dialogue/doc dataset (.json/.jsonl) or record file")
    p.add_argument("--archive", required=True, help="archive directory (created if missing)")
    p.add_argument("--stream", default=None, help="stream id (default: conversation ids or the file stem)")
    common(p)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("ask", help="answer one question from an archive", formatter_class=fmt)
    p.add_argument("--archive", required=True, help="archive directory")
    p.add_argument("--question", required=True, help="question text")
    p.add_argument("--mode", choices=MODES, default="direct", help="direct or iterative reasoning")
    p.add_argument("--stream", default=None, help="restrict routing to one stream id")
    p.add_argument("--tau", type=int, default=argparse.SUPPRESS,
                   help=f"activation budget (default: {_default('router', 'tau')}, or the config value)")
    p.add_argument("--max-iterations", type=int, default=argparse.SUPPRESS,
                   help=f"iteration limit in iterative mode (default: {_default('agents', 'max_iterations')}, "
                   "or the config value)")
    p.add_argument("--explain", action="store_true", help="print activation attribution, trace and cost")
    p.add_argument("--json", action="store_true", help="also print a machine-readable JSON line")
    common(p)
    p.set_defaults(func=cmd_ask)

    p = sub.add_parser("eval", help="evaluate a dataset and write a report", formatter_class=fmt)
    p.add_argument("--dataset", required=True, help="dataset file")
    p.add_argument("--kind", choices=("dialogue", "docs"), default="dialogue", help="dataset schema")
    p.add_argument("--scale", type=int, default=None, help="document count for --kind docs")
    p.add_argument("--archive", default=None, help="archive directory (default: in-memory)")
    p.add_argument("--report", default=None, help="write the JSON-lines report here")
    p.add_argument("--mode", choices=MODES, default="direct", help="direct or iterative reasoning")
    p.add_argument("--categories", action="append", default=None,
                   help="only evaluate these categories (comma-separated or repeated)")
    p.add_argument("--tau", type=int, default=argparse.SUPPRESS,
                   help=f"activation budget (default: {_default('router', 'tau')}, or the config value)")
    p.add_argument("--max-iterations", type=int, default=argparse.SUPPRESS,
                   help=f"iteration limit in iterative mode (default: {_default('agents', 'max_iterations')}, "
                   "or the config value)")
    p.add_argument("--workers", type=int, default=1, help="examples evaluated concurrently")
    common(p)
    p.set_defaults(func=cmd_eval)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except CLIError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except BackendError as exc:
        hint = " (retriable: check the endpoint and try again)" if exc.retriable else ""
        print(f"backend error: {exc}{hint}", file=sys.stderr)
        return EXIT_BACKEND
    except AllAssistantsFailedError as exc:
        for failure in exc.ledger.failures:
            print(f"  failed: {failure}", file=sys.stderr)
        print(f"backend error: {exc} (retriable: check the endpoint and try again)", file=sys.stderr)
        return EXIT_BACKEND
    except (DatasetError, StreamError, EvaluationError, ArchiveError, FileNotFoundError, ValueError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
