"""Operator-facing command line: synthesize, detect, evaluate, rules.

Exit codes: 0 success, 2 usage/config/corrupt input, 3 backend failure,
130 interrupted.  Data outputs (detection results, metrics, rule reports)
go to stdout; progress and diagnostics go to stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

from . import __version__
from .backend import BackendError, HttpBackend, MockBackend
from .config import ConfigError, RunConfig, load_run_config
from .corpus import CorpusError, load_corpus, make_windows, split_dataset
from .detector import Detector, compute_metrics, detect_stream, iter_raw_lines
from .epochs import DatabaseError, RuleDatabase, SynthesisAborted, run_synthesis
from .ruledsl import classify_subrules, count_atoms, pretty_print
from .synth import TranscriptWriter

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_BACKEND = 3
EXIT_INTERRUPT = 130


def _make_backend(config: RunConfig):
    if config.backend == "mock":
        return MockBackend()
    return HttpBackend(config.http)


def _load_dataset(corpus_path: str, config: RunConfig):
    lines = load_corpus(corpus_path, config.corpus.label_format)
    windows = make_windows(lines, config.corpus.window_size, config.corpus.stride)
    return split_dataset(windows, config.corpus.split_ratio)


def cmd_synthesize(args: argparse.Namespace) -> int:
    config = load_run_config(args.config)
    dataset = _load_dataset(args.corpus, config)
    backend = _make_backend(config)
    corpus_meta = {
        "label_format": config.corpus.label_format,
        "window_size": config.corpus.window_size,
        "stride": config.corpus.stride,
        "split_ratio": list(config.corpus.split_ratio),
    }

    def progress(event: dict) -> None:
        print(json.dumps(event), file=sys.stderr)

    transcript_handle = None
    transcript = None
    if args.transcript:
        transcript_handle = open(args.transcript, "w", encoding="utf-8")
        transcript = TranscriptWriter(transcript_handle)
    try:
        db = run_synthesis(
            dataset,
            backend,
            config.synthesis,
            seed=config.seed,
            db_path=args.out,
            transcript=transcript,
            progress=progress,
            corpus_meta=corpus_meta,
        )
    finally:
        if transcript_handle is not None:
            transcript_handle.close()
    print(
        f"wrote {args.out}: {len(db.normal_rules)} normal rule(s), "
        f"{len(db.abnormal_rules)} abnormal rule(s)",
        file=sys.stderr,
    )
    return EXIT_OK


def _window_params(db: RuleDatabase, args: argparse.Namespace) -> tuple[int, int | None]:
    snapshot = db.config.get("corpus", {}) if isinstance(db.config, dict) else {}
    # `or` would swallow an explicit 0, which must reach the validator.
    window_size = (
        args.window_size
        if args.window_size is not None
        else snapshot.get("window_size", 20)
    )
    stride = args.stride if args.stride is not None else snapshot.get("stride")
    return window_size, stride


def cmd_detect(args: argparse.Namespace) -> int:
    db = RuleDatabase.load(args.db)
    window_size, stride = _window_params(db, args)
    sink = open(args.out, "w", encoding="utf-8") if args.out else sys.stdout
    handle = sys.stdin if args.log == "-" else open(args.log, "r", encoding="utf-8", errors="replace")
    try:
        for result in detect_stream(
            db, iter_raw_lines(handle), window_size, stride
        ):
            sink.write(json.dumps(result.to_dict()) + "\n")
            # live tails (tail -f | logsift detect -) need each verdict now
            sink.flush()
    finally:
        if handle is not sys.stdin:
            handle.close()
        if sink is not sys.stdout:
            sink.close()
    return EXIT_OK


def cmd_evaluate(args: argparse.Namespace) -> int:
    db = RuleDatabase.load(args.db)
    snapshot = db.config.get("corpus", {}) if isinstance(db.config, dict) else {}
    label_format = args.label_format or snapshot.get("label_format", "bgl_dash")
    window_size, stride = _window_params(db, args)
    ratio = tuple(snapshot.get("split_ratio", (6, 1, 3)))

    lines = load_corpus(args.corpus, label_format)
    windows = make_windows(lines, window_size, stride)
    dataset = split_dataset(windows, ratio)
    chosen = dataset.windows if args.split == "all" else dataset.test

    detector = Detector(db)
    results = [detector.classify(w) for w in chosen]
    truth = {w.id: w.label for w in chosen}
    metrics = compute_metrics(results, truth)
    payload = {"split": args.split, "windows": len(chosen), **metrics.to_dict()}
    print(json.dumps(payload, indent=2))
    return EXIT_OK


def cmd_rules(args: argparse.Namespace) -> int:
    db = RuleDatabase.load(args.db)
    rules = db.all_rules()
    if args.action == "list":
        for rule in rules:
            coverage = db.acceptance.get(rule.name, {}).get("validation_coverage")
            shown = f"{coverage:.3f}" if coverage is not None else "n/a"
            print(
                f"{rule.name}  {rule.kind:8s}  atoms={count_atoms(rule.ast)}  "
                f"validation_coverage={shown}"
            )
        return EXIT_OK
    if args.action == "show":
        for rule in rules:
            if rule.name == args.name:
                print(f"# {rule.docstring}")
                if rule.provenance is not None:
                    print(
                        f"# synthesized in epoch {rule.provenance.epoch}, "
                        f"rollout {rule.provenance.rollout} "
                        f"(transcript {rule.provenance.transcript_id})"
                    )
                print(pretty_print(rule), end="")
                return EXIT_OK
        print(f"error: no rule named {args.name!r}", file=sys.stderr)
        return EXIT_USAGE
    # stats
    atom_counts = [count_atoms(r.ast) for r in rules]
    subrule_lists = [classify_subrules(r) for r in rules]
    histogram: dict[str, int] = {}
    for cats in subrule_lists:
        for cat in cats:
            histogram[cat] = histogram.get(cat, 0) + 1
    stats = {
        "normal_rules": len(db.normal_rules),
        "abnormal_rules": len(db.abnormal_rules),
        "avg_atoms": sum(atom_counts) / len(rules) if rules else 0.0,
        "avg_subrule_types": (
            sum(len(c) for c in subrule_lists) / len(rules) if rules else 0.0
        ),
        "subrule_histogram": dict(sorted(histogram.items())),
    }
    print(json.dumps(stats, indent=2))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="logsift",
        description="Rule-based log anomaly detection: synthesize rule "
        "databases offline, then classify log streams online.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument(
        "-v", "--verbose", action="store_true", help="log debug detail to stderr"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synthesize", help="synthesize a rule database from a labeled corpus")
    p.add_argument("--config", default=None, help="YAML run configuration")
    p.add_argument("--corpus", required=True, help="labeled corpus file")
    p.add_argument("--out", required=True, help="rule database output path")
    p.add_argument("--transcript", default=None, help="agent transcript JSON-lines path")
    p.set_defaults(fn=cmd_synthesize)

    p = sub.add_parser("detect", help="classify a log stream with a rule database")
    p.add_argument("--db", required=True, help="rule database path")
    p.add_argument("log", help="log file to read, or - for stdin")
    p.add_argument("--window-size", type=int, default=None,
                   help="lines per window (default: from the database)")
    p.add_argument("--stride", type=int, default=None,
                   help="window stride (default: from the database)")
    p.add_argument("--out", default=None, help="results path (default stdout)")
    p.set_defaults(fn=cmd_detect)

    p = sub.add_parser("evaluate", help="score a rule database against a labeled corpus")
    p.add_argument("--db", required=True, help="rule database path")
    p.add_argument("--corpus", required=True, help="labeled corpus file")
    p.add_argument("--split", choices=("test", "all"), default="test")
    p.add_argument("--label-format", choices=("bgl_dash", "two_column"), default=None)
    p.add_argument("--window-size", type=int, default=None)
    p.add_argument("--stride", type=int, default=None)
    p.set_defaults(fn=cmd_evaluate)

    p = sub.add_parser("rules", help="inspect a rule database")
    p.add_argument("--db", required=True, help="rule database path")
    rules_sub = p.add_subparsers(dest="action", required=True)
    rules_sub.add_parser("list", help="one line per rule")
    show = rules_sub.add_parser("show", help="print one rule in full")
    show.add_argument("name")
    rules_sub.add_parser("stats", help="aggregate rule statistics")
    p.set_defaults(fn=cmd_rules)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.fn(args)
    except SynthesisAborted as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BACKEND
    except BackendError as exc:
        print(f"error: backend failure: {exc}", file=sys.stderr)
        return EXIT_BACKEND
    except (ConfigError, CorpusError, DatabaseError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except KeyboardInterrupt:
        print("interrupted; any rules already accepted remain on disk", file=sys.stderr)
        return EXIT_INTERRUPT


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
