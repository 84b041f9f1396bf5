"""Command-line front end: ``convert``, ``bench`` and ``synth``."""

from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path
from typing import Optional, Sequence

from .backend import InputSource, available_backends
from .pipeline import ConversionStatus, PipelineConfig, PipelineConfigError, build_pipeline

EXIT_OK, EXIT_FAILURE, EXIT_USAGE = 0, 1, 2


def _positive_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {value}")
    return value


def _budgets(text: str) -> list[int]:
    return [_positive_int(x) for x in text.split(",") if x.strip()]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="docforge", description="Convert parsed-page documents to JSON or Markdown.")
    sub = parser.add_subparsers(dest="command", required=True)

    conv = sub.add_parser("convert", help="convert one or more documents")
    conv.add_argument("sources", nargs="+", metavar="SRC", help="files or http(s) URLs")
    conv.add_argument("--to", choices=("md", "json"), default="md", help="output format (default: md)")
    conv.add_argument("--out", type=Path, default=Path("."), help="output directory (default: current)")
    conv.add_argument("--no-table-structure", action="store_true", help="skip table structure recognition")
    conv.add_argument("--no-ocr", action="store_true", help="disable OCR (the default)")
    conv.add_argument("--ocr", action="store_true", help="enable the OCR stage")
    conv.add_argument("--max-pages", type=_positive_int)
    conv.add_argument("--max-bytes", type=_positive_int)
    conv.add_argument("--threads", type=_positive_int, help="thread budget (default: OMP_NUM_THREADS, else 4)")
    conv.add_argument("--backend", default=None, help=f"one of: {', '.join(available_backends())}")
    conv.add_argument("--executor", choices=("thread", "process"), default=None)
    conv.add_argument("--config", type=Path, help="JSON pipeline configuration file")

    bench = sub.add_parser("bench", help="measure TTS, throughput and peak memory over a corpus")
    bench.add_argument("corpus", type=Path)
    bench.add_argument("--threads", type=_budgets, default=[4, 16], help="comma-separated budgets (default: 4,16)")
    bench.add_argument("--backends", default="interchange", help="comma-separated backend names")
    bench.add_argument("--executor", choices=("thread", "process"), default="process")
    bench.add_argument("--config", type=Path)
    bench.add_argument("--csv", type=Path, help="also write the CSV report here")

    synth = sub.add_parser("synth", help="write the synthetic benchmark corpus")
    synth.add_argument("out", type=Path)
    synth.add_argument("--docs", type=_positive_int, default=20)
    synth.add_argument("--pages", type=_positive_int, default=11)
    synth.add_argument("--seed", type=int, default=7)
    return parser


def _config_from_args(args: argparse.Namespace) -> PipelineConfig:
    cfg = PipelineConfig.from_file(args.config) if args.config else PipelineConfig()
    overrides = {}
    if args.no_table_structure:
        overrides["enable_table_structure"] = False
    if args.ocr and not args.no_ocr:
        overrides["enable_ocr"] = True
    elif args.no_ocr:
        overrides["enable_ocr"] = False
    for flag, key in (
        ("max_pages", "max_pages"),
        ("max_bytes", "max_file_bytes"),
        ("threads", "thread_budget"),
        ("backend", "backend"),
        ("executor", "executor"),
    ):
        value = getattr(args, flag)
        if value is not None:
            overrides[key] = value
    return dataclasses.replace(cfg, **overrides)


def _cmd_convert(args: argparse.Namespace) -> int:
    from .serialize import to_json, to_markdown

    try:
        cfg = _config_from_args(args)
        pipeline = build_pipeline(cfg)
    except (PipelineConfigError, OSError, ValueError) as exc:
        print(f"docforge: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except KeyError as exc:
        print(f"docforge: error: unknown backend {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        args.out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        print(f"docforge: error: {exc}", file=sys.stderr)
        return EXIT_FAILURE

    code = EXIT_OK
    with pipeline:
        for src in args.sources:
            name = InputSource.coerce(src).display_name
            result = pipeline.convert_batch([src])[0]
            for w in result.warnings:
                print(f"{name}: warning: {w}", file=sys.stderr)
            if result.status is ConversionStatus.FAILURE:
                print(f"{name}: error: {result.error}", file=sys.stderr)
                code = EXIT_FAILURE
                continue
            if args.to == "json":
                text, suffix = to_json(result.document), ".json"
            else:
                text, suffix = to_markdown(result.document), ".md"
            target = args.out / (name + suffix)
            try:
                target.write_text(text, encoding="utf-8")
            except OSError as exc:
                print(f"{name}: error: {exc}", file=sys.stderr)
                code = EXIT_FAILURE
                continue
            if result.status is ConversionStatus.PARTIAL:
                code = EXIT_FAILURE
    return code


def _cmd_bench(args: argparse.Namespace) -> int:
    from .bench import emit_report, run_bench

    try:
        cfg = PipelineConfig.from_file(args.config) if args.config else None
        backends = [b for b in args.backends.split(",") if b]
        reports = run_bench(args.corpus, args.threads, backends, config=cfg, executor=args.executor)
    except (PipelineConfigError, ValueError, OSError) as exc:
        print(f"docforge: error: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    text = emit_report(reports)
    sys.stdout.write(text)
    if args.csv:
        args.csv.write_text(text, encoding="utf-8")
    return EXIT_FAILURE if any(r.failed for r in reports) else EXIT_OK


def _cmd_synth(args: argparse.Namespace) -> int:
    from .synth import synth_corpus

    paths = synth_corpus(args.out, args.docs, args.pages, args.seed)
    print(f"wrote {len(paths)} documents ({len(paths) * args.pages} pages) to {args.out}")
    return EXIT_OK


def cli_main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors and 0 after --help.
        return int(exc.code or 0)
    handlers = {"convert": _cmd_convert, "bench": _cmd_bench, "synth": _cmd_synth}
    return handlers[args.command](args)


def main() -> None:
    sys.exit(cli_main())
