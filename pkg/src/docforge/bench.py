"""Benchmark harness: time-to-solution, throughput and peak memory.

Each matrix point (thread budget x backend) converts the whole corpus once
with OCR disabled. TTS covers everything after argument handling: pipeline
construction, worker start-up, parsing, page stages and assembly.
"""

from __future__ import annotations

import hashlib
import io
import csv
import threading
import time
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional, Sequence

import psutil

from .backend import FILE_SUFFIX
from .pipeline import ConversionStatus, PipelineConfig, build_pipeline
from .serialize import to_json, to_markdown

CSV_HEADER = ("corpus", "backend", "threads", "pages", "tts_s", "pages_per_s", "peak_mem_mb")
SAMPLE_INTERVAL_S = 0.1


@dataclass(frozen=True)
class BenchReport:
    corpus: str
    backend: str
    thread_budget: int
    page_count: int
    tts_s: float
    pages_per_s: float
    peak_mem_bytes: int
    failed: bool = False
    output_digest: str = ""


def compute_throughput(page_count: int, tts_s: float) -> float:
    """Pages per second rounded to two decimals."""
    if tts_s <= 0:
        raise ValueError(f"tts_s must be positive, got {tts_s}")
    return round(page_count / tts_s, 2)


class PeakRssSampler:
    """Polls the resident set size of this process and its children."""

    def __init__(self, interval: float = SAMPLE_INTERVAL_S):
        self.interval = interval
        self.peak = 0
        self._proc = psutil.Process()
        self._stop = threading.Event()
        self._thread = threading.Thread(target=self._run, name="rss-sampler", daemon=True)

    def sample(self) -> int:
        total = self._proc.memory_info().rss
        for child in self._proc.children(recursive=True):
            try:
                total += child.memory_info().rss
            except psutil.Error:
                pass  # child exited between listing and reading
        self.peak = max(self.peak, total)
        return total

    def _run(self) -> None:
        while not self._stop.wait(self.interval):
            self.sample()

    def __enter__(self) -> PeakRssSampler:
        self.sample()
        self._thread.start()
        return self

    def __exit__(self, *exc) -> None:
        self._stop.set()
        self._thread.join()
        self.sample()


def corpus_files(corpus_dir: str | Path) -> list[Path]:
    return sorted(p for p in Path(corpus_dir).iterdir() if p.name.endswith(FILE_SUFFIX))


def run_bench(
    corpus_dir: str | Path,
    thread_budgets: Sequence[int] = (4, 16),
    backends: Sequence[str] = ("interchange",),
    config: Optional[PipelineConfig] = None,
    executor: str = "process",
) -> list[BenchReport]:
    """One report per (thread budget, backend), in matrix order."""
    files = corpus_files(corpus_dir)
    if not files:
        raise ValueError(f"corpus {corpus_dir} holds no {FILE_SUFFIX} files")
    base = config or PipelineConfig()
    reports = []
    for budget in thread_budgets:
        for backend in backends:
            cfg = replace(base, thread_budget=budget, backend=backend, enable_ocr=False, executor=executor)
            reports.append(_run_point(Path(corpus_dir).name, files, cfg))
    return reports


def _run_point(corpus: str, files: Sequence[Path], cfg: PipelineConfig) -> BenchReport:
    digest = hashlib.sha256()
    pages = 0
    failed = False
    with PeakRssSampler() as rss:
        t0 = time.perf_counter()
        try:
            with build_pipeline(cfg) as pipeline:
                for result in pipeline.convert_batch(files):
                    pages += result.page_count
                    if result.status is ConversionStatus.FAILURE:
                        failed = True
                        continue
                    failed = failed or result.status is not ConversionStatus.SUCCESS
                    digest.update(to_json(result.document).encode("utf-8"))
                    digest.update(to_markdown(result.document).encode("utf-8"))
        except Exception:  # a broken point is reported, the sweep goes on
            failed = True
        tts = time.perf_counter() - t0
    # Stored at the reported precision so the CSV row is self-consistent.
    tts = max(round(tts, 2), 0.01)
    return BenchReport(
        corpus=corpus,
        backend=cfg.backend,
        thread_budget=cfg.effective_thread_budget,
        page_count=pages,
        tts_s=tts,
        pages_per_s=compute_throughput(pages, tts),
        peak_mem_bytes=rss.peak,
        failed=failed,
        output_digest=digest.hexdigest(),
    )


def emit_report(reports: Sequence[BenchReport]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for r in reports:
        writer.writerow(
            [
                r.corpus,
                r.backend,
                r.thread_budget,
                r.page_count,
                f"{r.tts_s:.2f}",
                f"{r.pages_per_s:.2f}",
                f"{r.peak_mem_bytes / 2**20:.2f}",
            ]
        )
    return buf.getvalue()
