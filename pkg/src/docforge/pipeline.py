"""Linear per-page conversion pipeline.

A document is parsed by a backend, every page runs independently through
the stage chain (layout, table structure, optional OCR), and the processed
pages are assembled into a :class:`~docforge.model.Document`.

A stage is any callable with a ``name`` attribute that takes an iterator
of :class:`PageState` and yields the same pages with their predictions
extended.
"""

from __future__ import annotations

import abc
import json
import logging
import os
import time
from concurrent.futures import Executor, ProcessPoolExecutor, ThreadPoolExecutor
from dataclasses import dataclass, field, fields, replace
from enum import Enum
from typing import Any, Callable, Iterable, Iterator, Optional, Protocol, Sequence

from .assemble import AssemblyError, assemble_document
from .backend import BackendError, InputSource, get_backend
from .layout import LayoutConfig, assign_tokens, detect_layout, suppress_overlaps
from .model import DocItemLabel, Document, LayoutCluster, ParsedPage, TableStructure, TextToken
from .tablestruct import TableConfig, TableStructureError, empty_structure, infer_table_structure, match_back

log = logging.getLogger(__name__)

DEFAULT_THREAD_BUDGET = 4


class StageContractError(RuntimeError):
    def __init__(self, stage: str, detail: str):
        super().__init__(f"stage {stage!r} broke the stage contract: {detail}")
        self.stage = stage


class PipelineConfigError(ValueError):
    pass


# --- page state -------------------------------------------------------------------


@dataclass(frozen=True)
class TablePrediction:
    cluster_id: int
    structure: TableStructure


@dataclass(frozen=True)
class PagePredictions:
    layout: Optional[tuple[LayoutCluster, ...]] = None
    tables: Optional[tuple[TablePrediction, ...]] = None
    ocr_tokens: Optional[tuple[TextToken, ...]] = None


@dataclass(frozen=True)
class PageState:
    parsed: ParsedPage
    predictions: PagePredictions = field(default_factory=PagePredictions)
    warnings: tuple[str, ...] = ()

    @property
    def page_no(self) -> int:
        return self.parsed.page_no


# --- configuration ------------------------------------------------------------------


def resolve_thread_budget(explicit: Optional[int] = None) -> int:
    """Explicit budget, else ``OMP_NUM_THREADS``, else the default of 4."""
    if explicit is not None:
        return explicit
    env = os.environ.get("OMP_NUM_THREADS", "").strip()
    if env:
        try:
            value = int(env)
        except ValueError:
            log.warning("ignoring non-integer OMP_NUM_THREADS=%r", env)
        else:
            if value >= 1:
                return value
    return DEFAULT_THREAD_BUDGET


@dataclass(frozen=True)
class PipelineConfig:
    enable_table_structure: bool = True
    enable_ocr: bool = False
    max_pages: Optional[int] = None
    max_file_bytes: Optional[int] = None
    # None defers to OMP_NUM_THREADS, then to 4.
    thread_budget: Optional[int] = None
    backend: str = "interchange"
    layout_dpi: int = 72
    ocr_dpi: int = 216
    # "thread" or "process"; processes side-step the GIL but need picklable stages.
    executor: str = "thread"
    layout: LayoutConfig = field(default_factory=LayoutConfig)
    table: TableConfig = field(default_factory=TableConfig)

    def __post_init__(self) -> None:
        if self.thread_budget is not None and self.thread_budget < 1:
            raise PipelineConfigError("thread_budget must be >= 1")
        if self.layout_dpi <= 0 or self.ocr_dpi <= 0:
            raise PipelineConfigError("dpi values must be positive")
        if self.max_pages is not None and self.max_pages < 1:
            raise PipelineConfigError("max_pages must be >= 1")
        if self.max_file_bytes is not None and self.max_file_bytes < 0:
            raise PipelineConfigError("max_file_bytes must be >= 0")
        if self.executor not in ("thread", "process"):
            raise PipelineConfigError("executor must be 'thread' or 'process'")

    @property
    def effective_thread_budget(self) -> int:
        return resolve_thread_budget(self.thread_budget)

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> PipelineConfig:
        data = dict(data)
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise PipelineConfigError(f"unknown configuration keys: {', '.join(sorted(unknown))}")
        try:
            if "layout" in data:
                data["layout"] = LayoutConfig(**data["layout"])
            if "table" in data:
                data["table"] = TableConfig(**data["table"])
            return cls(**data)
        except TypeError as exc:
            raise PipelineConfigError(str(exc)) from None

    @classmethod
    def from_file(cls, path: str | os.PathLike) -> PipelineConfig:
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


# --- stages ---------------------------------------------------------------------------


class StageContract(Protocol):
    name: str

    def __call__(self, pages: Iterator[PageState]) -> Iterable[PageState]: ...


class BaseStage(abc.ABC):
    """Stage that augments each page independently."""

    name: str = "stage"

    def __call__(self, pages: Iterable[PageState]) -> Iterator[PageState]:
        for page in pages:
            yield self.process_page(page)

    @abc.abstractmethod
    def process_page(self, page: PageState) -> PageState: ...


class FunctionStage(BaseStage):
    def __init__(self, name: str, fn: Callable[[PageState], PageState]):
        self.name = name
        self.fn = fn

    def process_page(self, page: PageState) -> PageState:
        return self.fn(page)


class LayoutStage(BaseStage):
    name = "layout"

    def __init__(self, config: LayoutConfig = LayoutConfig(), backend: str = "interchange", dpi: int = 72):
        self.config = config
        self.backend = backend
        self.dpi = dpi

    def process_page(self, page: PageState) -> PageState:
        parsed = page.parsed
        image = get_backend(self.backend).render_page(parsed, self.dpi)
        proposals = detect_layout(parsed, self.config, image) + list(parsed.proposals)
        kept = suppress_overlaps(proposals, self.config.iou_threshold, self.config.containment_threshold)
        clusters = assign_tokens(kept, parsed.tokens, self.config.assign_threshold, self.config)
        return replace(page, predictions=replace(page.predictions, layout=tuple(clusters)))


class TableStructureStage(BaseStage):
    name = "tablestruct"

    def __init__(self, config: TableConfig = TableConfig()):
        self.config = config

    def process_page(self, page: PageState) -> PageState:
        parsed = page.parsed
        warnings = list(page.warnings)
        preds = []
        for cluster in page.predictions.layout or ():
            if cluster.label is not DocItemLabel.TABLE:
                continue
            tokens = [parsed.token_map[t] for t in cluster.token_ids]
            try:
                structure = infer_table_structure(cluster.bbox, tokens, self.config)
            except TableStructureError:
                warnings.append(f"page {parsed.page_no}: table {cluster.cluster_id} has no tokens; kept empty")
                preds.append(TablePrediction(cluster.cluster_id, empty_structure()))
                continue
            structure = match_back(structure, tokens, self.config.match_threshold)
            used = {t for c in structure.cells for t in c.source_token_ids}
            dropped = [t.token_id for t in tokens if t.token_id not in used]
            if dropped:
                warnings.append(
                    f"page {parsed.page_no}: table {cluster.cluster_id} dropped {len(dropped)} unmatched token(s)"
                )
            preds.append(TablePrediction(cluster.cluster_id, structure))
        return replace(
            page, predictions=replace(page.predictions, tables=tuple(preds)), warnings=tuple(warnings)
        )


OcrEngine = Callable[[Any], Sequence[TextToken]]


class OcrStage(BaseStage):
    """Runs an OCR engine on the high-resolution page raster.

    No engine ships with the package; without one the stage records empty
    OCR output and a warning.
    """

    name = "ocr"

    def __init__(self, engine: Optional[OcrEngine] = None, backend: str = "interchange", dpi: int = 216):
        self.engine = engine
        self.backend = backend
        self.dpi = dpi

    def process_page(self, page: PageState) -> PageState:
        if self.engine is None:
            return replace(
                page,
                predictions=replace(page.predictions, ocr_tokens=()),
                warnings=page.warnings + (f"page {page.page_no}: no OCR engine configured; OCR skipped",),
            )
        image = get_backend(self.backend).render_page(page.parsed, self.dpi)
        tokens = tuple(self.engine(image))
        return replace(page, predictions=replace(page.predictions, ocr_tokens=tokens))


def default_stages(cfg: PipelineConfig, ocr_engine: Optional[OcrEngine] = None) -> list[StageContract]:
    stages: list[StageContract] = [LayoutStage(cfg.layout, cfg.backend, cfg.layout_dpi)]
    if cfg.enable_table_structure:
        stages.append(TableStructureStage(cfg.table))
    if cfg.enable_ocr:
        stages.append(OcrStage(ocr_engine, cfg.backend, cfg.ocr_dpi))
    return stages


# --- contract enforcement -------------------------------------------------------------


def _check_extends(stage: str, page_no: int, before: PagePredictions, after: PagePredictions) -> None:
    for f in fields(PagePredictions):
        old = getattr(before, f.name)
        if old is not None and getattr(after, f.name) != old:
            raise StageContractError(stage, f"page {page_no}: prediction {f.name!r} was replaced or removed")


def run_stage(stage: StageContract, pages: Iterable[PageState]) -> Iterator[PageState]:
    """Run ``stage`` over ``pages`` and enforce its contract.

    Raises :class:`StageContractError` when the stage drops, duplicates or
    invents a page, alters the parsed page, or removes predictions.
    """
    name = getattr(stage, "name", repr(stage))
    inputs = list(pages)
    by_no = {p.page_no: p for p in inputs}
    seen: set[int] = set()
    for out in stage(iter(inputs)):
        if not isinstance(out, PageState):
            raise StageContractError(name, f"emitted {type(out).__name__} instead of a page")
        src = by_no.get(out.page_no)
        if src is None or out.page_no in seen:
            raise StageContractError(name, f"emitted unexpected page {out.page_no}")
        if out.parsed is not src.parsed and out.parsed != src.parsed:
            raise StageContractError(name, f"page {out.page_no}: parsed tokens were modified")
        _check_extends(name, out.page_no, src.predictions, out.predictions)
        seen.add(out.page_no)
        yield out
    missing = sorted(set(by_no) - seen)
    if missing:
        raise StageContractError(name, f"dropped page(s) {missing}")


def compose(stages: Sequence[StageContract]) -> Callable[[Iterable[PageState]], Iterator[PageState]]:
    def chain(pages: Iterable[PageState]) -> Iterator[PageState]:
        stream: Iterable[PageState] = pages
        for s in stages:
            stream = run_stage(s, stream)
        return iter(stream)

    return chain


# --- results ----------------------------------------------------------------------------


class ConversionStatus(str, Enum):
    SUCCESS = "success"
    PARTIAL = "partial"
    FAILURE = "failure"


@dataclass(frozen=True)
class ConversionResult:
    document: Document
    status: ConversionStatus
    warnings: tuple[str, ...] = ()
    timings: dict[str, float] = field(default_factory=dict, compare=False)
    error: Optional[str] = None
    page_count: int = 0


@dataclass(frozen=True)
class _PageOutcome:
    state: PageState
    timings: dict[str, float]
    failed: bool = False


def _process_page(stages: Sequence[StageContract], parsed: ParsedPage) -> _PageOutcome:
    state = PageState(parsed)
    timings: dict[str, float] = {}
    try:
        for s in stages:
            t0 = time.perf_counter()
            (state,) = list(run_stage(s, [state]))
            timings[s.name] = timings.get(s.name, 0.0) + time.perf_counter() - t0
    except Exception as exc:  # a failing page must not sink the document
        msg = f"page {parsed.page_no}: stage failure, predictions dropped: {exc}"
        return _PageOutcome(PageState(parsed, warnings=(msg,)), timings, failed=True)
    return _PageOutcome(state, timings)


class _ChainRunner:
    """Picklable per-page entry point for worker pools."""

    def __init__(self, stages: Sequence[StageContract]):
        self.stages = list(stages)

    def __call__(self, parsed: ParsedPage) -> _PageOutcome:
        return _process_page(self.stages, parsed)


# --- pipeline -------------------------------------------------------------------------------


class Pipeline:
    """Configured stage chain plus the worker pool that drives it.

    Pages are the unit of parallelism: up to ``thread_budget`` pages go
    through the whole chain concurrently, and results are re-sorted by page
    number before assembly, so output does not depend on the budget.
    """

    def __init__(self, config: PipelineConfig, stages: Sequence[StageContract]):
        self.config = config
        self.stages = list(stages)
        self.thread_budget = config.effective_thread_budget
        self._executor: Optional[Executor] = None

    def __enter__(self) -> Pipeline:
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    def close(self) -> None:
        if self._executor is not None:
            self._executor.shutdown(wait=True)
            self._executor = None

    @property
    def stage_names(self) -> list[str]:
        return [s.name for s in self.stages]

    def _pool(self) -> Executor:
        if self._executor is None:
            if self.config.executor == "process":
                self._executor = ProcessPoolExecutor(max_workers=self.thread_budget)
            else:
                self._executor = ThreadPoolExecutor(max_workers=self.thread_budget, thread_name_prefix="docforge")
        return self._executor

    def process_pages(self, pages: Sequence[ParsedPage]) -> list[_PageOutcome]:
        runner = _ChainRunner(self.stages)
        if self.thread_budget == 1 or len(pages) <= 1:
            outcomes = [runner(p) for p in pages]
        else:
            chunk = max(1, len(pages) // (self.thread_budget * 4)) if self.config.executor == "process" else 1
            outcomes = list(self._pool().map(runner, pages, chunksize=chunk))
        return sorted(outcomes, key=lambda o: o.state.page_no)

    def convert(self, src) -> ConversionResult:
        source = InputSource.coerce(src)
        timings: dict[str, float] = {}
        t0 = time.perf_counter()
        try:
            backend = get_backend(self.config.backend)
            parsed = backend.load_document(
                source, self.config.max_pages, max_bytes=self.config.max_file_bytes
            )
        except (BackendError, OSError) as exc:
            return ConversionResult(
                Document(name=source.display_name),
                ConversionStatus.FAILURE,
                warnings=(str(exc),),
                timings={"backend": time.perf_counter() - t0},
                error=str(exc),
            )
        timings["backend"] = time.perf_counter() - t0

        t1 = time.perf_counter()
        outcomes = self.process_pages(parsed.pages)
        pages_wall = time.perf_counter() - t1
        # Stages overlap across workers; their wall-clock share is the page
        # phase split in proportion to each stage's busy time.
        busy: dict[str, float] = {}
        for o in outcomes:
            for k, v in o.timings.items():
                busy[k] = busy.get(k, 0.0) + v
        total_busy = sum(busy.values())
        for name in self.stage_names:
            share = busy.get(name, 0.0) / total_busy if total_busy > 0 else 0.0
            timings[name] = pages_wall * share

        warnings = list(parsed.warnings)
        for o in outcomes:
            warnings.extend(o.state.warnings)
        t2 = time.perf_counter()
        document = assemble_document(parsed.name or source.display_name, [o.state for o in outcomes], warnings)
        timings["assemble"] = time.perf_counter() - t2
        status = ConversionStatus.PARTIAL if any(o.failed for o in outcomes) else ConversionStatus.SUCCESS
        return ConversionResult(document, status, tuple(warnings), timings, page_count=len(parsed.pages))

    def convert_batch(self, srcs: Sequence) -> list[ConversionResult]:
        results = []
        for src in srcs:
            try:
                results.append(self.convert(src))
            except AssemblyError as exc:
                name = InputSource.coerce(src).display_name
                results.append(
                    ConversionResult(Document(name=name), ConversionStatus.FAILURE, (str(exc),), error=str(exc))
                )
        return results


def build_pipeline(
    cfg: Optional[PipelineConfig] = None,
    stages: Optional[Sequence[StageContract]] = None,
    ocr_engine: Optional[OcrEngine] = None,
) -> Pipeline:
    """Create a pipeline with the default chain, or ``stages`` instead of it."""
    cfg = cfg or PipelineConfig()
    if stages is None:
        chain = default_stages(cfg, ocr_engine)
    else:
        chain = list(stages)
        if not chain:
            raise PipelineConfigError("stage override chain is empty")
    names = [getattr(s, "name", None) for s in chain]
    if any(not isinstance(n, str) or not n for n in names):
        raise PipelineConfigError("every stage needs a non-empty name")
    dupes = sorted({n for n in names if names.count(n) > 1})
    if dupes:
        raise PipelineConfigError(f"duplicate stage names: {', '.join(dupes)}")
    get_backend(cfg.backend)
    return Pipeline(cfg, chain)


def convert_single(src, cfg: Optional[PipelineConfig] = None, stages=None) -> ConversionResult:
    with build_pipeline(cfg, stages) as pipeline:
        return pipeline.convert(src)


def convert_batch(srcs: Sequence, cfg: Optional[PipelineConfig] = None, stages=None) -> list[ConversionResult]:
    if not srcs:
        return []
    with build_pipeline(cfg, stages) as pipeline:
        return pipeline.convert_batch(srcs)
