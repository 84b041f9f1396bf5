"""Typed document model and geometry primitives.

Coordinates are page points (1/72 inch) with the origin at the top-left
corner of the page and y increasing downward.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from typing import Mapping, Optional, Sequence


@dataclass(frozen=True)
class BoundingBox:
    left: float
    top: float
    right: float
    bottom: float

    def __post_init__(self) -> None:
        for name in ("left", "top", "right", "bottom"):
            value = float(getattr(self, name))
            if not math.isfinite(value):
                raise ValueError(f"bounding box {name} is not finite: {value!r}")
            object.__setattr__(self, name, value)
        if self.left > self.right or self.top > self.bottom:
            raise ValueError(
                f"inverted bounding box: ({self.left}, {self.top}, {self.right}, {self.bottom})"
            )

    @property
    def width(self) -> float:
        return self.right - self.left

    @property
    def height(self) -> float:
        return self.bottom - self.top

    @property
    def area(self) -> float:
        return self.width * self.height

    @property
    def center(self) -> tuple[float, float]:
        return ((self.left + self.right) / 2, (self.top + self.bottom) / 2)

    def as_list(self) -> list[float]:
        return [self.left, self.top, self.right, self.bottom]

    def intersection_area(self, other: BoundingBox) -> float:
        w = min(self.right, other.right) - max(self.left, other.left)
        h = min(self.bottom, other.bottom) - max(self.top, other.top)
        if w <= 0 or h <= 0:
            return 0.0
        return w * h

    def union(self, other: BoundingBox) -> BoundingBox:
        return BoundingBox(
            min(self.left, other.left),
            min(self.top, other.top),
            max(self.right, other.right),
            max(self.bottom, other.bottom),
        )

    def contains_point(self, x: float, y: float) -> bool:
        return self.left <= x <= self.right and self.top <= y <= self.bottom

    def clamp(self, width: float, height: float) -> BoundingBox:
        """Return the box clipped to the page rectangle [0, width] x [0, height]."""
        l = min(max(self.left, 0.0), width)
        r = min(max(self.right, 0.0), width)
        t = min(max(self.top, 0.0), height)
        b = min(max(self.bottom, 0.0), height)
        return BoundingBox(l, t, r, b)

    @classmethod
    def hull(cls, boxes: Sequence[BoundingBox]) -> BoundingBox:
        if not boxes:
            raise ValueError("hull of zero boxes")
        return cls(
            min(b.left for b in boxes),
            min(b.top for b in boxes),
            max(b.right for b in boxes),
            max(b.bottom for b in boxes),
        )


def bbox_area(b: BoundingBox) -> float:
    return (b.right - b.left) * (b.bottom - b.top)


def bbox_iou(a: BoundingBox, b: BoundingBox) -> float:
    """Intersection over union; 0.0 when the union is empty."""
    inter = a.intersection_area(b)
    union = bbox_area(a) + bbox_area(b) - inter
    if union <= 0:
        return 0.0
    return inter / union


def bbox_overlap_frac(a: BoundingBox, b: BoundingBox) -> float:
    """Fraction of ``a`` covered by ``b``.

    A zero-area ``a`` counts as fully covered when its center lies inside
    ``b`` (boundary included) and as uncovered otherwise.
    """
    area = bbox_area(a)
    if area <= 0:
        return 1.0 if b.contains_point(*a.center) else 0.0
    return a.intersection_area(b) / area


@dataclass(frozen=True)
class TextToken:
    token_id: int
    text: str
    bbox: BoundingBox
    font_size: Optional[float] = None

    @property
    def effective_font_size(self) -> float:
        # Backends without font metrics: glyph height is the best proxy.
        return self.font_size if self.font_size is not None else self.bbox.height


@dataclass(frozen=True)
class Raster:
    """Reference to an embedded page image rendered at ``dpi``."""

    dpi: int
    path: Optional[str] = None
    data: Optional[bytes] = None

    def __post_init__(self) -> None:
        if self.dpi <= 0:
            raise ValueError("raster dpi must be positive")
        if (self.path is None) == (self.data is None):
            raise ValueError("raster needs exactly one of path or data")


class DocItemLabel(str, Enum):
    TITLE = "title"
    SECTION_HEADER = "section_header"
    TEXT = "text"
    LIST_ITEM = "list_item"
    CAPTION = "caption"
    FOOTNOTE = "footnote"
    FORMULA = "formula"
    PAGE_HEADER = "page_header"
    PAGE_FOOTER = "page_footer"
    PICTURE = "picture"
    TABLE = "table"
    CODE = "code"

    @classmethod
    def parse(cls, value: str) -> DocItemLabel:
        try:
            return cls(value)
        except ValueError:
            raise ValueError(f"unknown item label {value!r}") from None


@dataclass(frozen=True)
class LayoutProposal:
    bbox: BoundingBox
    label: DocItemLabel
    confidence: float = 1.0

    def __post_init__(self) -> None:
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence outside [0, 1]: {self.confidence}")


@dataclass(frozen=True)
class LayoutCluster:
    cluster_id: int
    proposal: LayoutProposal
    token_ids: tuple[int, ...] = ()

    @property
    def label(self) -> DocItemLabel:
        return self.proposal.label

    @property
    def bbox(self) -> BoundingBox:
        return self.proposal.bbox


@dataclass(frozen=True)
class ParsedPage:
    page_no: int
    width: float
    height: float
    tokens: tuple[TextToken, ...] = ()
    raster: Optional[Raster] = None
    # Externally supplied region proposals (e.g. pictures found from pixels).
    proposals: tuple[LayoutProposal, ...] = ()

    def __post_init__(self) -> None:
        if self.page_no < 1:
            raise ValueError(f"page numbers are 1-based, got {self.page_no}")
        if not (self.width > 0 and self.height > 0):
            raise ValueError(f"page {self.page_no} has non-positive size")
        ids = [t.token_id for t in self.tokens]
        if len(set(ids)) != len(ids):
            raise ValueError(f"page {self.page_no} has duplicate token ids")

    @cached_property
    def token_map(self) -> dict[int, TextToken]:
        return {t.token_id: t for t in self.tokens}


class CellRole(str, Enum):
    COLUMN_HEADER = "column_header"
    ROW_HEADER = "row_header"
    BODY = "body"


@dataclass(frozen=True)
class TableCell:
    start_row: int
    start_col: int
    row_span: int = 1
    col_span: int = 1
    role: CellRole = CellRole.BODY
    text: str = ""
    source_token_ids: tuple[int, ...] = ()
    # Union of the geometric fragments the cell was built from.
    bbox: Optional[BoundingBox] = None

    @property
    def end_row(self) -> int:
        return self.start_row + self.row_span

    @property
    def end_col(self) -> int:
        return self.start_col + self.col_span

    def positions(self):
        for r in range(self.start_row, self.end_row):
            for c in range(self.start_col, self.end_col):
                yield r, c


@dataclass(frozen=True)
class TableStructure:
    n_rows: int
    n_cols: int
    cells: tuple[TableCell, ...] = ()

    def problems(self) -> list[str]:
        out = []
        if self.n_rows < 1 or self.n_cols < 1:
            out.append(f"grid must be at least 1x1, got {self.n_rows}x{self.n_cols}")
            return out
        owner: dict[tuple[int, int], int] = {}
        for i, cell in enumerate(self.cells):
            if cell.row_span < 1 or cell.col_span < 1:
                out.append(f"cell {i} has a span below 1")
                continue
            if cell.start_row < 0 or cell.start_col < 0 or cell.end_row > self.n_rows or cell.end_col > self.n_cols:
                out.append(f"cell {i} extends outside the {self.n_rows}x{self.n_cols} grid")
                continue
            for pos in cell.positions():
                if pos in owner:
                    out.append(f"cells {owner[pos]} and {i} overlap at {pos}")
                else:
                    owner[pos] = i
        return out

    def cell_at(self, row: int, col: int) -> Optional[TableCell]:
        for cell in self.cells:
            if cell.start_row <= row < cell.end_row and cell.start_col <= col < cell.end_col:
                return cell
        return None


@dataclass(frozen=True)
class ProvenanceItem:
    page_no: int
    bbox: BoundingBox
    token_ids: tuple[int, ...] = ()


@dataclass(frozen=True)
class DocItem:
    label: DocItemLabel
    text: str
    prov: tuple[ProvenanceItem, ...]
    table: Optional[TableStructure] = None
    # Index (into Document.items) of the Picture/Table a caption belongs to.
    caption_of: Optional[int] = None
    # Set on entries that follow a References heading.
    reference: bool = False


@dataclass(frozen=True)
class DocumentMetadata:
    title: Optional[str] = None
    authors: tuple[str, ...] = ()
    language: Optional[str] = None


@dataclass(frozen=True)
class PageInfo:
    page_no: int
    width: float
    height: float


@dataclass(frozen=True)
class Document:
    name: str
    metadata: DocumentMetadata = field(default_factory=DocumentMetadata)
    pages: tuple[PageInfo, ...] = ()
    items: tuple[DocItem, ...] = ()


@dataclass(frozen=True)
class Violation:
    item_index: Optional[int]
    invariant: str
    detail: str

    def __str__(self) -> str:
        where = "document" if self.item_index is None else f"item {self.item_index}"
        return f"{where}: {self.invariant}: {self.detail}"


def validate_document(
    d: Document,
    page_tokens: Optional[Mapping[int, set[int] | frozenset[int]]] = None,
    languages: Optional[Sequence[str]] = None,
) -> list[Violation]:
    """Check the document invariants and return every violation found.

    Token references can only be checked when ``page_tokens`` (page number
    to the set of token ids on that page) is supplied. ``languages``
    restricts the accepted metadata language codes.
    """
    report: list[Violation] = []
    page_nos = [p.page_no for p in d.pages]
    if len(set(page_nos)) != len(page_nos):
        report.append(Violation(None, "unique-pages", "duplicate page numbers"))
    known_pages = set(page_nos)
    for p in d.pages:
        if not (p.width > 0 and p.height > 0):
            report.append(Violation(None, "page-size", f"page {p.page_no} has non-positive size"))

    lang = d.metadata.language
    if lang is not None and languages is not None and lang not in languages:
        report.append(Violation(None, "language", f"unsupported language code {lang!r}"))

    for i, item in enumerate(d.items):
        if not item.prov:
            report.append(Violation(i, "prov-non-empty", "item has no provenance"))
        for prov in item.prov:
            if prov.page_no not in known_pages:
                report.append(Violation(i, "prov-page-exists", f"page {prov.page_no} not in document"))
            elif page_tokens is not None:
                missing = [t for t in prov.token_ids if t not in page_tokens.get(prov.page_no, ())]
                if missing:
                    report.append(
                        Violation(i, "prov-tokens-exist", f"unknown token ids {missing} on page {prov.page_no}")
                    )
        is_table = item.label is DocItemLabel.TABLE
        if is_table and item.table is None:
            report.append(Violation(i, "table-iff-label", "table item lacks a table structure"))
        elif not is_table and item.table is not None:
            report.append(Violation(i, "table-iff-label", f"{item.label.value} item carries a table structure"))
        if item.table is not None:
            for problem in item.table.problems():
                report.append(Violation(i, "table-structure", problem))
        if item.caption_of is not None:
            if item.label is not DocItemLabel.CAPTION:
                report.append(Violation(i, "caption-link", "only captions may link to a figure or table"))
            elif not 0 <= item.caption_of < len(d.items):
                report.append(Violation(i, "caption-link", f"dangling reference {item.caption_of}"))
            elif d.items[item.caption_of].label not in (DocItemLabel.PICTURE, DocItemLabel.TABLE):
                report.append(Violation(i, "caption-link", "caption target is not a picture or table"))
    return report
