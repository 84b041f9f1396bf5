"""JSON and Markdown serialization of documents.

The JSON form is canonical: fixed key order, compact separators, UTF-8
text, so equal documents always produce identical bytes.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from typing import Any, Optional

from .assemble import author_item_positions, supported_languages
from .model import (
    BoundingBox,
    CellRole,
    DocItem,
    DocItemLabel,
    Document,
    DocumentMetadata,
    PageInfo,
    ProvenanceItem,
    TableCell,
    TableStructure,
    validate_document,
)

SCHEMA_TAG = "docforge-doc"
SCHEMA_VERSION = 1


class DocumentSchemaError(ValueError):
    def __init__(self, message: str, offset: Optional[int] = None, path: str = ""):
        where = []
        if offset is not None:
            where.append(f"offset {offset}")
        if path:
            where.append(path)
        super().__init__(message + (f" (at {', '.join(where)})" if where else ""))
        self.offset = offset
        self.path = path


# --- JSON -----------------------------------------------------------------------


def _bbox(b: Optional[BoundingBox]) -> Optional[list[float]]:
    return None if b is None else b.as_list()


def _cell_dict(c: TableCell) -> dict[str, Any]:
    return {
        "start_row": c.start_row,
        "start_col": c.start_col,
        "row_span": c.row_span,
        "col_span": c.col_span,
        "role": c.role.value,
        "text": c.text,
        "source_token_ids": list(c.source_token_ids),
        "bbox": _bbox(c.bbox),
    }


def _item_dict(it: DocItem) -> dict[str, Any]:
    table = None
    if it.table is not None:
        table = {
            "n_rows": it.table.n_rows,
            "n_cols": it.table.n_cols,
            "cells": [_cell_dict(c) for c in it.table.cells],
        }
    return {
        "label": it.label.value,
        "text": it.text,
        "prov": [
            {"page_no": p.page_no, "bbox": p.bbox.as_list(), "token_ids": list(p.token_ids)} for p in it.prov
        ],
        "table": table,
        "caption_of": it.caption_of,
        "reference": it.reference,
    }


def document_to_dict(d: Document) -> dict[str, Any]:
    return {
        "schema_tag": SCHEMA_TAG,
        "version": SCHEMA_VERSION,
        "name": d.name,
        "metadata": {
            "title": d.metadata.title,
            "authors": list(d.metadata.authors),
            "language": d.metadata.language,
        },
        "pages": [{"page_no": p.page_no, "width": p.width, "height": p.height} for p in d.pages],
        "items": [_item_dict(it) for it in d.items],
    }


def to_json(d: Document) -> str:
    report = validate_document(d, languages=supported_languages())
    if report:
        raise ValueError("invalid document: " + "; ".join(str(v) for v in report))
    return json.dumps(document_to_dict(d), ensure_ascii=False, separators=(",", ":"), allow_nan=False)


class _Reader:
    """Typed field access that reports the JSON path of a bad value."""

    def __init__(self, obj: Any, path: str):
        if not isinstance(obj, dict):
            raise DocumentSchemaError("expected an object", path=path)
        self.obj = obj
        self.path = path

    def get(self, key: str, kind, optional: bool = False):
        where = f"{self.path}.{key}" if self.path else key
        if key not in self.obj:
            raise DocumentSchemaError(f"missing field {key!r}", path=where)
        v = self.obj[key]
        if v is None and optional:
            return None
        if kind is float:
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                raise DocumentSchemaError("expected a number", path=where)
            return float(v)
        if kind is int and (isinstance(v, bool) or not isinstance(v, int)):
            raise DocumentSchemaError("expected an integer", path=where)
        if kind is not int and not isinstance(v, kind):
            raise DocumentSchemaError(f"expected {kind.__name__}", path=where)
        return v

    def child(self, key: str) -> _Reader:
        return _Reader(self.get(key, dict), f"{self.path}.{key}" if self.path else key)


def _read_bbox(raw: Any, path: str) -> BoundingBox:
    if not isinstance(raw, list) or len(raw) != 4 or any(
        isinstance(v, bool) or not isinstance(v, (int, float)) for v in raw
    ):
        raise DocumentSchemaError("bbox must be four numbers", path=path)
    try:
        return BoundingBox(*raw)
    except ValueError as exc:
        raise DocumentSchemaError(str(exc), path=path) from None


def _read_ints(raw: Any, path: str) -> tuple[int, ...]:
    if not isinstance(raw, list) or any(isinstance(v, bool) or not isinstance(v, int) for v in raw):
        raise DocumentSchemaError("expected a list of integers", path=path)
    return tuple(raw)


def _enum(kind, value: str, path: str):
    try:
        return kind(value)
    except ValueError:
        raise DocumentSchemaError(f"unknown value {value!r}", path=path) from None


def _read_cell(r: _Reader) -> TableCell:
    bbox_raw = r.get("bbox", list, optional=True)
    return TableCell(
        start_row=r.get("start_row", int),
        start_col=r.get("start_col", int),
        row_span=r.get("row_span", int),
        col_span=r.get("col_span", int),
        role=_enum(CellRole, r.get("role", str), r.path + ".role"),
        text=r.get("text", str),
        source_token_ids=_read_ints(r.get("source_token_ids", list), r.path + ".source_token_ids"),
        bbox=None if bbox_raw is None else _read_bbox(bbox_raw, r.path + ".bbox"),
    )


def _read_item(r: _Reader) -> DocItem:
    prov = []
    for j, raw in enumerate(r.get("prov", list)):
        pr = _Reader(raw, f"{r.path}.prov[{j}]")
        prov.append(
            ProvenanceItem(
                pr.get("page_no", int),
                _read_bbox(pr.get("bbox", list), pr.path + ".bbox"),
                _read_ints(pr.get("token_ids", list), pr.path + ".token_ids"),
            )
        )
    table = None
    if r.get("table", dict, optional=True) is not None:
        tr = r.child("table")
        cells = tuple(_read_cell(_Reader(c, f"{tr.path}.cells[{k}]")) for k, c in enumerate(tr.get("cells", list)))
        table = TableStructure(tr.get("n_rows", int), tr.get("n_cols", int), cells)
    return DocItem(
        label=_enum(DocItemLabel, r.get("label", str), r.path + ".label"),
        text=r.get("text", str),
        prov=tuple(prov),
        table=table,
        caption_of=r.get("caption_of", int, optional=True),
        reference=r.get("reference", bool),
    )


def from_json(text: str | bytes) -> Document:
    if isinstance(text, bytes):
        text = text.decode("utf-8")
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DocumentSchemaError(f"invalid JSON: {exc.msg}", offset=exc.pos) from None
    root = _Reader(obj, "")
    if obj.get("schema_tag") != SCHEMA_TAG:
        raise DocumentSchemaError("unrecognized document schema")
    version = root.get("version", int)
    if version != SCHEMA_VERSION:
        raise DocumentSchemaError(f"unsupported document schema version {version}")
    meta = root.child("metadata")
    authors = meta.get("authors", list)
    if any(not isinstance(a, str) for a in authors):
        raise DocumentSchemaError("authors must be strings", path="metadata.authors")
    pages = []
    for i, raw in enumerate(root.get("pages", list)):
        pr = _Reader(raw, f"pages[{i}]")
        pages.append(PageInfo(pr.get("page_no", int), pr.get("width", float), pr.get("height", float)))
    items = tuple(_read_item(_Reader(raw, f"items[{i}]")) for i, raw in enumerate(root.get("items", list)))
    doc = Document(
        name=root.get("name", str),
        metadata=DocumentMetadata(
            title=meta.get("title", str, optional=True),
            authors=tuple(authors),
            language=meta.get("language", str, optional=True),
        ),
        pages=tuple(pages),
        items=items,
    )
    report = validate_document(doc, languages=supported_languages())
    if report:
        first = report[0]
        path = f"items[{first.item_index}]" if first.item_index is not None else ""
        raise DocumentSchemaError(f"document fails validation: {first.invariant}: {first.detail}", path=path)
    return doc


# --- Markdown ---------------------------------------------------------------------


@dataclass(frozen=True)
class MarkdownPolicy:
    suppress_labels: frozenset[DocItemLabel] = field(
        default_factory=lambda: frozenset({DocItemLabel.PAGE_HEADER, DocItemLabel.PAGE_FOOTER})
    )
    title_prefix: str = "##"
    section_prefix: str = "###"
    bullet: str = "- "
    picture_placeholder: str = "<!-- image -->"

    def __post_init__(self) -> None:
        for prefix in (self.title_prefix, self.section_prefix):
            if not re.fullmatch(r"#{1,6}", prefix):
                raise ValueError(f"invalid heading prefix {prefix!r}")


_LEADING_BULLET = re.compile(r"^[•◦▪‣∙·\-–*]\s+")


def _escape_cell(text: str) -> str:
    return text.replace("\\", "\\\\").replace("|", "\\|").replace("\n", " ")


def expand_table(t: TableStructure) -> list[list[str]]:
    """Materialize the n_rows x n_cols text grid, repeating spanned text."""
    grid = [["" for _ in range(t.n_cols)] for _ in range(t.n_rows)]
    for cell in t.cells:
        for r, c in cell.positions():
            grid[r][c] = cell.text
    return grid


def table_to_markdown(t: TableStructure) -> str:
    """Pipe table where spanning cells repeat in every covered position.

    Leading rows made only of column-header cells sit above the separator;
    with no such row the separator follows the first row.
    """
    grid = expand_table(t)
    header_rows = 0
    for r in range(t.n_rows):
        covering = [t.cell_at(r, c) for c in range(t.n_cols)]
        present = [c for c in covering if c is not None]
        if present and all(c.role is CellRole.COLUMN_HEADER for c in present):
            header_rows += 1
        else:
            break
    header_rows = max(header_rows, 1)
    lines = []
    for r, row in enumerate(grid):
        lines.append("| " + " | ".join(_escape_cell(x) for x in row) + " |")
        if r == header_rows - 1:
            lines.append("|" + "---|" * t.n_cols)
    return "\n".join(lines)


def to_markdown(d: Document, policy: Optional[MarkdownPolicy] = None) -> str:
    p = policy or MarkdownPolicy()
    skip = set(author_item_positions(d.items)) if d.metadata.authors else set()
    picture_caption: dict[int, int] = {}
    for i, it in enumerate(d.items):
        if it.caption_of is not None and d.items[it.caption_of].label is DocItemLabel.PICTURE:
            picture_caption[it.caption_of] = i
            skip.add(i)

    blocks: list[str] = []
    prev_list = False
    for i, it in enumerate(d.items):
        if i in skip or it.label in p.suppress_labels:
            continue
        label = it.label
        if label is DocItemLabel.TITLE:
            block = f"{p.title_prefix} {it.text}"
            if d.metadata.authors:
                block += "\n" + ", ".join(d.metadata.authors)
        elif label is DocItemLabel.SECTION_HEADER:
            block = f"{p.section_prefix} {it.text}"
        elif label is DocItemLabel.LIST_ITEM:
            block = p.bullet + _LEADING_BULLET.sub("", it.text)
            if prev_list:
                blocks[-1] += "\n" + block
                continue
        elif label is DocItemLabel.PICTURE:
            block = p.picture_placeholder
            if i in picture_caption:
                block += "\n" + d.items[picture_caption[i]].text
        elif label is DocItemLabel.TABLE:
            block = table_to_markdown(it.table) if it.table is not None else it.text
        elif label in (DocItemLabel.FORMULA, DocItemLabel.CODE):
            block = f"```\n{it.text}\n```"
        else:
            block = it.text
        prev_list = label is DocItemLabel.LIST_ITEM
        blocks.append(block)
    return "\n\n".join(blocks) + ("\n" if blocks else "")
