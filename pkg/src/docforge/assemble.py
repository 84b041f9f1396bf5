"""Assemble per-page predictions into a Document.

Covers block reading order (recursive XY-cut), caption linking, language
detection by stopword profiles and positional metadata extraction.
"""

from __future__ import annotations

import math
import re
from collections import Counter
from dataclasses import dataclass, replace
from functools import lru_cache
from importlib import resources
from typing import Optional, Sequence

from .model import (
    BoundingBox,
    DocItem,
    DocItemLabel,
    Document,
    DocumentMetadata,
    LayoutCluster,
    PageInfo,
    ParsedPage,
    ProvenanceItem,
    TableCell,
    TableStructure,
    validate_document,
)

COLUMN_GAP_RATIO = 0.03
CAPTION_REACH = 1.5 * 10
LANGUAGE_SAMPLE_CHARS = 5000
LANGUAGE_MIN_HITS = 10
LANGUAGE_DOMINANCE = 2.0
REFERENCES_RE = re.compile(r"^\s*(?:\d+\.?\s*)?(references|bibliography)\s*$", re.IGNORECASE)
ABSTRACT_RE = re.compile(r"^\s*abstract\b", re.IGNORECASE)


class AssemblyError(RuntimeError):
    """An internal invariant broke while assembling; indicates a bug."""


# --- reading order -------------------------------------------------------------


def _full_gaps(boxes: Sequence[BoundingBox], axis: int) -> list[tuple[float, float]]:
    """Whitespace gaps crossing the whole group along ``axis`` (0 = x, 1 = y)."""
    if axis == 0:
        spans = sorted((b.left, b.right) for b in boxes)
    else:
        spans = sorted((b.top, b.bottom) for b in boxes)
    gaps = []
    reach = spans[0][1]
    for lo, hi in spans[1:]:
        if lo > reach:
            gaps.append((reach, lo))
        reach = max(reach, hi)
    return gaps


def _xy_cut(items: list[tuple[int, BoundingBox]], min_col_gap: float) -> list[int]:
    if len(items) <= 1:
        return [cid for cid, _ in items]
    boxes = [b for _, b in items]
    best = None  # (width, axis preference, position, axis)
    for axis in (0, 1):
        for lo, hi in _full_gaps(boxes, axis):
            width = hi - lo
            if axis == 0 and width <= min_col_gap:
                continue
            key = (-width, axis, lo)
            if best is None or key < best[0]:
                best = (key, axis, lo)
    if best is None:
        ordered = sorted(items, key=lambda it: (it[1].top, it[1].left, it[0]))
        return [cid for cid, _ in ordered]
    _, axis, cut = best
    if axis == 0:
        first = [it for it in items if it[1].right <= cut]
        second = [it for it in items if it[1].right > cut]
    else:
        first = [it for it in items if it[1].bottom <= cut]
        second = [it for it in items if it[1].bottom > cut]
    return _xy_cut(first, min_col_gap) + _xy_cut(second, min_col_gap)


def infer_reading_order(clusters: Sequence[LayoutCluster], page_width: float, page_height: float) -> list[int]:
    """Order one page's clusters; returns cluster ids.

    Page headers come first and page footers last, each by position. The
    rest is cut recursively at the widest whitespace gap spanning the whole
    group: vertical gaps wider than 3% of the page width put left before
    right, horizontal gaps put top before bottom. Groups that cannot be cut
    are ordered by (top, left).
    """

    def positional(cs):
        return [c.cluster_id for c in sorted(cs, key=lambda c: (c.bbox.top, c.bbox.left, c.cluster_id))]

    headers = [c for c in clusters if c.label is DocItemLabel.PAGE_HEADER]
    footers = [c for c in clusters if c.label is DocItemLabel.PAGE_FOOTER]
    body = [(c.cluster_id, c.bbox) for c in clusters if c.label not in (DocItemLabel.PAGE_HEADER, DocItemLabel.PAGE_FOOTER)]
    return positional(headers) + _xy_cut(body, COLUMN_GAP_RATIO * page_width) + positional(footers)


# --- captions -----------------------------------------------------------------


def _edge_distance(a: BoundingBox, b: BoundingBox) -> float:
    dx = max(0.0, a.left - b.right, b.left - a.right)
    dy = max(0.0, a.top - b.bottom, b.top - a.bottom)
    return math.hypot(dx, dy)


@dataclass(frozen=True)
class CaptionLinks:
    links: dict[int, int]
    warnings: tuple[str, ...] = ()


def match_captions(items: Sequence[DocItem]) -> CaptionLinks:
    """Link captions on one page to the nearest picture or table.

    Candidates lie within 15 caption heights (edge distance). The nearest
    wins; at equal distance a target above the caption beats one below.
    Each target takes at most one caption. Keys and values are positions in
    ``items``.
    """
    targets = [i for i, it in enumerate(items) if it.label in (DocItemLabel.PICTURE, DocItemLabel.TABLE)]
    taken: set[int] = set()
    links: dict[int, int] = {}
    warnings = []
    for i, item in enumerate(items):
        if item.label is not DocItemLabel.CAPTION:
            continue
        cap = item.prov[0].bbox
        reach = CAPTION_REACH * cap.height
        best, best_key = None, None
        for t in targets:
            if t in taken:
                continue
            box = items[t].prov[0].bbox
            dist = _edge_distance(cap, box)
            if dist > reach:
                continue
            below = 0 if box.center[1] <= cap.center[1] else 1
            key = (dist, below, t)
            if best_key is None or key < best_key:
                best, best_key = t, key
        if best is None:
            page = item.prov[0].page_no
            warnings.append(f"page {page}: caption {item.text[:40]!r} has no picture or table nearby")
        else:
            links[i] = best
            taken.add(best)
    return CaptionLinks(links, tuple(warnings))


# --- language -----------------------------------------------------------------


@lru_cache(maxsize=None)
def stopword_lists() -> dict[str, frozenset[str]]:
    """Load the bundled stopword lists (one ``<code>.txt`` file per language)."""
    root = resources.files("docforge") / "data" / "stopwords"
    out = {}
    for entry in sorted(root.iterdir(), key=lambda e: e.name):
        if entry.name.endswith(".txt"):
            words = entry.read_text(encoding="utf-8").split()
            out[entry.name[:-4]] = frozenset(w.lower() for w in words)
    return out


def supported_languages() -> list[str]:
    return sorted(stopword_lists())


WORD_RE = re.compile(r"[^\W\d_]+(?:['’][^\W\d_]+)?")


def detect_language(text: str) -> Optional[str]:
    """Return the ISO-639-1 code whose stopwords dominate ``text``.

    The winner needs at least 10 hits and twice the runner-up's count.
    """
    lists = stopword_lists()
    hits = Counter()
    for word in WORD_RE.findall(text.lower()):
        for lang, words in lists.items():
            if word in words:
                hits[lang] += 1
    if not hits:
        return None
    ranked = sorted(hits.items(), key=lambda kv: (-kv[1], kv[0]))
    lang, top = ranked[0]
    runner_up = ranked[1][1] if len(ranked) > 1 else 0
    if top >= LANGUAGE_MIN_HITS and top >= LANGUAGE_DOMINANCE * runner_up:
        return lang
    return None


def language_sample(items: Sequence[DocItem]) -> str:
    text = "\n".join(it.text for it in items if it.label in (DocItemLabel.TEXT, DocItemLabel.LIST_ITEM))
    return text[:LANGUAGE_SAMPLE_CHARS]


# --- metadata ------------------------------------------------------------------

_NAME_TOKEN = re.compile(r"^(?:[A-Z]\.|[A-Z][\w'’\-]*[a-z][\w'’\-]*|[A-Z]\.-?[A-Z]\.)$")
_NAME_SPLIT = re.compile(r",|;|&|\band\b")
_MARKS = re.compile(r"[\d*†‡§¶∗⋆,]+$")


def split_author_line(text: str) -> list[str]:
    """Names found in one author line.

    The line is split on commas, semicolons, '&' and 'and'; a part is a name
    when it has 2 to 4 capitalised tokens. Unless every part is a name the
    line yields nothing, so affiliations and addresses are never swallowed.
    """
    parts = [p.strip() for p in _NAME_SPLIT.split(text) if p.strip()]
    names = []
    for part in parts:
        tokens = [_MARKS.sub("", tok) for tok in part.split()]
        tokens = [t for t in tokens if t]
        if 2 <= len(tokens) <= 4 and all(_NAME_TOKEN.match(t) for t in tokens):
            names.append(" ".join(tokens))
    if not parts or len(names) < len(parts):
        return []
    return names


def author_item_positions(items: Sequence[DocItem]) -> list[int]:
    """Positions of the page-1 text items between the title and the first
    section header (or abstract) that carry author names."""
    title = next(
        (i for i, it in enumerate(items) if it.label is DocItemLabel.TITLE and it.prov[0].page_no == 1), None
    )
    if title is None:
        return []
    out = []
    for i in range(title + 1, len(items)):
        it = items[i]
        if it.prov[0].page_no != 1 or it.label is DocItemLabel.SECTION_HEADER:
            break
        if it.label in (DocItemLabel.PAGE_HEADER, DocItemLabel.PAGE_FOOTER):
            continue
        if ABSTRACT_RE.match(it.text):
            break
        if it.label is DocItemLabel.TEXT and split_author_line(it.text):
            out.append(i)
    return out


def extract_metadata(items: Sequence[DocItem]) -> DocumentMetadata:
    title = next(
        (it.text for it in items if it.label is DocItemLabel.TITLE and it.prov[0].page_no == 1), None
    )
    authors: list[str] = []
    for i in author_item_positions(items):
        for name in split_author_line(items[i].text):
            if name not in authors:
                authors.append(name)
    return DocumentMetadata(title=title, authors=tuple(authors))


def tag_references(items: Sequence[DocItem]) -> list[DocItem]:
    out = []
    in_refs = False
    for it in items:
        if it.label is DocItemLabel.SECTION_HEADER:
            in_refs = bool(REFERENCES_RE.match(it.text))
        elif in_refs and it.label in (DocItemLabel.TEXT, DocItemLabel.LIST_ITEM):
            it = replace(it, reference=True)
        out.append(it)
    return out


# --- document assembly -----------------------------------------------------------


def fallback_table(cluster: LayoutCluster, page: ParsedPage) -> TableStructure:
    """Single-cell structure holding the whole table text, used when no
    structure prediction exists for a table cluster."""
    toks = [page.token_map[t] for t in cluster.token_ids]
    if not toks:
        return TableStructure(1, 1, ())
    cell = TableCell(
        0, 0, text=" ".join(t.text for t in toks), source_token_ids=cluster.token_ids, bbox=cluster.bbox
    )
    return TableStructure(1, 1, (cell,))


def assemble_document(
    name: str,
    pages: Sequence,
    warnings: Optional[list[str]] = None,
) -> Document:
    """Build the Document from processed pages.

    ``pages`` holds objects with ``parsed`` (a ParsedPage) and ``predictions``
    (layout clusters and table structures), in any order. Warnings are
    appended to ``warnings`` when given.
    """
    warnings = warnings if warnings is not None else []
    states = sorted(pages, key=lambda s: s.parsed.page_no)
    infos = tuple(PageInfo(s.parsed.page_no, s.parsed.width, s.parsed.height) for s in states)
    items: list[DocItem] = []
    for state in states:
        page = state.parsed
        clusters = state.predictions.layout
        if clusters is None:
            continue
        tables = {tp.cluster_id: tp.structure for tp in (state.predictions.tables or ())}
        by_id = {c.cluster_id: c for c in clusters}
        page_items: list[DocItem] = []
        for cid in infer_reading_order(clusters, page.width, page.height):
            c = by_id[cid]
            prov = (ProvenanceItem(page.page_no, c.bbox, c.token_ids),)
            text = " ".join(page.token_map[t].text for t in c.token_ids)
            if c.label is DocItemLabel.PICTURE:
                page_items.append(DocItem(c.label, "", prov))
            elif c.label is DocItemLabel.TABLE:
                table = tables.get(cid)
                if table is None:
                    table = fallback_table(c, page)
                page_items.append(DocItem(c.label, text, prov, table=table))
            elif c.token_ids:
                page_items.append(DocItem(c.label, text, prov))
        result = match_captions(page_items)
        warnings.extend(result.warnings)
        base = len(items)
        for pos, item in enumerate(page_items):
            if pos in result.links:
                item = replace(item, caption_of=base + result.links[pos])
            items.append(item)

    items = tag_references(items)
    meta = extract_metadata(items)
    meta = replace(meta, language=detect_language(language_sample(items)))
    doc = Document(name=name, metadata=meta, pages=infos, items=tuple(items))
    page_tokens = {s.parsed.page_no: set(s.parsed.token_map) for s in states}
    report = validate_document(doc, page_tokens, supported_languages())
    if report:
        raise AssemblyError("; ".join(str(v) for v in report))
    return doc
