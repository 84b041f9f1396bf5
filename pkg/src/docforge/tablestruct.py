"""Table structure recognition from token geometry.

Tokens inside a table region are merged into cell fragments, fragment
intervals are clustered into column and row bands, and each fragment is
mapped onto the bands it covers; covering several bands produces a span.
Cell text is always rebuilt from the page tokens (:func:`match_back`),
never transcribed from pixels.
"""

from __future__ import annotations

import re
import statistics
from dataclasses import dataclass, replace
from typing import Optional, Sequence

from .layout import group_lines
from .model import BoundingBox, CellRole, TableCell, TableStructure, TextToken, bbox_overlap_frac

__all__ = [
    "TableConfig",
    "TableStructureError",
    "Fragment",
    "make_fragments",
    "cluster_intervals",
    "infer_table_structure",
    "grid_bands",
    "classify_cell_roles",
    "match_back",
    "empty_structure",
]

NUMERIC_RE = re.compile(r"^[\s+\-–−±(]*\d[\d\s.,%+\-–−±()/x×]*$")


class TableStructureError(ValueError):
    pass


@dataclass(frozen=True)
class TableConfig:
    line_overlap: float = 0.5
    fragment_gap_factor: float = 1.0  # x median char width
    col_gap_factor: float = 0.5  # x median fragment width
    col_gap_floor: float = 4.0  # points
    row_gap_factor: float = 0.4  # x median line height
    span_cover: float = 0.5
    row_header_ratio: float = 0.6
    match_threshold: float = 0.5


@dataclass(frozen=True)
class Fragment:
    tokens: tuple[TextToken, ...]
    bbox: BoundingBox

    @property
    def text(self) -> str:
        return " ".join(t.text for t in self.tokens)


def _char_width(tok: TextToken) -> float:
    n = len(tok.text.strip()) or 1
    return tok.bbox.width / n


def make_fragments(tokens: Sequence[TextToken], config: Optional[TableConfig] = None) -> list[Fragment]:
    """Merge same-line tokens separated by at most one median char width."""
    cfg = config or TableConfig()
    if not tokens:
        return []
    max_gap = cfg.fragment_gap_factor * statistics.median(_char_width(t) for t in tokens)
    frags = []
    for line in group_lines(tokens, cfg.line_overlap):
        current = [line[0]]
        for tok in line[1:]:
            if tok.bbox.left - current[-1].bbox.right > max_gap:
                frags.append(current)
                current = [tok]
            else:
                current.append(tok)
        frags.append(current)
    return [Fragment(tuple(f), BoundingBox.hull([t.bbox for t in f])) for f in frags]


# --- 1-D band clustering ----------------------------------------------------


def _sweep(intervals: Sequence[tuple[float, float]], members: Sequence[int], threshold: float) -> list[list[int]]:
    """Hull sweep in start order; cut where the gap to the hull exceeds threshold.

    Start order makes bands the connected components of "gap <= threshold",
    so band hulls never overlap even when intervals nest.
    """
    order = sorted(members, key=lambda i: (intervals[i][0], intervals[i][1], i))
    bands: list[list[int]] = []
    hull_hi = None
    for i in order:
        lo, hi = intervals[i]
        if hull_hi is None or lo - hull_hi > threshold:
            bands.append([i])
            hull_hi = hi
        else:
            bands[-1].append(i)
            hull_hi = max(hull_hi, hi)
    return bands


def _band_hull(intervals, band: Sequence[int]) -> tuple[float, float]:
    return (min(intervals[i][0] for i in band), max(intervals[i][1] for i in band))


def covers(interval: tuple[float, float], band: tuple[float, float], ratio: float = 0.5) -> bool:
    """True when ``interval`` overlaps ``band`` by ``ratio`` of the shorter length."""
    overlap = min(interval[1], band[1]) - max(interval[0], band[0])
    shorter = min(interval[1] - interval[0], band[1] - band[0])
    if shorter <= 0:
        mid = (interval[0] + interval[1]) / 2 if interval[1] == interval[0] else (band[0] + band[1]) / 2
        return band[0] <= mid <= band[1] and interval[0] <= mid <= interval[1]
    return overlap >= ratio * shorter


def cluster_intervals(
    intervals: Sequence[tuple[float, float]],
    threshold: float,
    cover: float = 0.5,
) -> tuple[list[tuple[float, float]], set[int]]:
    """Cluster 1-D intervals into bands, setting spanning intervals aside.

    An interval is spanning when, with it removed, its band falls apart into
    at least two bands it covers. The widest spanning interval is removed
    first and the search repeats until none is left. Returns the band hulls
    (ascending) and the indices of the spanning intervals.
    """
    active = set(range(len(intervals)))
    spanning: set[int] = set()
    while True:
        found = []
        for band in _sweep(intervals, sorted(active), threshold):
            if len(band) < 3:
                continue
            for i in band:
                rest = [j for j in band if j != i]
                parts = _sweep(intervals, rest, threshold)
                if len(parts) >= 2 and sum(covers(intervals[i], _band_hull(intervals, p), cover) for p in parts) >= 2:
                    found.append(i)
        if not found:
            break
        widest = min(found, key=lambda i: (-(intervals[i][1] - intervals[i][0]), intervals[i][0], i))
        active.discard(widest)
        spanning.add(widest)
    bands = [_band_hull(intervals, b) for b in _sweep(intervals, sorted(active), threshold)]
    return sorted(bands), spanning


def _covered_range(interval, bands, cover) -> tuple[int, int]:
    hit = [k for k, b in enumerate(bands) if covers(interval, b, cover)]
    if hit:
        return min(hit), max(hit)
    # Fallback: the band with the largest overlap, else the nearest one.
    mid = (interval[0] + interval[1]) / 2

    def key(k):
        b = bands[k]
        ov = min(interval[1], b[1]) - max(interval[0], b[0])
        return (-ov, abs((b[0] + b[1]) / 2 - mid), k)

    k = min(range(len(bands)), key=key)
    return k, k


# --- grid inference -------------------------------------------------------------


def column_threshold(frags: Sequence[Fragment], cfg: TableConfig) -> float:
    return max(cfg.col_gap_factor * statistics.median(f.bbox.width for f in frags), cfg.col_gap_floor)


def row_threshold(frags: Sequence[Fragment], cfg: TableConfig) -> float:
    return cfg.row_gap_factor * statistics.median(f.bbox.height for f in frags)


def _region_fragments(region: BoundingBox, tokens: Sequence[TextToken], cfg: TableConfig) -> list[Fragment]:
    inside = [t for t in tokens if bbox_overlap_frac(t.bbox, region) > 0] or list(tokens)
    if not inside:
        raise TableStructureError("table region holds no tokens")
    return make_fragments(inside, cfg)


def _bands(frags: Sequence[Fragment], cfg: TableConfig):
    x_iv = [(f.bbox.left, f.bbox.right) for f in frags]
    y_iv = [(f.bbox.top, f.bbox.bottom) for f in frags]
    cols, _ = cluster_intervals(x_iv, column_threshold(frags, cfg), cfg.span_cover)
    rows, _ = cluster_intervals(y_iv, row_threshold(frags, cfg), cfg.span_cover)
    return cols, rows


def grid_bands(
    region: BoundingBox,
    tokens: Sequence[TextToken],
    config: Optional[TableConfig] = None,
) -> tuple[list[tuple[float, float]], list[tuple[float, float]]]:
    """Column and row band extents that :func:`infer_table_structure` uses."""
    cfg = config or TableConfig()
    return _bands(_region_fragments(region, tokens, cfg), cfg)


def infer_table_structure(
    region: BoundingBox,
    tokens: Sequence[TextToken],
    config: Optional[TableConfig] = None,
) -> TableStructure:
    """Recover the row/column grid of a table from its tokens.

    Raises :class:`TableStructureError` when there are no tokens.
    """
    cfg = config or TableConfig()
    frags = _region_fragments(region, tokens, cfg)
    cols, rows = _bands(frags, cfg)
    x_iv = [(f.bbox.left, f.bbox.right) for f in frags]
    y_iv = [(f.bbox.top, f.bbox.bottom) for f in frags]

    # Extents are inclusive (r0, r1, c0, c1); overlapping extents merge.
    cells: list[tuple[list[int], list[Fragment]]] = []
    for frag, xi, yi in sorted(zip(frags, x_iv, y_iv), key=lambda z: (z[0].bbox.top, z[0].bbox.left)):
        r0, r1 = _covered_range(yi, rows, cfg.span_cover)
        c0, c1 = _covered_range(xi, cols, cfg.span_cover)
        ext = [r0, r1, c0, c1]
        members = [frag]
        merged = True
        while merged:
            merged = False
            for k, (other, ofr) in enumerate(cells):
                if ext[0] <= other[1] and other[0] <= ext[1] and ext[2] <= other[3] and other[2] <= ext[3]:
                    ext = [min(ext[0], other[0]), max(ext[1], other[1]), min(ext[2], other[2]), max(ext[3], other[3])]
                    members = ofr + members
                    del cells[k]
                    merged = True
                    break
        cells.append((ext, members))

    out = []
    for ext, members in sorted(cells, key=lambda c: (c[0][0], c[0][2])):
        members = sorted(members, key=lambda f: (f.bbox.top, f.bbox.left))
        toks = [t for f in members for t in f.tokens]
        out.append(
            TableCell(
                start_row=ext[0],
                start_col=ext[2],
                row_span=ext[1] - ext[0] + 1,
                col_span=ext[3] - ext[2] + 1,
                text=" ".join(f.text for f in members),
                source_token_ids=tuple(t.token_id for t in toks),
                bbox=BoundingBox.hull([f.bbox for f in members]),
            )
        )
    structure = TableStructure(len(rows), len(cols), tuple(out))
    return classify_cell_roles(structure, cfg)


def empty_structure() -> TableStructure:
    return TableStructure(1, 1, ())


def is_numeric(text: str) -> bool:
    return bool(NUMERIC_RE.match(text.strip()))


def classify_cell_roles(s: TableStructure, config: Optional[TableConfig] = None) -> TableStructure:
    """Assign column-header, row-header and body roles.

    Header rows run from the top while every row holds a cell spanning
    several columns; the row right under such a spanning row is its
    sub-header row (as long as one body row remains). Without any spanning
    row only row 0 is a header. Rows reached by a header cell's row span
    join the header. Below the header, the first column is a row header when
    at least ``row_header_ratio`` of body rows have a non-empty and
    non-numeric first cell.
    """
    cfg = config or TableConfig()
    if not s.cells:
        return s

    def row_has_col_span(r: int) -> bool:
        return any(c.col_span > 1 and c.start_row <= r < c.end_row for c in s.cells)

    k = -1
    while k + 1 < s.n_rows and row_has_col_span(k + 1):
        k += 1
    if k < 0:
        k = 0
    elif k + 1 <= s.n_rows - 2:
        k += 1
    changed = True
    while changed:
        changed = False
        for c in s.cells:
            if c.start_row <= k < c.end_row - 1:
                k = c.end_row - 1
                changed = True

    body_rows = range(k + 1, s.n_rows)
    first_col = {}
    for r in body_rows:
        cell = s.cell_at(r, 0)
        if cell is not None and cell.start_row > k:
            first_col[r] = cell
    row_headers = False
    if len(body_rows):
        # Counted per body row, so a row-spanning first cell counts for each row.
        texts = [first_col[r].text.strip() for r in body_rows if r in first_col]
        n_filled = sum(1 for t in texts if t)
        n_wordy = sum(1 for t in texts if t and not is_numeric(t))
        need = cfg.row_header_ratio * len(body_rows)
        row_headers = n_filled >= need and n_wordy >= need

    cells = []
    for c in s.cells:
        if c.start_row <= k:
            role = CellRole.COLUMN_HEADER
        elif row_headers and c.start_col == 0:
            role = CellRole.ROW_HEADER
        else:
            role = CellRole.BODY
        cells.append(replace(c, role=role))
    return replace(s, cells=tuple(cells))


def match_back(
    s: TableStructure,
    page_tokens: Sequence[TextToken],
    threshold: float = 0.5,
) -> TableStructure:
    """Fill cell text and source tokens from the page's own tokens.

    Each token goes to the cell region covering the largest fraction of it
    (at least ``threshold``; ties go to the earlier cell). Cell text is the
    space-joined token text in reading order. Tokens matching no cell are
    left out.
    """
    if not s.cells:
        return s
    assigned: list[list[TextToken]] = [[] for _ in s.cells]
    for tok in page_tokens:
        best, best_frac = -1, threshold
        for i, cell in enumerate(s.cells):
            if cell.bbox is None:
                continue
            frac = bbox_overlap_frac(tok.bbox, cell.bbox)
            if frac >= best_frac and (best < 0 or frac > best_frac):
                best, best_frac = i, frac
        if best >= 0:
            assigned[best].append(tok)
    cells = []
    for cell, toks in zip(s.cells, assigned):
        ordered = [t for line in group_lines(toks) for t in line]
        cells.append(
            replace(cell, text=" ".join(t.text for t in ordered), source_token_ids=tuple(t.token_id for t in ordered))
        )
    return replace(s, cells=tuple(cells))
