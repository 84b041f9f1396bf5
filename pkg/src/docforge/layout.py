"""Layout analysis: region proposals, overlap suppression, token assignment.

The detector here is geometric. It groups tokens into lines and blocks and
labels blocks with positional and typographic rules; any detector producing
:class:`LayoutProposal` objects can replace it without touching the
post-processing (suppression and token assignment).
"""

from __future__ import annotations

import re
import statistics
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

from .model import (
    BoundingBox,
    DocItemLabel,
    LayoutCluster,
    LayoutProposal,
    ParsedPage,
    TextToken,
    bbox_area,
    bbox_iou,
    bbox_overlap_frac,
)

__all__ = [
    "LayoutConfig",
    "LayoutProposal",
    "LayoutCluster",
    "detect_layout",
    "suppress_overlaps",
    "assign_tokens",
    "group_lines",
]

BULLET_RE = re.compile(r"^(?:[•◦▪‣∙·\-–*]|\(?\d{1,3}[.)]|\(?[a-z][.)]|\([ivx]+\))$")
CAPTION_RE = re.compile(r"^(?:fig\.?|figure|table)\s*\d+[.:]", re.IGNORECASE)


@dataclass(frozen=True)
class LayoutConfig:
    line_overlap: float = 0.5
    # Tokens on one line further apart than this many line heights are
    # separate segments (column gutters, table gaps).
    segment_gap_factor: float = 1.0
    block_gap_factor: float = 1.5
    block_min_h_overlap: float = 0.3
    header_band: float = 0.075
    footer_band: float = 0.925
    section_font_ratio: float = 1.15
    section_max_lines: int = 2
    table_min_gaps: int = 2
    table_min_lines: int = 2
    iou_threshold: float = 0.5
    containment_threshold: float = 0.9
    assign_threshold: float = 0.5


# --- lines and blocks -------------------------------------------------------


def _v_overlap(a: BoundingBox, b: BoundingBox) -> float:
    return max(0.0, min(a.bottom, b.bottom) - max(a.top, b.top))


def _h_overlap(a: BoundingBox, b: BoundingBox) -> float:
    return max(0.0, min(a.right, b.right) - max(a.left, b.left))


def group_lines(tokens: Iterable[TextToken], min_overlap: float = 0.5) -> list[list[TextToken]]:
    """Group tokens into lines by vertical overlap.

    A token joins a line when its vertical overlap with the line is at least
    ``min_overlap`` of the shorter of the two heights. Lines are returned
    top to bottom, tokens inside a line left to right.
    """
    ordered = sorted(tokens, key=lambda t: (t.bbox.top, t.bbox.left, t.token_id))
    lines: list[list[TextToken]] = []
    boxes: list[BoundingBox] = []
    for tok in ordered:
        b = tok.bbox
        best, best_ov = -1, 0.0
        for i in range(len(lines) - 1, -1, -1):
            lb = boxes[i]
            if lb.bottom < b.top:
                continue
            ov = _v_overlap(b, lb)
            shorter = min(b.height, lb.height)
            ok = ov >= min_overlap * shorter if shorter > 0 else (lb.top <= b.center[1] <= lb.bottom)
            if ok and ov >= best_ov:
                best, best_ov = i, ov
        if best < 0:
            lines.append([tok])
            boxes.append(b)
        else:
            lines[best].append(tok)
            boxes[best] = boxes[best].union(b)
    order = sorted(range(len(lines)), key=lambda i: (boxes[i].top, boxes[i].left))
    return [sorted(lines[i], key=lambda t: (t.bbox.left, t.token_id)) for i in order]


@dataclass
class _Segment:
    tokens: list[TextToken]
    bbox: BoundingBox

    @property
    def font(self) -> float:
        return statistics.median(t.effective_font_size for t in self.tokens)

    @property
    def first_text(self) -> str:
        return self.tokens[0].text.strip()

    @property
    def text(self) -> str:
        return " ".join(t.text for t in self.tokens)


def _hull(tokens: Sequence[TextToken]) -> BoundingBox:
    return BoundingBox.hull([t.bbox for t in tokens])


def split_segments(line: list[TextToken], max_gap: float) -> list[_Segment]:
    segments: list[_Segment] = []
    current = [line[0]]
    for tok in line[1:]:
        if tok.bbox.left - current[-1].bbox.right > max_gap:
            segments.append(_Segment(current, _hull(current)))
            current = [tok]
        else:
            current.append(tok)
    segments.append(_Segment(current, _hull(current)))
    return segments


def _line_segments(tokens: Sequence[TextToken], cfg: LayoutConfig) -> list[list[_Segment]]:
    out = []
    for line in group_lines(tokens, cfg.line_overlap):
        height = _hull(line).height or max(t.effective_font_size for t in line)
        out.append(split_segments(line, cfg.segment_gap_factor * height))
    return out


def _starts_item(seg: _Segment) -> bool:
    return bool(BULLET_RE.match(seg.first_text)) or bool(CAPTION_RE.match(seg.text))


@dataclass
class _Block:
    segments: list[_Segment]
    bbox: BoundingBox

    @property
    def tokens(self) -> list[TextToken]:
        return [t for s in self.segments for t in s.tokens]

    @property
    def font(self) -> float:
        return statistics.median(t.effective_font_size for t in self.tokens)

    @property
    def text(self) -> str:
        return " ".join(s.text for s in self.segments)


def build_blocks(segments: list[_Segment], line_height: float, cfg: LayoutConfig) -> list[_Block]:
    """Stack segments into blocks.

    A segment continues a block when the vertical gap is at most
    ``block_gap_factor`` line heights, the horizontal overlap is at least
    ``block_min_h_overlap`` of the narrower width, the font sizes agree
    within ``section_font_ratio``, and the segment does not open a new list
    item or caption.
    """
    max_gap = cfg.block_gap_factor * line_height
    blocks: list[_Block] = []
    for seg in sorted(segments, key=lambda s: (s.bbox.top, s.bbox.left)):
        best: Optional[_Block] = None
        best_gap = 0.0
        if not _starts_item(seg):
            for blk in blocks:
                last = blk.segments[-1].bbox
                gap = seg.bbox.top - last.bottom
                if gap > max_gap or seg.bbox.top < last.top:
                    continue
                narrower = min(seg.bbox.width, blk.bbox.width)
                if _h_overlap(seg.bbox, blk.bbox) < cfg.block_min_h_overlap * narrower or narrower <= 0:
                    continue
                f1, f2 = seg.font, blk.segments[-1].font
                if max(f1, f2) > cfg.section_font_ratio * min(f1, f2):
                    continue
                if best is None or gap < best_gap:
                    best, best_gap = blk, gap
        if best is None:
            blocks.append(_Block([seg], seg.bbox))
        else:
            best.segments.append(seg)
            best.bbox = best.bbox.union(seg.bbox)
    return blocks


# --- table regions ------------------------------------------------------------


def _gaps(segments: list[_Segment]) -> list[tuple[float, float]]:
    return [(a.bbox.right, b.bbox.left) for a, b in zip(segments, segments[1:])]


def _intersect_channels(channels, gaps):
    out = []
    for c0, c1 in channels:
        for g0, g1 in gaps:
            lo, hi = max(c0, g0), min(c1, g1)
            if lo < hi:
                out.append((lo, hi))
    return out


def _projection_gaps(segments: list[_Segment]) -> list[tuple[float, float]]:
    spans = sorted((s.bbox.left, s.bbox.right) for s in segments)
    gaps = []
    cur_r = spans[0][1]
    for l, r in spans[1:]:
        if l > cur_r:
            gaps.append((cur_r, l))
            cur_r = r
        else:
            cur_r = max(cur_r, r)
    return gaps


def _find_table_runs(rows: list[list[_Segment]], line_height: float, cfg: LayoutConfig) -> list[tuple[int, int]]:
    """Return inclusive row-index ranges that form tables.

    A run is a sequence of vertically adjacent rows sharing at least
    ``table_min_gaps`` aligned whitespace channels over at least
    ``table_min_lines`` rows. Runs are then widened by adjacent rows (e.g.
    spanning header rows) that have a gap aligned with the run's gutters.
    """
    max_gap = cfg.block_gap_factor * line_height
    boxes = [BoundingBox.hull([s.bbox for s in row]) for row in rows]

    def adjacent(i: int, j: int) -> bool:
        return boxes[j].top - boxes[i].bottom <= max_gap

    runs: list[tuple[int, int]] = []
    i = 0
    while i < len(rows):
        gaps = _gaps(rows[i])
        if len(gaps) < cfg.table_min_gaps:
            i += 1
            continue
        channels = gaps
        j = i
        while j + 1 < len(rows) and adjacent(j, j + 1):
            nxt = _intersect_channels(channels, _gaps(rows[j + 1]))
            if len(nxt) < cfg.table_min_gaps:
                break
            channels = nxt
            j += 1
        if j - i + 1 >= cfg.table_min_lines:
            runs.append((i, j))
            i = j + 1
        else:
            i += 1

    widened = []
    for start, end in runs:
        segs = [s for r in range(start, end + 1) for s in rows[r]]
        gutters = _projection_gaps(segs)
        x0 = min(s.bbox.left for s in segs)
        x1 = max(s.bbox.right for s in segs)
        tol = line_height

        def fits(r: int) -> bool:
            row = rows[r]
            if row[0].bbox.left < x0 - tol or row[-1].bbox.right > x1 + tol:
                return False
            return bool(_intersect_channels(gutters, _gaps(row)))

        lo_bound = widened[-1][1] + 1 if widened else 0
        while start - 1 >= lo_bound and adjacent(start - 1, start) and fits(start - 1):
            start -= 1
        while end + 1 < len(rows) and adjacent(end, end + 1) and fits(end + 1) and not any(
            s == end + 1 for s, _ in runs
        ):
            end += 1
        widened.append((start, end))
    return widened


# --- detector -----------------------------------------------------------------


def detect_layout(page: ParsedPage, config: Optional[LayoutConfig] = None, image=None) -> list[LayoutProposal]:
    """Propose labelled regions for ``page`` from token geometry alone.

    ``image`` is accepted for interface parity with raster-based detectors
    and is not inspected.
    """
    cfg = config or LayoutConfig()
    if not page.tokens:
        return []
    rows = _line_segments(page.tokens, cfg)
    line_height = statistics.median(s.bbox.height for row in rows for s in row) or 1.0
    page_font = statistics.median(t.effective_font_size for t in page.tokens)

    proposals: list[LayoutProposal] = []
    in_table: set[int] = set()
    for start, end in _find_table_runs(rows, line_height, cfg):
        toks = [t for r in range(start, end + 1) for s in rows[r] for t in s.tokens]
        proposals.append(LayoutProposal(_hull(toks), DocItemLabel.TABLE, 1.0))
        in_table.update(range(start, end + 1))

    free = [s for r, row in enumerate(rows) if r not in in_table for s in row]
    blocks = build_blocks(free, line_height, cfg)

    title_block = None
    if page.page_no == 1:
        candidates = [
            b for b in blocks
            if b.bbox.bottom > cfg.header_band * page.height
            and b.bbox.top < cfg.footer_band * page.height
            and not CAPTION_RE.match(b.text)
        ]
        top_font = max((b.font for b in candidates), default=0.0)
        # Body-sized text only makes a title when nothing else is on the page.
        if candidates and (top_font > page_font or len(candidates) == 1):
            title_block = min(
                (b for b in candidates if b.font == top_font), key=lambda b: (b.bbox.top, b.bbox.left)
            )

    for blk in blocks:
        proposals.append(LayoutProposal(blk.bbox, _label_block(blk, blk is title_block, page, page_font, cfg), 1.0))
    return proposals


def _label_block(blk: _Block, is_title: bool, page: ParsedPage, page_font: float, cfg: LayoutConfig) -> DocItemLabel:
    if blk.bbox.bottom <= cfg.header_band * page.height:
        return DocItemLabel.PAGE_HEADER
    if blk.bbox.top >= cfg.footer_band * page.height:
        return DocItemLabel.PAGE_FOOTER
    if is_title:
        return DocItemLabel.TITLE
    if CAPTION_RE.match(blk.text):
        return DocItemLabel.CAPTION
    if blk.font >= cfg.section_font_ratio * page_font and len(blk.segments) <= cfg.section_max_lines:
        return DocItemLabel.SECTION_HEADER
    if BULLET_RE.match(blk.segments[0].first_text):
        return DocItemLabel.LIST_ITEM
    return DocItemLabel.TEXT


# --- post-processing ----------------------------------------------------------


def _priority(p: LayoutProposal):
    return (-p.confidence, -bbox_area(p.bbox), p.bbox.top, p.bbox.left)


def suppress_overlaps(
    props: Sequence[LayoutProposal],
    iou_threshold: float = 0.5,
    containment_threshold: float = 0.9,
) -> list[LayoutProposal]:
    """Greedy overlap suppression by confidence, then size.

    Proposals are visited by (confidence desc, area desc, top, left). One is
    kept when its IoU with every kept proposal is below ``iou_threshold``
    and it is not ``containment_threshold``-contained in a kept proposal of
    another label. Kept proposals are returned in input order.
    """
    order = sorted(range(len(props)), key=lambda i: _priority(props[i]))
    kept: list[int] = []
    for i in order:
        p = props[i]
        ok = True
        for k in kept:
            q = props[k]
            if bbox_iou(p.bbox, q.bbox) >= iou_threshold:
                ok = False
                break
            if q.label != p.label and bbox_overlap_frac(p.bbox, q.bbox) >= containment_threshold:
                ok = False
                break
        if ok:
            kept.append(i)
    return [props[i] for i in sorted(kept)]


def _reading_sorted(tokens: Sequence[TextToken]) -> list[TextToken]:
    return [t for line in group_lines(tokens) for t in line]


def assign_tokens(
    props: Sequence[LayoutProposal],
    tokens: Sequence[TextToken],
    threshold: float = 0.5,
    config: Optional[LayoutConfig] = None,
) -> list[LayoutCluster]:
    """Attach every token to exactly one cluster.

    A token goes to the proposal covering the largest fraction of it, if
    that fraction reaches ``threshold``; ties prefer the smaller proposal,
    then the lower cluster id (the proposal's index). Remaining tokens are
    grouped into synthetic Text clusters numbered after the proposals.
    """
    cfg = config or LayoutConfig()
    members: list[list[TextToken]] = [[] for _ in props]
    leftover: list[TextToken] = []
    areas = [bbox_area(p.bbox) for p in props]
    for tok in tokens:
        best, best_key = -1, None
        tb = tok.bbox
        for cid, prop in enumerate(props):
            pb = prop.bbox
            if tb.right < pb.left or tb.left > pb.right or tb.bottom < pb.top or tb.top > pb.bottom:
                continue  # disjoint: overlap fraction is 0
            frac = bbox_overlap_frac(tok.bbox, prop.bbox)
            if frac < threshold:
                continue
            key = (-frac, areas[cid], cid)
            if best_key is None or key < best_key:
                best, best_key = cid, key
        if best < 0:
            leftover.append(tok)
        else:
            members[best].append(tok)

    clusters = [
        LayoutCluster(cid, prop, tuple(t.token_id for t in _reading_sorted(members[cid])))
        for cid, prop in enumerate(props)
    ]
    if leftover:
        rows = _line_segments(leftover, cfg)
        line_height = statistics.median(s.bbox.height for row in rows for s in row) or 1.0
        blocks = build_blocks([s for row in rows for s in row], line_height, cfg)
        blocks.sort(key=lambda b: (b.bbox.top, b.bbox.left))
        for blk in blocks:
            toks = _reading_sorted(blk.tokens)
            proposal = LayoutProposal(_hull(toks), DocItemLabel.TEXT, 1.0)
            clusters.append(LayoutCluster(len(clusters), proposal, tuple(t.token_id for t in toks)))
    return clusters
