"""Deterministic synthetic documents in the interchange format.

Pages imitate scientific papers: running headers and footers, a title block,
two text columns, full-width tables with captions and figures with
captions. Glyph metrics are simple: each character is half the font size
wide and tokens are one font size tall.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

from .backend import FILE_SUFFIX, ParsedDocument, encode_interchange
from .model import BoundingBox, DocItemLabel, LayoutProposal, ParsedPage, TextToken

PAGE_W, PAGE_H = 612.0, 792.0
MARGIN = 54.0
GUTTER = 24.0
COL_W = (PAGE_W - 2 * MARGIN - GUTTER) / 2
LEFT = (MARGIN, MARGIN + COL_W)
RIGHT = (MARGIN + COL_W + GUTTER, PAGE_W - MARGIN)
FULL = (MARGIN, PAGE_W - MARGIN)
BODY_FONT = 10.0
LINE_PITCH = 12.0
BLOCK_GAP = 17.0
BODY_TOP = 80.0
BODY_BOTTOM = 720.0

STOP = (
    "the of and to is that it was for on are as with they at be this from have or by "
    "not but which their all were when we there can would into has more than been its "
    "also these such other most only between both each through"
).split()
CONTENT = (
    "layout document model table page figure dataset analysis structure detection "
    "annotation region token column cell text reading order baseline result method "
    "training evaluation benchmark accuracy precision recall quality performance class "
    "label header footer caption paragraph section title list formula picture network "
    "feature prediction inference parser conversion pipeline backend coordinate boundary "
    "geometry heuristic threshold variance sample corpus experiment metric average"
).split()


def char_width(font: float) -> float:
    return 0.5 * font


def word_width(word: str, font: float) -> float:
    return len(word) * char_width(font)


class TextGen:
    """English-like filler text with a realistic share of stopwords."""

    def __init__(self, rng: random.Random):
        self.rng = rng

    def words(self, n: int) -> list[str]:
        out = []
        for i in range(n):
            pool = STOP if i % 2 == 0 else CONTENT
            out.append(self.rng.choice(pool))
        out[0] = out[0].capitalize()
        out[-1] = out[-1] + "."
        return out

    def phrase(self, n: int) -> list[str]:
        return [w.capitalize() if i == 0 else w for i, w in enumerate(self.rng.sample(CONTENT, n))]


@dataclass
class PageBuilder:
    page_no: int
    width: float = PAGE_W
    height: float = PAGE_H
    tokens: list[TextToken] = field(default_factory=list)
    proposals: list[LayoutProposal] = field(default_factory=list)

    def word(self, text: str, x: float, y: float, font: float) -> TextToken:
        tok = TextToken(len(self.tokens), text, BoundingBox(x, y, x + word_width(text, font), y + font), font)
        self.tokens.append(tok)
        return tok

    def line(self, words: Sequence[str], x: float, y: float, font: float) -> float:
        for w in words:
            self.word(w, x, y, font)
            x += word_width(w, font) + 0.25 * font
        return x

    def centered(self, words: Sequence[str], y: float, font: float) -> None:
        width = sum(word_width(w, font) for w in words) + 0.25 * font * (len(words) - 1)
        self.line(words, (self.width - width) / 2, y, font)

    def paragraph(
        self, words: Sequence[str], x0: float, x1: float, y: float, font: float = BODY_FONT,
        pitch: float = LINE_PITCH, indent: float = 0.0, first_indent: float = 0.0,
    ) -> float:
        """Wrap ``words`` into [x0, x1]; returns the bottom of the last line."""
        x = x0 + first_indent
        space = 0.25 * font
        for w in words:
            ww = word_width(w, font)
            if x > x0 + indent + first_indent and x + ww > x1:
                y += pitch
                x = x0 + indent
            self.word(w, x, y, font)
            x += ww + space
        return y + font

    def table(
        self, rows: Sequence[Sequence[Optional[str]]], col_x: Sequence[float], y: float,
        font: float = 9.0, pitch: float = 14.0,
    ) -> float:
        """Lay out a table row by row; a spanning cell starts at its first
        column and runs across the others. Returns the bottom edge."""
        for r, row in enumerate(rows):
            for c, text in enumerate(row):
                if text:
                    self.line(text.split(), col_x[c], y + r * pitch, font)
        return y + (len(rows) - 1) * pitch + font

    def picture(self, box: BoundingBox, labels: Sequence[str] = ()) -> None:
        self.proposals.append(LayoutProposal(box, DocItemLabel.PICTURE, 1.0))
        for i, lab in enumerate(labels):
            self.word(lab, box.left + 10 + 40 * i, box.bottom - 16, 7.0)

    def header(self, text: str) -> None:
        self.line(text.split(), MARGIN, 28.0, 8.0)

    def footer(self, text: str) -> None:
        self.centered(text.split(), 752.0, 8.0)

    def build(self) -> ParsedPage:
        return ParsedPage(self.page_no, self.width, self.height, tuple(self.tokens), None, tuple(self.proposals))


# --- column filling -----------------------------------------------------------------


def fill_column(pb: PageBuilder, gen: TextGen, x: tuple[float, float], y0: float, y1: float) -> list[str]:
    """Fill one column with headings, paragraphs and list items between
    y0 and y1. Returns the block kinds placed, for test bookkeeping."""
    rng = gen.rng
    y = y0
    kinds = []
    while True:
        kind = rng.choices(["para", "heading", "list"], weights=[6, 1, 1])[0]
        if kind == "heading":
            if y + 12 + 6 + 2 * LINE_PITCH > y1:
                break
            pb.line([f"{rng.randint(1, 9)}."] + gen.phrase(rng.randint(1, 3)), x[0], y, 12.0)
            y += 12 + 6
            kinds.append(kind)
            continue
        if kind == "list":
            n = rng.randint(2, 3)
            if y + n * (2 * LINE_PITCH + 4) > y1:
                break
            for _ in range(n):
                pb.word("•", x[0] + 4, y, BODY_FONT)
                bottom = pb.paragraph(gen.words(rng.randint(5, 12)), x[0] + 14, x[1], y)
                y = bottom + 4
            y += BLOCK_GAP - 4
            kinds.append(kind)
            continue
        n_lines = rng.randint(2, 6)
        if y + n_lines * LINE_PITCH > y1:
            n_lines = int((y1 - y) // LINE_PITCH)
            if n_lines < 2:
                break
        words = gen.words(n_lines * 7)
        bottom = paragraph_lines(pb, words, x, y, n_lines)
        y = bottom + BLOCK_GAP
        kinds.append("para")
    return kinds


def paragraph_lines(pb: PageBuilder, words: list[str], x: tuple[float, float], y: float, n_lines: int) -> float:
    # Wrap, but never beyond n_lines.
    x0, x1 = x
    cx, line = x0, 0
    space = 0.25 * BODY_FONT
    for w in words:
        ww = word_width(w, BODY_FONT)
        if cx > x0 and cx + ww > x1:
            line += 1
            if line >= n_lines:
                break
            cx = x0
        pb.word(w, cx, y + line * LINE_PITCH, BODY_FONT)
        cx += ww + space
    return y + line * LINE_PITCH + BODY_FONT


# --- tables ----------------------------------------------------------------------------------


def random_table(rng: random.Random, n_rows: int, n_cols: int, spanning: bool = False):
    """Rows of cell strings; with ``spanning`` the first row holds a header
    centered over columns 1..n_cols-1."""
    labels = ["Caption", "Footnote", "Formula", "List-item", "Page-footer", "Picture", "Table", "Title", "Text"]
    header = ["class label"] + [rng.choice(["Count", "Train", "Test", "Val", "All", "Fin", "Man"]) for _ in range(n_cols - 1)]
    rows = []
    spans = {}
    if spanning:
        rows.append(["class label", "triple inter-annotator mAP@0.5-0.95 (%)"] + [None] * (n_cols - 2))
        spans[(0, 1)] = n_cols - 1
        header = [None] + header[1:]
    rows.append(header)
    for _ in range(n_rows):
        row = [rng.choice(labels)]
        for _ in range(n_cols - 1):
            a = rng.randint(10, 95)
            row.append(rng.choice([f"{a}", f"{a}.{rng.randint(0, 9)}", f"{a}-{min(99, a + rng.randint(1, 9))}"]))
        rows.append(row)
    return rows, spans


def table_columns(n_cols: int, x0: float = MARGIN, x1: float = PAGE_W - MARGIN) -> list[float]:
    step = (x1 - x0) / n_cols
    return [x0 + i * step for i in range(n_cols)]


def spanning_columns(n_cols: int, x0: float = MARGIN, header_width: float = 175.5, cell_width: float = 22.5) -> list[float]:
    """A wide label column followed by data columns packed so that the
    spanning header's extent runs from the first data column to the end
    of the last one."""
    n_data = n_cols - 1
    step = (header_width - cell_width) / max(n_data - 1, 1)
    return [x0] + [x0 + 150 + i * step for i in range(n_data)]


def place_table(pb: PageBuilder, rng: random.Random, y: float, n: int) -> float:
    n_cols = rng.randint(3, 5)
    n_rows = rng.randint(2, 5)
    spanning = rng.random() < 0.4
    rows, _ = random_table(rng, n_rows, n_cols, spanning)
    pb.line(["Table", f"{n}:"] + TextGen(rng).phrase(4), MARGIN, y, 9.0)
    y += 9 + 8
    cols = spanning_columns(n_cols) if spanning else table_columns(n_cols)
    return pb.table(rows, cols, y)


# --- documents -----------------------------------------------------------------------------------

DOCLAYNET_TITLE = "DocLayNet: A Large Human-Annotated Dataset for Document-Layout Analysis"
DOCLAYNET_AUTHORS = ["Birgit Pfitzmann", "Christoph Auer", "Michele Dolfi", "Ahmed S. Nassar", "Peter Staar"]


def title_block(pb: PageBuilder, title: str, authors: Sequence[str], y: float = 90.0) -> float:
    words = title.split()
    half = (len(words) + 1) // 2
    pb.centered(words[:half], y, 18.0)
    pb.centered(words[half:], y + 22, 18.0)
    y += 22 + 18 + 14
    pb.centered(", ".join(authors).split(), y, 11.0)
    y += 11 + 20
    pb.centered("IBM Research, Rueschlikon, Switzerland".split(), y, 10.0)
    y += 10 + 20
    return y


def two_column_page(pb: PageBuilder, gen: TextGen, y0: float = BODY_TOP, y1: float = BODY_BOTTOM) -> None:
    fill_column(pb, gen, LEFT, y0, y1)
    fill_column(pb, gen, RIGHT, y0, y1)


def synth_page(page_no: int, rng: random.Random, doc_title: str, authors: Sequence[str]) -> ParsedPage:
    pb = PageBuilder(page_no)
    gen = TextGen(rng)
    if page_no > 1:
        pb.header(doc_title.split(":")[0] + f" preprint page {page_no}")
    if page_no == 1:
        y = title_block(pb, doc_title, authors)
        pb.line(["ABSTRACT"], LEFT[0], y, 12.0)
        y = pb.paragraph(gen.words(60), LEFT[0], LEFT[1], y + 18)
        two_column_page(pb, gen, y + BLOCK_GAP + 6, BODY_BOTTOM)
    else:
        kind = rng.choice(["text", "table", "figure", "table"])
        if kind == "table":
            split = rng.uniform(200, 380)
            two_column_page(pb, gen, BODY_TOP, split)
            bottom = place_table(pb, rng, split + 12, page_no)
            two_column_page(pb, gen, bottom + 24, BODY_BOTTOM)
        elif kind == "figure":
            top = BODY_TOP
            box = BoundingBox(LEFT[0], top, LEFT[1], top + 150)
            pb.picture(box, ["0.5", "1.0", "1.5"])
            pb.line(["Figure", f"{page_no}:"] + gen.phrase(4), LEFT[0], box.bottom + 6, 9.0)
            fill_column(pb, gen, LEFT, box.bottom + 6 + 9 + BLOCK_GAP, BODY_BOTTOM)
            fill_column(pb, gen, RIGHT, BODY_TOP, BODY_BOTTOM)
        else:
            two_column_page(pb, gen)
    pb.footer(str(page_no))
    return pb.build()


def synth_document(name: str, n_pages: int, seed: int) -> ParsedDocument:
    rng = random.Random(seed)
    title = rng.choice([DOCLAYNET_TITLE, "Geometric Table Structure Recovery for Scientific Documents"])
    authors = DOCLAYNET_AUTHORS if title == DOCLAYNET_TITLE else ["Jane Doe", "John Q. Smith"]
    pages = tuple(synth_page(i, rng, title, authors) for i in range(1, n_pages + 1))
    return ParsedDocument(name, pages)


def synth_corpus(out_dir: str | Path, n_docs: int = 20, pages_per_doc: int = 11, seed: int = 7) -> list[Path]:
    """Write ``n_docs`` synthetic documents; returns their paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for i in range(n_docs):
        doc = synth_document(f"synth-{i:03d}", pages_per_doc, seed * 1000 + i)
        p = out / f"synth-{i:03d}{FILE_SUFFIX}"
        p.write_text(encode_interchange(doc), encoding="utf-8")
        paths.append(p)
    return paths


# --- hand-shaped fixtures -------------------------------------------------------------------------


def fixture_doclaynet_title() -> ParsedDocument:
    pb = PageBuilder(1)
    gen = TextGen(random.Random(11))
    y = title_block(pb, DOCLAYNET_TITLE, DOCLAYNET_AUTHORS)
    pb.line(["ABSTRACT"], LEFT[0], y, 12.0)
    abstract = ["Accurate", "document", "layout", "analysis"] + gen.words(60)
    y = pb.paragraph(abstract, LEFT[0], LEFT[1], y + 18)
    fill_column(pb, gen, LEFT, y + BLOCK_GAP + 6, BODY_BOTTOM)
    fill_column(pb, gen, RIGHT, 250, BODY_BOTTOM)
    pb.footer("1")
    return ParsedDocument("doclaynet_title", (pb.build(),))


def fixture_two_column() -> ParsedDocument:
    """Page header, two left paragraphs (L1, L2), one right paragraph (R1), footer."""
    pb = PageBuilder(2)
    gen = TextGen(random.Random(12))
    pb.header("Two column fixture")
    b = paragraph_lines(pb, gen.words(40), LEFT, 100, 5)
    paragraph_lines(pb, gen.words(40), LEFT, b + BLOCK_GAP, 5)
    paragraph_lines(pb, gen.words(50), RIGHT, 100, 6)
    pb.footer("2")
    return ParsedDocument("two_column", (_renumber(pb.build(), 1),))


def fixture_para_table_para() -> ParsedDocument:
    """A paragraph broken by a full-width table: part one ends the top of
    the right column, part two opens the bottom of the left column."""
    pb = PageBuilder(1)
    gen = TextGen(random.Random(13))
    pb.header("Interleaving fixture")
    paragraph_lines(pb, gen.words(50), LEFT, 90, 6)
    paragraph_lines(pb, ["Experiments", "begin", "here", "and"] + gen.words(40), RIGHT, 90, 6)
    rows = [
        ["class label", "All", "Fin", "Man"],
        ["Caption", "84-89", "40-61", "86-92"],
        ["Footnote", "83-91", "70-71", "84-89"],
        ["Formula", "83-85", "60-72", "83-84"],
    ]
    y = 90 + 6 * LINE_PITCH + 30
    bottom = pb.table(rows, table_columns(4), y)
    paragraph_lines(pb, ["continue", "after", "the", "table", "with"] + gen.words(40), LEFT, bottom + 30, 5)
    paragraph_lines(pb, gen.words(40), RIGHT, bottom + 30, 5)
    pb.footer("1")
    return ParsedDocument("para_table_para", (pb.build(),))


def fixture_fig3_table() -> ParsedDocument:
    """Table with a header spanning three columns over a sub-header row."""
    pb = PageBuilder(1)
    pb.line(["Table", "1:", "Overview", "of", "the", "dataset", "classes"], MARGIN, 100, 9.0)
    rows = [
        ["class label", "triple inter-annotator mAP@0.5-0.95 (%)", None, None],
        [None, "All", "Fin", "Man"],
        ["Caption", "84-89", "40-61", "86-92"],
        ["Footnote", "83-91", "70-71", "84-89"],
        ["Formula", "83-85", "60-72", "83-84"],
        ["List-item", "87-88", "81-85", "87-88"],
    ]
    pb.table(rows, spanning_columns(4), 117)
    return ParsedDocument("fig3_table", (pb.build(),))


def fixture_header_footer() -> ParsedDocument:
    pb = PageBuilder(1)
    pb.header("Running header of the journal")
    pb.footer("Page 1 of 1")
    return ParsedDocument("header_footer", (pb.build(),))


def fixture_figure_caption() -> ParsedDocument:
    pb = PageBuilder(1)
    gen = TextGen(random.Random(14))
    box = BoundingBox(MARGIN, 100, PAGE_W - MARGIN, 300)
    pb.picture(box, ["axis", "0.5", "1.0"])
    pb.line(["Figure", "1:", "Sample", "page", "layouts"], MARGIN, 306, 9.0)
    pb.paragraph(gen.words(60), MARGIN, PAGE_W - MARGIN, 340)
    return ParsedDocument("figure_caption", (pb.build(),))


def fixture_multi_page() -> ParsedDocument:
    return synth_document("multi_page", 3, seed=5)


def _renumber(page: ParsedPage, page_no: int) -> ParsedPage:
    return ParsedPage(page_no, page.width, page.height, page.tokens, page.raster, page.proposals)


FIXTURES = {
    "doclaynet_title": fixture_doclaynet_title,
    "two_column": fixture_two_column,
    "para_table_para": fixture_para_table_para,
    "fig3_table": fixture_fig3_table,
    "header_footer": fixture_header_footer,
    "figure_caption": fixture_figure_caption,
    "multi_page": fixture_multi_page,
}


def write_fixtures(out_dir: str | Path) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for name, make in FIXTURES.items():
        p = out / f"{name}{FILE_SUFFIX}"
        p.write_text(encode_interchange(make()), encoding="utf-8")
        paths.append(p)
    return paths
