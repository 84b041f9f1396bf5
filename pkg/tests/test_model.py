import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from docforge.model import (
    BoundingBox,
    DocItem,
    DocItemLabel,
    Document,
    LayoutProposal,
    PageInfo,
    ParsedPage,
    ProvenanceItem,
    Raster,
    TableCell,
    TableStructure,
    TextToken,
    bbox_area,
    bbox_iou,
    bbox_overlap_frac,
    validate_document,
)

coord = st.floats(min_value=-1000, max_value=1000, allow_nan=False, allow_infinity=False)


@st.composite
def boxes(draw):
    x0, x1 = sorted((draw(coord), draw(coord)))
    y0, y1 = sorted((draw(coord), draw(coord)))
    return BoundingBox(x0, y0, x1, y1)


def test_area_examples():
    assert bbox_area(BoundingBox(0, 0, 10, 10)) == 100
    assert bbox_area(BoundingBox(5, 5, 5, 9)) == 0
    assert bbox_area(BoundingBox(12.5, 7.25, 30.0, 20.0)) == pytest.approx(223.125)


def test_iou_examples():
    a = BoundingBox(0, 0, 10, 10)
    assert bbox_iou(a, a) == 1.0
    assert bbox_iou(a, BoundingBox(20, 20, 30, 30)) == 0.0
    assert bbox_iou(a, BoundingBox(5, 0, 15, 10)) == pytest.approx(1 / 3)


def test_iou_zero_union():
    p = BoundingBox(3, 3, 3, 3)
    assert bbox_iou(p, p) == 0.0


def test_overlap_frac_examples():
    b = BoundingBox(0, 0, 100, 100)
    assert bbox_overlap_frac(BoundingBox(10, 10, 20, 20), b) == 1.0
    assert bbox_overlap_frac(BoundingBox(200, 200, 210, 210), b) == 0.0
    assert bbox_overlap_frac(BoundingBox(0, 0, 10, 10), BoundingBox(5, 0, 20, 20)) == pytest.approx(0.5)


def test_overlap_frac_degenerate():
    b = BoundingBox(0, 0, 10, 10)
    assert bbox_overlap_frac(BoundingBox(5, 5, 5, 5), b) == 1.0
    assert bbox_overlap_frac(BoundingBox(10, 2, 10, 8), b) == 1.0  # center on the edge
    assert bbox_overlap_frac(BoundingBox(11, 2, 11, 8), b) == 0.0


@pytest.mark.parametrize(
    "coords", [(1, 0, 0, 1), (0, 1, 1, 0), (math.nan, 0, 1, 1), (0, 0, math.inf, 1)]
)
def test_invalid_boxes_rejected(coords):
    with pytest.raises(ValueError):
        BoundingBox(*coords)


@given(boxes(), boxes())
def test_iou_symmetric_and_bounded(a, b):
    v = bbox_iou(a, b)
    assert v == bbox_iou(b, a)
    assert 0.0 <= v <= 1.0


@given(boxes())
def test_self_iou(a):
    if bbox_area(a) > 0:
        assert bbox_iou(a, a) == pytest.approx(1.0)


@given(boxes(), boxes())
def test_contained_box_fully_covered(a, b):
    hull = a.union(b)
    assert bbox_overlap_frac(a, hull) == pytest.approx(1.0)
    assert 0.0 <= bbox_overlap_frac(a, b) <= 1.0 + 1e-12


def test_clamp_and_hull():
    assert BoundingBox(-5, -5, 700, 50).clamp(612, 792) == BoundingBox(0, 0, 612, 50)
    assert BoundingBox.hull([BoundingBox(0, 0, 1, 1), BoundingBox(5, 5, 6, 7)]) == BoundingBox(0, 0, 6, 7)
    with pytest.raises(ValueError):
        BoundingBox.hull([])


def test_label_parse():
    assert DocItemLabel.parse("section_header") is DocItemLabel.SECTION_HEADER
    assert len(DocItemLabel) == 12
    with pytest.raises(ValueError, match="unknown item label"):
        DocItemLabel.parse("sidebar")


def test_page_and_token_validation():
    with pytest.raises(ValueError):
        ParsedPage(0, 10, 10)
    with pytest.raises(ValueError):
        ParsedPage(1, 0, 10)
    t = TextToken(1, "a", BoundingBox(0, 0, 1, 1))
    with pytest.raises(ValueError, match="duplicate"):
        ParsedPage(1, 10, 10, (t, t))
    assert TextToken(2, " ", BoundingBox(0, 0, 1, 3)).effective_font_size == 3
    with pytest.raises(ValueError):
        LayoutProposal(BoundingBox(0, 0, 1, 1), DocItemLabel.TEXT, 1.5)
    with pytest.raises(ValueError):
        Raster(72)
    with pytest.raises(ValueError):
        Raster(0, path="x.png")


def test_table_structure_problems():
    ok = TableStructure(2, 2, (TableCell(0, 0, 1, 2), TableCell(1, 0)))
    assert ok.problems() == []
    assert ok.cell_at(0, 1) is ok.cells[0]
    assert ok.cell_at(1, 1) is None
    overlap = TableStructure(2, 2, (TableCell(0, 0, 2, 1), TableCell(1, 0)))
    assert any("overlap" in p for p in overlap.problems())
    outside = TableStructure(1, 1, (TableCell(0, 0, 1, 2),))
    assert any("outside" in p for p in outside.problems())


def _item(label=DocItemLabel.TEXT, page=1, **kw):
    return DocItem(label, "x", (ProvenanceItem(page, BoundingBox(0, 0, 1, 1), (0,)),), **kw)


def test_validate_examples():
    assert validate_document(Document("empty")) == []
    pages = (PageInfo(1, 10, 10), PageInfo(2, 10, 10))
    bad_page = validate_document(Document("d", pages=pages, items=(_item(page=99),)))
    assert len(bad_page) == 1 and bad_page[0].item_index == 0 and bad_page[0].invariant == "prov-page-exists"
    no_table = validate_document(Document("d", pages=pages, items=(_item(DocItemLabel.TABLE),)))
    assert len(no_table) == 1 and no_table[0].invariant == "table-iff-label"


def test_validate_other_invariants():
    pages = (PageInfo(1, 10, 10),)
    stray = _item(table=TableStructure(1, 1))
    assert [v.invariant for v in validate_document(Document("d", pages=pages, items=(stray,)))] == ["table-iff-label"]
    no_prov = DocItem(DocItemLabel.TEXT, "x", ())
    assert [v.invariant for v in validate_document(Document("d", pages=pages, items=(no_prov,)))] == ["prov-non-empty"]
    tokens = validate_document(Document("d", pages=pages, items=(_item(),)), page_tokens={1: {5}})
    assert [v.invariant for v in tokens] == ["prov-tokens-exist"]
    link = (_item(DocItemLabel.CAPTION, caption_of=1), _item())
    assert [v.invariant for v in validate_document(Document("d", pages=pages, items=link))] == ["caption-link"]


def test_validate_is_pure():
    d = Document("d", pages=(PageInfo(1, 10, 10),), items=(_item(page=3), _item(DocItemLabel.TABLE)))
    assert validate_document(d) == validate_document(d)
