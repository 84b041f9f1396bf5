import random
from importlib import resources

from hypothesis import given, settings
from hypothesis import strategies as st

from docforge.assemble import (
    assemble_document,
    detect_language,
    extract_metadata,
    infer_reading_order,
    match_captions,
    split_author_line,
    supported_languages,
    tag_references,
)
from docforge.model import (
    BoundingBox,
    DocItem,
    DocItemLabel,
    LayoutCluster,
    LayoutProposal,
    ProvenanceItem,
    validate_document,
)
from docforge.backend import load_document
from docforge.pipeline import LayoutStage, PageState, convert_single

from conftest import FIXTURES
from generators import two_column_page
from oracles import reading_order_oracle


def cluster(cid, l, t, r, b, label=DocItemLabel.TEXT):
    return LayoutCluster(cid, LayoutProposal(BoundingBox(l, t, r, b), label))


def item(label, l, t, r, b, text="x", page=1):
    return DocItem(label, text, (ProvenanceItem(page, BoundingBox(l, t, r, b), ()),))


# --- reading order ------------------------------------------------------------------


def test_single_cluster():
    assert infer_reading_order([cluster(7, 0, 0, 10, 10)], 612, 792) == [7]


def test_left_column_before_right():
    cs = [cluster(2, 320, 80, 558, 400), cluster(0, 54, 80, 292, 200), cluster(1, 54, 220, 292, 400)]
    assert infer_reading_order(cs, 612, 792) == [0, 1, 2]


def test_narrow_gap_is_not_a_column():
    # 15 pt < 3% of 612, so the two boxes read as one row, top then left.
    cs = [cluster(0, 300, 80, 558, 100), cluster(1, 54, 82, 285, 100)]
    assert infer_reading_order(cs, 612, 792) == [0, 1]


def test_headers_first_footers_last():
    cs = [
        cluster(0, 290, 750, 320, 760, DocItemLabel.PAGE_FOOTER),
        cluster(1, 54, 100, 500, 200),
        cluster(2, 54, 20, 500, 30, DocItemLabel.PAGE_HEADER),
        cluster(3, 54, 5, 500, 12, DocItemLabel.PAGE_FOOTER),
    ]
    assert infer_reading_order(cs, 612, 792) == [2, 1, 3, 0]


def test_two_column_fixture_order():
    doc = convert_single(FIXTURES / "two_column.dpages.json").document
    body = [it for it in doc.items if it.label is DocItemLabel.TEXT]
    l1, l2, r1 = body
    assert l1.prov[0].bbox.right < r1.prov[0].bbox.left
    assert l1.prov[0].bbox.bottom < l2.prov[0].bbox.top
    assert validate_document(doc) == []
    # Same order from the oracle on the detected clusters.
    page = load_document(FIXTURES / "two_column.dpages.json").pages[0]
    state = LayoutStage().process_page(PageState(page))
    ids = reading_order_oracle(state.predictions.layout, page.width)
    by_id = {c.cluster_id: c for c in state.predictions.layout}
    assert [by_id[i].bbox for i in ids] == [it.prov[0].bbox for it in doc.items]


def test_fixture_interleaving():
    doc = convert_single(FIXTURES / "para_table_para.dpages.json").document
    labels = [it.label for it in doc.items]
    t = labels.index(DocItemLabel.TABLE)
    assert doc.items[t - 1].text.startswith("Experiments begin here")
    assert doc.items[t + 1].text.startswith("continue after the table")


@given(st.integers(0, 10**6))
@settings(max_examples=100, deadline=None)
def test_generated_two_column_pages(seed):
    page = two_column_page(random.Random(seed))
    order = infer_reading_order(page.clusters, page.width, page.height)
    assert sorted(order) == sorted(c.cluster_id for c in page.clusters)
    assert order == reading_order_oracle(page.clusters, page.width)
    assert order == page.expected


# --- captions -------------------------------------------------------------------------


def test_caption_below_picture():
    items = [item(DocItemLabel.PICTURE, 54, 100, 300, 300), item(DocItemLabel.CAPTION, 54, 306, 300, 316)]
    assert match_captions(items).links == {1: 0}


def test_caption_without_target_warns():
    res = match_captions([item(DocItemLabel.CAPTION, 54, 306, 300, 316, "Figure 9: lost")])
    assert res.links == {} and len(res.warnings) == 1


def test_caption_out_of_reach():
    # Reach is 15 caption heights: 150 pt for a 10 pt caption.
    items = [item(DocItemLabel.PICTURE, 54, 100, 300, 140), item(DocItemLabel.CAPTION, 54, 291, 300, 301)]
    assert match_captions(items).links == {}
    items = [item(DocItemLabel.PICTURE, 54, 100, 300, 140), item(DocItemLabel.CAPTION, 54, 290, 300, 300)]
    assert match_captions(items).links == {1: 0}


def test_equidistant_caption_links_above():
    items = [
        item(DocItemLabel.TABLE, 54, 100, 300, 200),
        item(DocItemLabel.CAPTION, 54, 212, 300, 222),
        item(DocItemLabel.PICTURE, 54, 234, 300, 300),
    ]
    # Both targets sit 12 pt from the caption edge.
    assert match_captions(items).links == {1: 0}


def test_each_target_taken_once_and_never_a_caption():
    items = [
        item(DocItemLabel.PICTURE, 54, 100, 300, 200),
        item(DocItemLabel.CAPTION, 54, 206, 300, 216),
        item(DocItemLabel.CAPTION, 54, 220, 300, 230),
    ]
    res = match_captions(items)
    assert res.links == {1: 0}
    assert all(items[t].label is not DocItemLabel.CAPTION for t in res.links.values())


def test_fixture_caption_link():
    doc = convert_single(FIXTURES / "figure_caption.dpages.json").document
    cap = next(it for it in doc.items if it.label is DocItemLabel.CAPTION)
    assert doc.items[cap.caption_of].label is DocItemLabel.PICTURE
    assert doc.items[cap.caption_of].text == ""


# --- language -------------------------------------------------------------------------


def _stopwords(lang):
    path = resources.files("docforge") / "data" / "stopwords" / f"{lang}.txt"
    return set(path.read_text(encoding="utf-8").split())


def test_supported_languages():
    assert supported_languages() == ["de", "en", "es", "fr", "it"]


def test_language_examples():
    assert detect_language("") is None
    rng = random.Random(0)
    en = sorted(_stopwords("en"))
    content = ["layout", "table", "model", "pipeline", "token", "page"]
    words = [rng.choice(en) if rng.random() < 0.4 else rng.choice(content) for _ in range(500)]
    text = " ".join(words)
    # Counted directly against the bundled list.
    assert sum(w in _stopwords("en") for w in words) >= 10
    assert detect_language(text) == "en"


def test_mixed_language_is_absent():
    en, de = sorted(_stopwords("en")), sorted(_stopwords("de"))
    text = " ".join(en[i % len(en)] + " " + de[i % len(de)] for i in range(100))
    assert detect_language(text) is None


@given(st.sampled_from(["en", "de", "fr", "es", "it"]), st.integers(0, 10**6))
@settings(max_examples=50, deadline=None)
def test_single_language_corpora(lang, seed):
    rng = random.Random(seed)
    words = sorted(_stopwords(lang))
    text = " ".join(rng.choice(words) for _ in range(200))
    assert detect_language(text) == lang
    assert detect_language(text) == detect_language(text)


# --- metadata -------------------------------------------------------------------------


def test_author_split_examples():
    assert split_author_line("Jane Doe and John Q. Smith") == ["Jane Doe", "John Q. Smith"]
    assert split_author_line("Ahmed S. Nassar1, Peter Staar*") == ["Ahmed S. Nassar", "Peter Staar"]
    assert split_author_line("IBM Research, Rueschlikon, Switzerland") == []
    assert split_author_line("Jane Doe, 8803 Rueschlikon") == []


def test_metadata_without_title():
    meta = extract_metadata([item(DocItemLabel.TEXT, 0, 0, 1, 1, "Jane Doe and John Q. Smith")])
    assert meta.title is None and meta.authors == ()


def test_metadata_from_title_block():
    items = [
        item(DocItemLabel.TITLE, 0, 0, 1, 1, "A Title"),
        item(DocItemLabel.TEXT, 0, 0, 1, 1, "Jane Doe and John Q. Smith"),
        item(DocItemLabel.SECTION_HEADER, 0, 0, 1, 1, "1. Introduction"),
        item(DocItemLabel.TEXT, 0, 0, 1, 1, "Alan Turing and Grace Hopper"),
    ]
    meta = extract_metadata(items)
    assert meta.title == "A Title" and meta.authors == ("Jane Doe", "John Q. Smith")


def test_doclaynet_fixture_metadata():
    meta = convert_single(FIXTURES / "doclaynet_title.dpages.json").document.metadata
    assert meta.title == "DocLayNet: A Large Human-Annotated Dataset for Document-Layout Analysis"
    assert meta.authors == ("Birgit Pfitzmann", "Christoph Auer", "Michele Dolfi", "Ahmed S. Nassar", "Peter Staar")
    assert meta.language == "en"


def test_references_tagged():
    items = [
        item(DocItemLabel.TEXT, 0, 0, 1, 1, "body"),
        item(DocItemLabel.SECTION_HEADER, 0, 0, 1, 1, "References"),
        item(DocItemLabel.LIST_ITEM, 0, 0, 1, 1, "[1] A. Author. Title."),
        item(DocItemLabel.SECTION_HEADER, 0, 0, 1, 1, "Appendix"),
        item(DocItemLabel.TEXT, 0, 0, 1, 1, "more"),
    ]
    assert [it.reference for it in tag_references(items)] == [False, False, True, False, False]


# --- assembly ---------------------------------------------------------------------------


def test_zero_pages():
    doc = assemble_document("empty", [])
    assert doc.items == () and doc.pages == ()


def test_multi_page_global_order():
    doc = convert_single(FIXTURES / "multi_page.dpages.json").document
    pages = [it.prov[0].page_no for it in doc.items]
    assert pages == sorted(pages) and set(pages) == {1, 2, 3}
    assert validate_document(doc) == []
