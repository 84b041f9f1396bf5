"""Acceptance gate: one test per primary criterion.

Each test records a PASS, FAIL or SKIP line that the terminal summary
prints under "acceptance criteria" (see conftest.py).
"""

import os
import random
import time

import pytest

from docforge.backend import decode_interchange, encode_interchange, load_document
from docforge.bench import compute_throughput
from docforge.layout import assign_tokens, suppress_overlaps
from docforge.model import DocItemLabel
from docforge.pipeline import LayoutStage, PageState, PipelineConfig, build_pipeline, convert_single
from docforge.serialize import from_json, table_to_markdown, to_json, to_markdown
from docforge.synth import synth_corpus
from docforge.tablestruct import grid_bands, infer_table_structure, make_fragments

from conftest import FIXTURES, record
from generators import (
    random_document,
    random_parsed_document,
    random_proposals,
    random_table_case,
    random_tokens,
    two_column_page,
)
from oracles import expand_matrix, grid_oracle, nms_oracle, parse_pipe_table, reading_order_oracle

ALL_FIXTURES = sorted(FIXTURES.glob("*.dpages.json"))
DOCLAYNET = "DocLayNet: A Large Human-Annotated Dataset for Document-Layout Analysis"

# (TTS seconds, Pages/s) for the eight measured cells, 225 pages each.
TABLE_CELLS = [
    ("M3 Max native 4", 177, 1.27),
    ("M3 Max native 16", 167, 1.34),
    ("M3 Max pypdfium 4", 103, 2.18),
    ("M3 Max pypdfium 16", 92, 2.45),
    ("Xeon native 4", 375, 0.60),
    ("Xeon native 16", 244, 0.92),
    ("Xeon pypdfium 4", 239, 0.94),
    ("Xeon pypdfium 16", 143, 1.57),
]


def _check(name, ok, detail):
    record(name, "PASS" if ok else "FAIL", detail)
    assert ok, detail


@pytest.mark.xfail(
    strict=True,
    reason="225/167 rounds to 1.35, the published cell says 1.34 (TTS there was presumably unrounded)",
)
def test_throughput_arithmetic():
    wrong = [
        f"{label}: 225/{tts} -> {compute_throughput(225, tts):.2f}, published {pps:.2f}"
        for label, tts, pps in TABLE_CELLS
        if compute_throughput(225, tts) != pps
    ]
    _check("throughput arithmetic", not wrong, f"{8 - len(wrong)}/8 cells match; " + "; ".join(wrong))


def test_nms_oracle_equivalence():
    rng = random.Random(2024)
    mismatches = idem = 0
    for _ in range(1000):
        props = random_proposals(rng, 10)
        kept = suppress_overlaps(props)
        mismatches += kept != nms_oracle(props)
        idem += suppress_overlaps(kept) != kept
    _check("NMS oracle equivalence", mismatches == 0 and idem == 0,
           f"1000 instances: {mismatches} oracle mismatches, {idem} idempotence failures")


def test_token_partition():
    rng = random.Random(77)
    bad = 0
    for _ in range(1000):
        props = random_proposals(rng, 12)
        toks = random_tokens(rng, 200)
        ids = [t for c in assign_tokens(props, toks) for t in c.token_ids]
        bad += sorted(ids) != sorted(t.token_id for t in toks)
    _check("token partition", bad == 0, f"1000 pages: {bad} non-partitions")


def _fixture_tables():
    """(name, cluster bbox, tokens) for every table the layout stage finds in the fixtures."""
    out = []
    for path in ALL_FIXTURES:
        for page in load_document(path).pages:
            state = LayoutStage().process_page(PageState(page))
            for c in state.predictions.layout:
                if c.label is DocItemLabel.TABLE:
                    out.append((f"{path.name}:p{page.page_no}", c.bbox, [page.token_map[t] for t in c.token_ids]))
    return out


def test_table_grid_oracle():
    rng = random.Random(99)
    cases = grid_bad = span_bad = 0
    for _ in range(60):
        case = random_table_case(rng)
        cases += 1
        grid_bad += grid_bands(case.region, case.tokens) != grid_oracle(case.fragments)
        s = infer_table_structure(case.region, case.tokens)
        span_bad += parse_pipe_table(table_to_markdown(s)) != expand_matrix(s.n_rows, s.n_cols, s.cells)
    fig3_ok = False
    fixture_cases = 0
    for name, region, tokens in _fixture_tables():
        frags = make_fragments(tokens)
        s = infer_table_structure(region, tokens)
        if len(frags) <= 16:
            fixture_cases += 1
            grid_bad += grid_bands(region, tokens) != grid_oracle([f.bbox for f in frags])
        rows = parse_pipe_table(table_to_markdown(s))
        span_bad += rows != expand_matrix(s.n_rows, s.n_cols, s.cells)
        if name.startswith("fig3_table"):
            header = "triple inter-annotator mAP@0.5-0.95 (%)"
            fig3_ok = rows[0].count(header) == 3 == s.cell_at(0, 1).col_span
    ok = grid_bad == 0 and span_bad == 0 and fig3_ok and cases >= 50
    _check("table grid oracle", ok,
           f"{cases} generated + {fixture_cases} fixture grids: {grid_bad} grid mismatches, "
           f"{span_bad} span-expansion mismatches, spanning header repeated: {fig3_ok}")


def test_no_retranscription():
    cells = bad = 0
    for path in ALL_FIXTURES:
        parsed = load_document(path)
        texts = {(p.page_no, t.token_id): t.text for p in parsed.pages for t in p.tokens}
        for it in convert_single(path).document.items:
            if it.table is None:
                continue
            page = it.prov[0].page_no
            for c in it.table.cells:
                cells += 1
                bad += c.text != " ".join(texts[(page, t)] for t in c.source_token_ids)
    _check("no-retranscription", bad == 0 and cells > 0, f"{cells} cells over {len(ALL_FIXTURES)} fixtures, {bad} differ")


def test_reading_order():
    from docforge.assemble import infer_reading_order

    rng = random.Random(5)
    bad = 0
    for _ in range(100):
        page = two_column_page(rng)
        order = infer_reading_order(page.clusters, page.width, page.height)
        bad += order != reading_order_oracle(page.clusters, page.width) or order != page.expected
    doc = convert_single(FIXTURES / "para_table_para.dpages.json").document
    t = [it.label for it in doc.items].index(DocItemLabel.TABLE)
    interleaved = doc.items[t - 1].text.startswith("Experiments begin here") and doc.items[
        t + 1
    ].text.startswith("continue after the table")
    _check("reading order", bad == 0 and interleaved,
           f"100 two-column pages: {bad} mismatches; paragraph/table/paragraph interleaving: {interleaved}")


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    out = tmp_path_factory.mktemp("corpus")
    synth_corpus(out)
    return sorted(out.iterdir())


def _convert_corpus(files, cfg):
    t0 = time.perf_counter()
    with build_pipeline(cfg) as pipeline:
        results = pipeline.convert_batch(files)
    elapsed = time.perf_counter() - t0
    return [(to_json(r.document), to_markdown(r.document)) for r in results], sum(r.page_count for r in results), elapsed


def test_determinism_under_concurrency(corpus):
    outputs = {}
    pages = 0
    for budget in (1, 4, 16):
        outputs[budget], pages, _ = _convert_corpus(corpus, PipelineConfig(thread_budget=budget))
    same = outputs[1] == outputs[4] == outputs[16]
    _check("determinism under concurrency", same and pages >= 200,
           f"{pages} pages at budgets 1/4/16: outputs {'identical' if same else 'differ'}")


def test_scaling_sanity(corpus):
    cores = os.cpu_count() or 1
    if cores < 8:
        record("scaling sanity", "SKIP", f"needs >= 8 cores, this machine has {cores}")
        pytest.skip(f"needs >= 8 cores, found {cores}")
    tts = {}
    for budget in (1, 4, 16):
        _, _, tts[budget] = _convert_corpus(corpus, PipelineConfig(thread_budget=budget, executor="process"))
    ok = tts[16] <= 1.05 * tts[4] and tts[4] <= 1.05 * tts[1]
    _check("scaling sanity", ok, "TTS " + ", ".join(f"{b} threads {t:.1f} s" for b, t in tts.items()))


def test_round_trips():
    bad = 0
    for path in ALL_FIXTURES:
        parsed = load_document(path)
        bad += decode_interchange(encode_interchange(parsed).encode()) != parsed
        doc = convert_single(path).document
        bad += from_json(to_json(doc)) != doc
    rng = random.Random(31)
    for _ in range(1000):
        parsed = random_parsed_document(rng)
        bad += decode_interchange(encode_interchange(parsed).encode()) != parsed
        doc = random_document(rng)
        bad += from_json(to_json(doc)) != doc
    _check("round trips", bad == 0, f"{len(ALL_FIXTURES)} fixtures + 1000 generated documents per format: {bad} failures")


def test_end_to_end_golden():
    doc = convert_single(FIXTURES / "doclaynet_title.dpages.json").document
    lines = to_markdown(doc).splitlines()
    authors = "Birgit Pfitzmann, Christoph Auer, Michele Dolfi, Ahmed S. Nassar, Peter Staar"
    title_ok = lines[0] == "## " + DOCLAYNET and lines[1] == authors
    hf_lines = to_markdown(convert_single(FIXTURES / "header_footer.dpages.json").document).splitlines()
    _check("end-to-end golden", title_ok and hf_lines == [],
           f"title and authors lines {'match' if title_ok else 'differ'}; header/footer fixture emits {len(hf_lines)} lines")
