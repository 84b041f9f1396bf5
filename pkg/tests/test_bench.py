import pytest

from docforge.bench import (
    BenchReport,
    PeakRssSampler,
    compute_throughput,
    emit_report,
    run_bench,
)
from docforge.synth import synth_corpus

HEADER = "corpus,backend,threads,pages,tts_s,pages_per_s,peak_mem_mb\n"


def test_throughput_examples():
    assert compute_throughput(225, 177) == 1.27
    assert compute_throughput(225, 92) == 2.45
    assert compute_throughput(0, 10) == 0.0
    assert compute_throughput(100, 50) == 2.0


@pytest.mark.parametrize("tts", [0, -1.0])
def test_throughput_rejects_non_positive_time(tts):
    with pytest.raises(ValueError):
        compute_throughput(10, tts)


def test_emit_empty():
    assert emit_report([]) == HEADER


def test_emit_table_row():
    r = BenchReport("corpus", "interchange", 4, 225, 177.0, compute_throughput(225, 177), 6 * 2**30)
    text = emit_report([r])
    assert ",4,225,177.00,1.27," in text
    assert text.endswith("6144.00\n")


def test_emit_matrix_order():
    rs = [BenchReport("c", "interchange", b, 10, 1.0, 10.0, 0) for b in (4, 16)]
    rows = emit_report(rs).splitlines()[1:]
    assert [row.split(",")[2] for row in rows] == ["4", "16"]


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    out = tmp_path_factory.mktemp("corpus")
    synth_corpus(out, n_docs=3, pages_per_doc=2, seed=1)
    return out


def test_run_bench_matrix(corpus):
    reports = run_bench(corpus, (1, 2), executor="thread")
    assert [r.thread_budget for r in reports] == [1, 2]
    for r in reports:
        assert r.page_count == 6 and not r.failed
        assert r.tts_s > 0 and r.peak_mem_bytes > 0
        assert abs(r.pages_per_s - r.page_count / r.tts_s) <= 0.005
    # Same outputs at every point, timings aside.
    assert reports[0].output_digest == reports[1].output_digest


def test_bench_repeatable(corpus):
    a = run_bench(corpus, (2,), executor="thread")[0]
    b = run_bench(corpus, (2,), executor="thread")[0]
    assert (a.page_count, a.output_digest) == (b.page_count, b.output_digest)


def test_empty_corpus(tmp_path):
    with pytest.raises(ValueError):
        run_bench(tmp_path)


def test_failures_mark_report_and_sweep_continues(corpus, tmp_path):
    for f in corpus.iterdir():
        (tmp_path / f.name).write_bytes(f.read_bytes())
    (tmp_path / "zz_broken.dpages.json").write_text("{", encoding="utf-8")
    reports = run_bench(tmp_path, (1, 2), executor="thread")
    assert len(reports) == 2 and all(r.failed for r in reports)
    assert all(r.page_count == 6 for r in reports)
    unknown = run_bench(corpus, (1,), backends=("interchange", "pdfium"), executor="thread")
    assert [r.failed for r in unknown] == [False, True]


def test_sampler_sees_memory():
    with PeakRssSampler(interval=0.01) as s:
        block = bytearray(50 * 2**20)
        s.sample()
    assert s.peak >= len(block)
