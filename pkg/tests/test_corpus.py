"""Corpus ingestion, the index, top-n retrieval, persistence."""

from __future__ import annotations

import json

import numpy as np
import pytest

from bioquery.corpus import (
    Document,
    build_index,
    ingest_corpus,
    load_index,
    save_index,
    top_n,
)
from bioquery.embedding import HashingEmbedder, cosine_similarity
from bioquery.errors import EmbeddingError, IngestionError
from bioquery.fixtures import synthetic_corpus, write_corpus_file


def _write(tmp_path, records):
    path = tmp_path / "corpus.jsonl"
    path.write_text("\n".join(json.dumps(r) for r in records) + "\n", encoding="utf-8")
    return path


def _record(i, **overrides):
    rec = {
        "id": f"d{i}",
        "title": f"title {i}",
        "abstract": f"abstract about topic{i}",
        "link": f"http://example.test/{i}",
        "year": 2000 + i,
    }
    rec.update(overrides)
    return rec


class TestIngest:
    def test_three_records(self, tmp_path, embedder):
        path = _write(tmp_path, [_record(i) for i in range(3)])
        index = ingest_corpus(path, embedder)
        assert len(index) == 3
        assert index.vectors.shape == (3, embedder.dim)
        assert not index.rejections

    def test_missing_abstract_rejected(self, tmp_path, embedder):
        records = [_record(0), {k: v for k, v in _record(1).items() if k != "abstract"}]
        index = ingest_corpus(_write(tmp_path, records), embedder)
        assert len(index) == 1
        assert len(index.rejections) == 1
        assert "abstract" in index.rejections[0].reason

    def test_duplicate_id_rejected(self, tmp_path, embedder):
        index = ingest_corpus(
            _write(tmp_path, [_record(0), _record(1, id="d0")]), embedder
        )
        assert len(index) == 1
        assert "duplicate" in index.rejections[0].reason

    def test_year_out_of_range_rejected(self, tmp_path, embedder):
        index = ingest_corpus(_write(tmp_path, [_record(0, year=1492)]), embedder)
        assert len(index) == 0
        assert "year" in index.rejections[0].reason

    def test_empty_link_rejected(self, tmp_path, embedder):
        index = ingest_corpus(_write(tmp_path, [_record(0, link="")]), embedder)
        assert len(index) == 0

    def test_bad_json_line_rejected_run_continues(self, tmp_path, embedder):
        path = tmp_path / "corpus.jsonl"
        path.write_text(json.dumps(_record(0)) + "\n{not json\n", encoding="utf-8")
        index = ingest_corpus(path, embedder)
        assert len(index) == 1
        assert len(index.rejections) == 1

    def test_unreadable_file_fatal(self, tmp_path, embedder):
        with pytest.raises(IngestionError):
            ingest_corpus(tmp_path / "absent.jsonl", embedder)

    def test_567_record_fixture(self, tmp_path, embedder):
        path = tmp_path / "big.jsonl"
        write_corpus_file(synthetic_corpus(567), path)
        index = ingest_corpus(path, embedder)
        assert len(index) == 567

    def test_parallel_ingest_matches_serial(self, tmp_path, embedder):
        path = _write(tmp_path, [_record(i) for i in range(12)])
        serial = ingest_corpus(path, embedder, workers=1)
        parallel = ingest_corpus(path, embedder, workers=4)
        assert [d.id for d in serial.documents] == [d.id for d in parallel.documents]
        assert np.array_equal(serial.vectors, parallel.vectors)


class TestTopN:
    @pytest.fixture()
    def small_index(self, embedder):
        docs = [
            Document("a", "histone biology", "h2a histone variants chromatin", "http://x/a", 2001),
            Document("b", "wheat genomics", "wheat genome assembly pipeline", "http://x/b", 2002),
            Document("c", "histone disease", "histone mutations in disease", "http://x/c", 2003),
            Document("d", "soil survey", "microbial soil diversity", "http://x/d", 2004),
            Document("e", "chromatin factors", "chromatin remodeling and h2a", "http://x/e", 2005),
        ]
        return build_index(docs, embedder), docs

    def test_saturation(self, small_index, embedder):
        index, docs = small_index
        out = top_n(index, embedder.embed("anything at all"), n=50)
        assert len(out) == len(docs)
        scores = [s for _, s in out]
        assert scores == sorted(scores, reverse=True)

    def test_self_retrieval(self, small_index, embedder):
        index, docs = small_index
        qvec = index.vector_for("c")
        ranked = top_n(index, qvec, n=1)
        assert ranked[0][0].id == "c"
        assert ranked[0][1] == pytest.approx(1.0, abs=1e-9)

    def test_matches_brute_force(self, small_index, embedder):
        index, docs = small_index
        qvec = embedder.embed("h2a histone chromatin")
        expected = sorted(
            (
                (d, cosine_similarity(qvec, index.vector_for(d.id)))
                for d in docs
            ),
            key=lambda pair: (-pair[1], pair[0].id),
        )
        got = top_n(index, qvec, n=5)
        assert [d.id for d, _ in got] == [d.id for d, _ in expected]
        for (_, a), (_, b) in zip(got, expected):
            assert a == pytest.approx(b, abs=1e-12)

    def test_prefix_property(self, small_index, embedder):
        index, _ = small_index
        qvec = embedder.embed("histone")
        full = [d.id for d, _ in top_n(index, qvec, n=5)]
        for n in range(1, 5):
            assert [d.id for d, _ in top_n(index, qvec, n=n)] == full[:n]

    def test_tie_break_by_id(self, embedder):
        docs = [
            Document("z", "same text", "identical abstract", "http://x/z", 2001),
            Document("a", "same text", "identical abstract", "http://x/a", 2001),
        ]
        index = build_index(docs, embedder)
        ranked = top_n(index, embedder.embed("same text identical"), n=2)
        assert [d.id for d, _ in ranked] == ["a", "z"]

    def test_empty_index(self, embedder):
        index = build_index([], embedder)
        assert top_n(index, embedder.embed("x"), n=3) == []

    def test_dim_mismatch(self, small_index):
        index, _ = small_index
        with pytest.raises(EmbeddingError):
            top_n(index, np.ones(7), n=1)


class TestPersistence:
    def test_round_trip(self, tmp_path, embedder):
        docs = synthetic_corpus(10)
        index = build_index(docs, embedder)
        path = tmp_path / "index.json"
        save_index(index, path)
        loaded = load_index(path)
        assert [d.id for d in loaded.documents] == [d.id for d in index.documents]
        assert loaded.documents == index.documents
        assert np.array_equal(loaded.vectors, index.vectors)
        assert loaded.embedder_signature == index.embedder_signature
        assert loaded.dim == index.dim

    def test_version_guard(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps({"format": "bioquery-index", "version": 99}))
        with pytest.raises(IngestionError):
            load_index(path)
