"""Literature corpus: ingestion, the vector index, and top-n retrieval.

The corpus file is line-delimited JSON with fields id, title, abstract,
link, year. Malformed records are rejected individually (the run
continues); an unreadable file is fatal. The index is immutable once
built, so concurrent readers need no coordination.
"""

from __future__ import annotations

import base64
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .embedding import EmbeddingBackend, embed_many
from .errors import EmbeddingError, IngestionError

INDEX_FORMAT_VERSION = 1

YEAR_MIN, YEAR_MAX = 1900, 2100


@dataclass(frozen=True)
class Document:
    """One literature record; the unit of findability."""

    id: str
    title: str
    abstract: str
    access_link: str
    year: int

    def embedding_text(self) -> str:
        return f"{self.title} {self.abstract}"


@dataclass
class Rejection:
    line_no: int
    reason: str
    raw: str


@dataclass
class CorpusIndex:
    """Documents plus one embedding vector per document.

    vectors is an (n, dim) float64 matrix, row i belonging to documents[i].
    """

    documents: list[Document]
    vectors: np.ndarray
    dim: int
    embedder_signature: str
    rejections: list[Rejection] = field(default_factory=list)

    def __post_init__(self) -> None:
        if len(self.documents) != self.vectors.shape[0]:
            raise IngestionError("one vector per document is required")
        self._by_id = {d.id: i for i, d in enumerate(self.documents)}
        norms = np.linalg.norm(self.vectors, axis=1) if len(self.documents) else np.array([])
        self._norms = norms

    def __len__(self) -> int:
        return len(self.documents)

    def __contains__(self, doc_id: str) -> bool:
        return doc_id in self._by_id

    def get(self, doc_id: str) -> Document | None:
        i = self._by_id.get(doc_id)
        return self.documents[i] if i is not None else None

    def vector_for(self, doc_id: str) -> np.ndarray:
        return self.vectors[self._by_id[doc_id]]


def parse_record(line: str, line_no: int, seen_ids: set[str]) -> Document:
    """Validate one corpus line; raises IngestionError with the reason."""
    try:
        raw = json.loads(line)
    except json.JSONDecodeError as exc:
        raise IngestionError(f"not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise IngestionError("record is not an object")
    missing = [k for k in ("id", "title", "abstract", "link", "year") if k not in raw]
    if missing:
        raise IngestionError(f"missing fields: {', '.join(missing)}")
    doc_id = str(raw["id"])
    if not doc_id:
        raise IngestionError("empty id")
    if doc_id in seen_ids:
        raise IngestionError(f"duplicate id {doc_id!r}")
    link = str(raw["link"]).strip()
    if not link:
        raise IngestionError("empty access link")
    try:
        year = int(raw["year"])
    except (TypeError, ValueError) as exc:
        raise IngestionError(f"year is not an integer: {raw['year']!r}") from exc
    if not YEAR_MIN <= year <= YEAR_MAX:
        raise IngestionError(f"year {year} outside [{YEAR_MIN}, {YEAR_MAX}]")
    return Document(
        id=doc_id,
        title=str(raw["title"]),
        abstract=str(raw["abstract"]),
        access_link=link,
        year=year,
    )


def ingest_corpus(
    path: str | Path, embedder: EmbeddingBackend, workers: int = 1
) -> CorpusIndex:
    """Build an index from a line-delimited corpus file.

    Each vector is embedder(title + " " + abstract). Per-record failures
    (including unembeddable empty text) become rejections on the returned
    index; an unreadable file raises IngestionError.
    """
    path = Path(path)
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise IngestionError(f"cannot read corpus file {path}: {exc}") from exc

    documents: list[Document] = []
    rejections: list[Rejection] = []
    seen: set[str] = set()
    for line_no, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            doc = parse_record(line, line_no, seen)
        except IngestionError as exc:
            rejections.append(Rejection(line_no, str(exc), line[:200]))
            continue
        seen.add(doc.id)
        documents.append(doc)

    kept: list[Document] = []
    vectors: list[np.ndarray] = []
    texts = [d.embedding_text() for d in documents]
    embedded: list[np.ndarray | None] = []
    if workers > 1:
        # Embedding is order-independent; results are re-assembled in
        # input order, so parallelism cannot change the index.
        try:
            embedded = list(embed_many(texts, embedder, workers=workers))
        except EmbeddingError:
            embedded = []
    if not embedded:
        for doc, text in zip(documents, texts):
            try:
                embedded.append(embedder.embed(text))
            except EmbeddingError as exc:
                embedded.append(None)
                rejections.append(Rejection(0, f"unembeddable record {doc.id}: {exc}", doc.id))
    for doc, vec in zip(documents, embedded):
        if vec is None:
            continue
        kept.append(doc)
        vectors.append(vec)

    matrix = (
        np.vstack(vectors) if vectors else np.zeros((0, embedder.dim), dtype=np.float64)
    )
    return CorpusIndex(
        documents=kept,
        vectors=matrix,
        dim=embedder.dim,
        embedder_signature=embedder.signature,
        rejections=rejections,
    )


def build_index(
    documents: list[Document], embedder: EmbeddingBackend
) -> CorpusIndex:
    """Index an in-memory document list (fixtures, tests, remote records)."""
    vectors = [embedder.embed(d.embedding_text()) for d in documents]
    matrix = (
        np.vstack(vectors) if vectors else np.zeros((0, embedder.dim), dtype=np.float64)
    )
    return CorpusIndex(
        documents=list(documents),
        vectors=matrix,
        dim=embedder.dim,
        embedder_signature=embedder.signature,
    )


def top_n(
    index: CorpusIndex, query_vec: np.ndarray, n: int
) -> list[tuple[Document, float]]:
    """Top-n documents by cosine similarity, ties broken by ascending id.

    Returns min(n, corpus size) pairs sorted by score descending. The
    prefix property holds: top_n(k) is a prefix of top_n(m) for k < m.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if len(index) == 0:
        return []
    q = np.asarray(query_vec, dtype=np.float64)
    if q.shape != (index.dim,):
        raise EmbeddingError(f"query dim {q.shape} does not match index dim {index.dim}")
    qn = np.linalg.norm(q)
    if qn == 0.0:
        raise EmbeddingError("cannot rank with a zero query vector")
    scores = index.vectors @ q / (index._norms * qn)
    scores = np.clip(scores, -1.0, 1.0)
    order = sorted(range(len(index)), key=lambda i: (-scores[i], index.documents[i].id))
    return [(index.documents[i], float(scores[i])) for i in order[:n]]


def save_index(index: CorpusIndex, path: str | Path) -> None:
    """Persist as one JSON file with a version header; round-trips losslessly."""
    payload = {
        "format": "bioquery-index",
        "version": INDEX_FORMAT_VERSION,
        "dim": index.dim,
        "embedder_signature": index.embedder_signature,
        "documents": [
            {
                "id": d.id,
                "title": d.title,
                "abstract": d.abstract,
                "link": d.access_link,
                "year": d.year,
            }
            for d in index.documents
        ],
        "vectors_b64": base64.b64encode(
            np.ascontiguousarray(index.vectors, dtype=np.float64).tobytes()
        ).decode("ascii"),
    }
    Path(path).write_text(json.dumps(payload), encoding="utf-8")


def load_index(path: str | Path) -> CorpusIndex:
    try:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise IngestionError(f"cannot load index: {exc}") from exc
    if payload.get("format") != "bioquery-index":
        raise IngestionError("not an index file")
    if payload.get("version") != INDEX_FORMAT_VERSION:
        raise IngestionError(f"unsupported index version {payload.get('version')}")
    documents = [
        Document(
            id=d["id"],
            title=d["title"],
            abstract=d["abstract"],
            access_link=d["link"],
            year=int(d["year"]),
        )
        for d in payload["documents"]
    ]
    dim = int(payload["dim"])
    raw = base64.b64decode(payload["vectors_b64"])
    vectors = np.frombuffer(raw, dtype=np.float64).reshape(len(documents), dim).copy()
    return CorpusIndex(
        documents=documents,
        vectors=vectors,
        dim=dim,
        embedder_signature=payload["embedder_signature"],
    )
