"""Resource identification: merge retrieval routes, re-rank, extract
structured data-source descriptors.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass
from urllib.parse import urlparse

from .assistant import GenerativeBackend
from .corpus import CorpusIndex, Document, top_n
from .embedding import EmbeddingBackend, cosine_similarity
from .errors import NoCandidatesError, SchemaValidationError
from .keywords import KeywordBackend, SearchTrace, combinatorial_search
from .queryproc import QueryBundle

log = logging.getLogger(__name__)

DEFAULT_PER_QUERY_N = 4
DEFAULT_FINAL_CUT = 4

_HOSTISH_RE = re.compile(r"^[\w.-]+\.[A-Za-z]{2,}([/:?#].*)?$")


@dataclass(frozen=True)
class ResourceDescriptor:
    retrieval_query: str
    source_name: str
    data_link: str
    paper_title: str
    origin_doc: str | None = None
    rank_score: float = 0.0


@dataclass(frozen=True)
class ScoredDocument:
    document: Document
    score: float


def looks_like_url(text: str) -> bool:
    """Absolute URLs, host:port forms, or bare host-relative links."""
    text = text.strip()
    if not text or any(ch.isspace() for ch in text):
        return False
    parsed = urlparse(text)
    if parsed.scheme in ("http", "https") and parsed.netloc:
        return True
    return bool(_HOSTISH_RE.match(text))


def rank_candidates(
    retrieval_query: str,
    expanded: list[str],
    keywords: list[str],
    index: CorpusIndex,
    kw_backend: KeywordBackend | None,
    embedder: EmbeddingBackend,
    per_query_n: int = DEFAULT_PER_QUERY_N,
    final_cut: int = DEFAULT_FINAL_CUT,
    min_combo: int = 2,
    budget: int = 64,
    trace: SearchTrace | None = None,
) -> list[ScoredDocument]:
    """Per-expansion top-n retrieval, merge with keyword-search results,
    dedup by id (first occurrence kept), re-rank against the retrieval
    query, return the top prefix.

    Keyword-search records outside the corpus are embedded on the fly so
    their final score is computed in the same space.
    """
    if index.embedder_signature != embedder.signature:
        from .errors import EmbeddingError

        raise EmbeddingError(
            "index/embedder backend mismatch; refusing to mix embedding spaces"
        )

    merged: list[Document] = []
    seen: set[str] = set()
    seen_links: set[str] = set()

    def _link_key(doc: Document) -> str:
        parsed = urlparse(
            doc.access_link if "://" in doc.access_link else f"http://{doc.access_link}"
        )
        return f"{(parsed.hostname or '').lower()}{parsed.path.rstrip('/')}"

    def add(doc: Document) -> None:
        if doc.id in seen:
            return
        link_key = _link_key(doc)
        if doc.id not in index and link_key in seen_links:
            return
        seen.add(doc.id)
        seen_links.add(link_key)
        merged.append(doc)

    for expansion in expanded:
        qvec = embedder.embed(expansion)
        for doc, _score in top_n(index, qvec, per_query_n):
            add(doc)

    if kw_backend is not None and keywords:
        result = combinatorial_search(
            keywords, kw_backend, minimum=min_combo, budget=budget, trace=trace
        )
        if result is not None:
            for doc in result.records:
                add(doc)

    if not merged:
        raise NoCandidatesError(
            "no candidate documents: retrieval returned nothing and keyword search was null"
        )

    qvec = embedder.embed(retrieval_query)
    scored: list[ScoredDocument] = []
    for doc in merged:
        if doc.id in index:
            dvec = index.vector_for(doc.id)
        else:
            dvec = embedder.embed(doc.embedding_text())
        scored.append(ScoredDocument(doc, cosine_similarity(qvec, dvec)))
    scored.sort(key=lambda s: (-s.score, s.document.id))
    return scored[:final_cut]


def identify_resources(
    query: str,
    ranked: list[ScoredDocument],
    assistant: GenerativeBackend,
    retrieval_query: str | None = None,
) -> list[ResourceDescriptor]:
    """Structured descriptors for the ranked candidates.

    Descriptors with malformed links are dropped with a warning; an
    origin_doc outside the ranked set fails validation.
    """
    if not ranked:
        raise NoCandidatesError("cannot identify resources from an empty ranking")
    docs = [s.document for s in ranked]
    score_of = {s.document.id: s.score for s in ranked}
    term = retrieval_query if retrieval_query is not None else query
    raw = assistant.identify_resources(query, term, docs)

    out: list[ResourceDescriptor] = []
    for item in raw:
        source_name = str(item.get("source_name", "")).strip()
        data_link = str(item.get("data_link", "")).strip()
        if not source_name:
            log.warning("descriptor without source name dropped: %r", item)
            continue
        if not looks_like_url(data_link):
            log.warning(
                "descriptor %r dropped: %r is not a parseable link", source_name, data_link
            )
            continue
        origin = item.get("origin_doc")
        if origin is not None:
            origin = str(origin)
            if origin not in score_of:
                raise SchemaValidationError(
                    f"descriptor {source_name!r} names origin document {origin!r} "
                    "outside the ranked candidates"
                )
        out.append(
            ResourceDescriptor(
                retrieval_query=str(item.get("retrieval_query", "")) or term,
                source_name=source_name,
                data_link=data_link,
                paper_title=str(item.get("paper_title", "")),
                origin_doc=origin,
                rank_score=score_of.get(origin, 0.0) if origin else 0.0,
            )
        )
    return out
