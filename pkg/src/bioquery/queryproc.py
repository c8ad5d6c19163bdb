"""Query processing: free-form text to retrieval query, expansions, keywords.

With the deterministic fixture assistant the whole pipeline is a pure
function of (query, index): repeated calls yield identical bundles.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from ._text import tokenize
from .assistant import GenerativeBackend
from .corpus import CorpusIndex, Document, top_n
from .embedding import EmbeddingBackend
from .errors import EmbeddingError, SchemaValidationError

DEFAULT_EXPANSION_K = 5
DEFAULT_CONTEXT_N = 4


@dataclass
class QueryBundle:
    original: str
    retrieval_query: str
    expanded: list[str]
    keywords: list[str]
    contexts: list[str] = field(default_factory=list)
    provenance: dict = field(default_factory=dict)


def _check_backend(index: CorpusIndex, embedder: EmbeddingBackend) -> None:
    if index.embedder_signature != embedder.signature:
        raise EmbeddingError(
            "index was built with a different embedding backend "
            f"({index.embedder_signature} vs {embedder.signature}); "
            "mixed-backend scores are not comparable"
        )


def extract_keywords(query: str, assistant: GenerativeBackend) -> list[str]:
    """Lowercase, deduplicated keywords, each at least 2 characters."""
    if not query or not query.strip():
        raise ValueError("empty query")
    raw = assistant.reformulate(query).keywords
    out: list[str] = []
    for kw in raw:
        kw = kw.strip().lower()
        if len(kw) >= 2 and kw not in out:
            out.append(kw)
    if not out:
        raise SchemaValidationError("no usable keywords; keyword search cannot proceed")
    return out


def expand_queries(
    retrieval_query: str,
    contexts: list[Document],
    assistant: GenerativeBackend,
    k: int = DEFAULT_EXPANSION_K,
) -> tuple[list[str], bool]:
    """Exactly k distinct non-empty expansions.

    When the assistant comes up short, expansions are padded by a
    deterministic paraphrase rule (retrieval query plus context title
    terms); the returned flag records that padding happened.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    raw = assistant.expand(retrieval_query, contexts, k)
    out: list[str] = []
    for item in raw:
        item = item.strip()
        if item and item not in out:
            out.append(item)
        if len(out) == k:
            break
    padded = False
    if len(out) < k:
        padded = True
        fillers: list[str] = []
        for ctx in contexts:
            for term in tokenize(ctx.title):
                candidate = f"{retrieval_query} {term}"
                if candidate not in out and candidate not in fillers:
                    fillers.append(candidate)
        i = 0
        while len(out) < k:
            if i < len(fillers):
                out.append(fillers[i])
                i += 1
            else:
                out.append(f"{retrieval_query} variant {len(out) + 1}")
    return out[:k], padded


def process_query(
    query: str,
    assistant: GenerativeBackend,
    index: CorpusIndex,
    embedder: EmbeddingBackend,
    k: int = DEFAULT_EXPANSION_K,
    n_contexts: int = DEFAULT_CONTEXT_N,
    knowledge: str | None = None,
) -> QueryBundle:
    """Reformulate, retrieve expansion contexts, expand, extract keywords."""
    if not query or not query.strip():
        raise ValueError("empty query")
    _check_backend(index, embedder)

    result = assistant.reformulate(query, knowledge)
    retrieval_query = result.retrieval_query.strip()
    if not retrieval_query:
        raise SchemaValidationError("assistant produced an empty retrieval query")

    keywords: list[str] = []
    for kw in result.keywords:
        kw = kw.strip().lower()
        if len(kw) >= 2 and kw not in keywords:
            keywords.append(kw)
    if not keywords:
        raise SchemaValidationError("no usable keywords; keyword search cannot proceed")

    contexts: list[Document] = []
    if len(index) > 0:
        qvec = embedder.embed(retrieval_query)
        contexts = [doc for doc, _ in top_n(index, qvec, n_contexts)]

    expanded, padded = expand_queries(retrieval_query, contexts, assistant, k)

    provenance: dict = {"knowledge_used": bool(knowledge)}
    if padded:
        provenance["expansion_padded"] = True
    return QueryBundle(
        original=query,
        retrieval_query=retrieval_query,
        expanded=expanded,
        keywords=keywords,
        contexts=[d.id for d in contexts],
        provenance=provenance,
    )
