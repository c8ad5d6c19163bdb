"""Combinatorial keyword search against a bibliographic backend.

Starting from the full conjunction, drop one keyword per round: sizes run
from |K| down to the minimum L, combinations enumerated in lexicographic
order by keyword position. The first non-empty result wins; a per-run
query budget caps the blowup for large keyword sets.
"""

from __future__ import annotations

import itertools
import re
import time
from dataclasses import dataclass, field
from typing import Protocol

from .corpus import CorpusIndex, Document
from .errors import BackendUnavailableError, TransportError


@dataclass
class KeywordQueryResult:
    records: list[Document]
    issued_query: str
    combo_size: int
    page_size: int | None = None


@dataclass
class SearchTrace:
    """Optional audit sink: every issued query and the run outcome."""

    issued: list[str] = field(default_factory=list)
    errors: list[str] = field(default_factory=list)
    budget_exhausted: bool = False


class KeywordBackend(Protocol):
    def search(self, terms: list[str]) -> list[Document]: ...


def combinatorial_search(
    keywords: list[str],
    backend: KeywordBackend,
    minimum: int = 2,
    budget: int = 64,
    trace: SearchTrace | None = None,
) -> KeywordQueryResult | None:
    """First non-empty conjunctive result, shrinking the conjunction.

    Returns None when every combination down to the minimum size came back
    empty (or the budget ran out; the trace records which). Transport
    failures skip the single combination; if every issued query failed at
    the transport level the distinct BackendUnavailableError is raised
    instead of returning None.
    """
    if not keywords:
        raise ValueError("keyword set is empty")
    n = len(keywords)
    minimum = max(1, minimum)
    if minimum > n:
        raise ValueError(f"minimum combination size {minimum} exceeds |K|={n}")
    trace = trace if trace is not None else SearchTrace()

    issued = 0
    transport_failures = 0
    for size in range(n, minimum - 1, -1):
        for combo in itertools.combinations(keywords, size):
            if issued >= budget:
                trace.budget_exhausted = True
                return None
            query_text = " AND ".join(combo)
            trace.issued.append(query_text)
            issued += 1
            try:
                records = backend.search(list(combo))
            except TransportError as exc:
                transport_failures += 1
                trace.errors.append(f"{query_text}: {exc}")
                continue
            if records:
                return KeywordQueryResult(
                    records=records,
                    issued_query=query_text,
                    combo_size=size,
                    page_size=getattr(backend, "page_size", None),
                )
    if issued > 0 and transport_failures == issued:
        raise BackendUnavailableError(
            f"all {issued} keyword queries failed at the transport level"
        )
    return None


class LocalBooleanBackend:
    """Conjunctive keyword search over the corpus itself.

    A document matches when its title+abstract contains every term as a
    whole token (case-insensitive, token-boundary match). The test and
    offline stand-in for the remote bibliographic API.
    """

    def __init__(self, corpus: CorpusIndex):
        self._docs = list(corpus.documents)
        self._texts = [f"{d.title} {d.abstract}".lower() for d in self._docs]

    def search(self, terms: list[str]) -> list[Document]:
        if not terms:
            raise ValueError("empty conjunction is not allowed")
        patterns = [
            re.compile(r"\b" + re.escape(term.lower()) + r"\b") for term in terms
        ]
        out = []
        for doc, text in zip(self._docs, self._texts):
            if all(p.search(text) for p in patterns):
                out.append(doc)
        return out


class RemoteBibliographicBackend:
    """Adapter for a key-gated bibliographic search HTTP API.

    GETs ``base_url?term=<kw1 AND kw2...>&retmax=<page_size>`` and expects
    ``{"records": [{"id", "title", "abstract", "link", "year"}, ...]}``.
    Requests are spaced at least ``min_interval`` seconds apart and
    throttle responses back off exponentially.
    """

    def __init__(
        self,
        base_url: str,
        api_key: str | None = None,
        page_size: int = 20,
        min_interval: float = 0.35,
        retries: int = 3,
        timeout: float = 30.0,
        session=None,
    ):
        import requests

        self.base_url = base_url
        self.api_key = api_key
        self.page_size = page_size
        self.min_interval = min_interval
        self.retries = retries
        self.timeout = timeout
        self._session = session or requests.Session()
        self._last_request = 0.0

    def _pace(self) -> None:
        wait = self._last_request + self.min_interval - time.monotonic()
        if wait > 0:
            time.sleep(wait)
        self._last_request = time.monotonic()

    def search(self, terms: list[str]) -> list[Document]:
        import requests

        if not terms:
            raise ValueError("empty conjunction is not allowed")
        params = {"term": " AND ".join(terms), "retmax": str(self.page_size)}
        if self.api_key:
            params["api_key"] = self.api_key
        last: Exception | None = None
        for attempt in range(self.retries):
            self._pace()
            try:
                resp = self._session.get(self.base_url, params=params, timeout=self.timeout)
            except requests.RequestException as exc:
                raise TransportError(f"bibliographic backend unreachable: {exc}") from exc
            if resp.status_code == 429:
                last = TransportError("throttled (429)")
                time.sleep(0.5 * (2**attempt))
                continue
            if resp.status_code >= 500:
                raise TransportError(f"bibliographic backend returned {resp.status_code}")
            try:
                payload = resp.json()
                records = payload["records"]
            except (ValueError, KeyError) as exc:
                raise TransportError(f"malformed backend response: {exc}") from exc
            out = []
            for raw in records:
                out.append(
                    Document(
                        id=str(raw.get("id", "")) or f"remote-{len(out)}",
                        title=str(raw.get("title", "")),
                        abstract=str(raw.get("abstract", "")),
                        access_link=str(raw.get("link", "")) or "unknown",
                        year=int(raw.get("year", 2000) or 2000),
                    )
                )
            return out
        raise TransportError(f"bibliographic backend kept throttling: {last}")


def local_boolean_backend(corpus: CorpusIndex) -> LocalBooleanBackend:
    return LocalBooleanBackend(corpus)
