"""Embedding backends and vector similarity.

Two interchangeable backends sit behind one contract: a deterministic
feature-hashing embedder (the default; no network, bit-identical across
platforms) and a remote HTTP embedder for provider-hosted models. Indexes
record which backend produced their vectors so mixed-backend scoring is
refused instead of silently producing incomparable numbers.
"""

from __future__ import annotations

import time
from typing import Iterable, Protocol

import numpy as np
import requests

from ._text import stable_bucket, tokenize
from .errors import EmbeddingError, TransportError

DEFAULT_DIM = 1024


class EmbeddingBackend(Protocol):
    """Contract every embedder satisfies."""

    dim: int

    @property
    def signature(self) -> str:
        """Identity string stored on indexes to prevent backend mixing."""
        ...

    def embed(self, text: str) -> np.ndarray: ...


class HashingEmbedder:
    """Deterministic hash-count-normalize embedder.

    Tokenize on non-alphanumeric boundaries, lowercase, hash each token
    into one of ``dim`` buckets (FNV-1a), count occurrences, L2-normalize.
    """

    def __init__(self, dim: int = DEFAULT_DIM):
        if dim < 1:
            raise EmbeddingError("dim must be positive")
        self.dim = dim

    @property
    def signature(self) -> str:
        return f"hash-fnv1a:{self.dim}"

    def embed(self, text: str) -> np.ndarray:
        if not text or not text.strip():
            raise EmbeddingError("cannot embed empty text")
        vec = np.zeros(self.dim, dtype=np.float64)
        tokens = tokenize(text)
        if not tokens:
            raise EmbeddingError("text has no alphanumeric tokens")
        for tok in tokens:
            vec[stable_bucket(tok, self.dim)] += 1.0
        vec /= np.linalg.norm(vec)
        return vec


class RemoteEmbedder:
    """HTTP embedding backend; returns the provider vector verbatim.

    POSTs ``{"model": ..., "input": [text]}`` to ``base_url`` and reads
    ``{"data": [{"embedding": [...]}]}``. Transport failures are retried
    with exponential backoff, then surfaced as TransportError.
    """

    def __init__(
        self,
        base_url: str,
        model: str,
        dim: int,
        api_key: str | None = None,
        timeout: float = 30.0,
        retries: int = 3,
        session: requests.Session | None = None,
    ):
        self.base_url = base_url.rstrip("/")
        self.model = model
        self.dim = dim
        self.api_key = api_key
        self.timeout = timeout
        self.retries = retries
        self._session = session or requests.Session()

    @property
    def signature(self) -> str:
        return f"remote:{self.model}:{self.dim}"

    def embed(self, text: str) -> np.ndarray:
        if not text or not text.strip():
            raise EmbeddingError("cannot embed empty text")
        headers = {}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        last_exc: Exception | None = None
        for attempt in range(self.retries):
            try:
                resp = self._session.post(
                    self.base_url,
                    json={"model": self.model, "input": [text]},
                    headers=headers,
                    timeout=self.timeout,
                )
                if resp.status_code >= 500 or resp.status_code == 429:
                    raise TransportError(f"embedding endpoint returned {resp.status_code}")
                resp.raise_for_status()
                payload = resp.json()
                values = payload["data"][0]["embedding"]
                vec = np.asarray(values, dtype=np.float64)
                if vec.shape != (self.dim,):
                    raise EmbeddingError(
                        f"provider returned dim {vec.shape[0]}, expected {self.dim}"
                    )
                if not np.all(np.isfinite(vec)):
                    raise EmbeddingError("provider returned non-finite components")
                return vec
            except (requests.RequestException, TransportError) as exc:
                last_exc = exc
                if attempt < self.retries - 1:
                    time.sleep(0.2 * (2**attempt))
        raise TransportError(f"embedding backend unreachable: {last_exc}")


def embed_text(text: str, backend: EmbeddingBackend) -> np.ndarray:
    """Embed one text with the given backend (empty text is an error)."""
    return backend.embed(text)


def cosine_similarity(a: np.ndarray, b: np.ndarray) -> float:
    """dot(a,b) / (|a||b|), clamped into [-1, 1].

    Zero vectors are an error, not 0: a silent 0 would hide tokenizer
    failures upstream.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise EmbeddingError(f"dimension mismatch: {a.shape} vs {b.shape}")
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        raise EmbeddingError("cosine of a zero vector is undefined")
    return float(np.clip(np.dot(a, b) / (na * nb), -1.0, 1.0))


def embed_many(
    texts: Iterable[str], backend: EmbeddingBackend, workers: int = 1
) -> list[np.ndarray]:
    """Embed several texts, optionally with a bounded worker pool.

    Results are returned in input order regardless of completion order.
    """
    texts = list(texts)
    if workers <= 1 or len(texts) <= 1:
        return [backend.embed(t) for t in texts]
    from concurrent.futures import ThreadPoolExecutor

    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(backend.embed, texts))
