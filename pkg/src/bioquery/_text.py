"""Small text helpers shared by the embedder, keyword search and filters."""

from __future__ import annotations

import re

_TOKEN_RE = re.compile(r"[a-z0-9]+")

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_FNV_MASK = 0xFFFFFFFFFFFFFFFF


def tokenize(text: str) -> list[str]:
    """Lowercase alphanumeric runs; everything else is a boundary."""
    return _TOKEN_RE.findall(text.lower())


def stable_bucket(token: str, dim: int) -> int:
    """Bucket for a token: FNV-1a 64-bit plus an avalanche finalizer.

    Python's built-in hash() is salted per process, so a fixed hash is
    required for bit-identical vectors across runs and platforms. Raw
    FNV-1a mixes its low bits poorly and dims are often powers of two,
    so the state is finished with the splitmix64 mixer before reduction.
    """
    h = _FNV_OFFSET
    for b in token.encode("utf-8"):
        h = ((h ^ b) * _FNV_PRIME) & _FNV_MASK
    h ^= h >> 30
    h = (h * 0xBF58476D1CE4E5B9) & _FNV_MASK
    h ^= h >> 27
    h = (h * 0x94D049BB133111EB) & _FNV_MASK
    h ^= h >> 31
    return h % dim


def normalize_identifier(name: str) -> str:
    """Strip non-alphanumerics, preserve case: "Entry Name" -> "EntryName"."""
    return re.sub(r"[^A-Za-z0-9]+", "", name)


def normalize_for_match(name: str) -> str:
    """Lowercased, non-alphanumerics stripped; the schema-match key."""
    return re.sub(r"[^a-z0-9]+", "", name.lower())
