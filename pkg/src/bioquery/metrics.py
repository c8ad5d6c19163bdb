"""Retrieval evaluation: findability, bias, hit rate, MRR, FAIR success rate.

A run is a set of per-query records (query id, the query's one relevant
document, and the ranked ids the system returned), plus the cutoff k and
the number of queries per document m. All metrics are pure functions of
that data.

Conventions pinned here:
  - ranks count from 1;
  - per-document findability is normalized by m so it lives in [0, 1]
    (a query whose relevant document is absent from the ranked list, or
    ranked below the cutoff, contributes 0);
  - MRR uses the full ranked list (absence contributes 0; no cutoff);
  - the bias is the Gini coefficient over per-document findability,
    computed on ascending-sorted values so equal inputs give exactly 0.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import MetricsError


@dataclass(frozen=True)
class QueryRecord:
    query_id: str
    relevant_doc_id: str
    ranked_doc_ids: tuple[str, ...]

    def __post_init__(self) -> None:
        if len(set(self.ranked_doc_ids)) != len(self.ranked_doc_ids):
            raise MetricsError(f"query {self.query_id}: duplicate ids in ranked list")


@dataclass
class RetrievalRun:
    records: list[QueryRecord]
    k: int = 4
    m: int = 4

    def __post_init__(self) -> None:
        if self.k < 1:
            raise MetricsError("cutoff k must be >= 1")
        if self.m < 1:
            raise MetricsError("queries-per-document m must be >= 1")

    def doc_ids(self) -> list[str]:
        """Documents appearing as relevant, in first-appearance order."""
        seen: dict[str, None] = {}
        for rec in self.records:
            seen.setdefault(rec.relevant_doc_id, None)
        return list(seen)


@dataclass
class MetricsReport:
    per_doc_findability: dict[str, float]
    mean_findability: float
    findability_bias: float
    hit_rate: float
    mrr: float
    n_docs: int = 0
    n_queries: int = 0
    label: str = ""

    def as_dict(self) -> dict:
        return {
            "label": self.label,
            "n_docs": self.n_docs,
            "n_queries": self.n_queries,
            "mean_findability": self.mean_findability,
            "findability_bias": self.findability_bias,
            "hit_rate": self.hit_rate,
            "mrr": self.mrr,
            "per_doc_findability": self.per_doc_findability,
        }


def _rank_of(rec: QueryRecord) -> int | None:
    """1-based rank of the relevant document, or None when absent."""
    try:
        return rec.ranked_doc_ids.index(rec.relevant_doc_id) + 1
    except ValueError:
        return None


def findability(run: RetrievalRun, doc_id: str) -> float:
    """Mean reciprocal rank over the document's own queries, cutoff-aware."""
    ranks = [
        _rank_of(rec) for rec in run.records if rec.relevant_doc_id == doc_id
    ]
    if not ranks:
        raise MetricsError(f"document {doc_id!r} has no queries in this run")
    total = sum(1.0 / r for r in ranks if r is not None and r <= run.k)
    return total / run.m


def mean_findability(run: RetrievalRun) -> float:
    docs = run.doc_ids()
    if not docs:
        raise MetricsError("empty run")
    return sum(findability(run, d) for d in docs) / len(docs)


def findability_bias(f_values: list[float]) -> float:
    """Gini coefficient of the findability scores.

    Values are sorted ascending first; the estimator is order-sensitive
    and only the sorted form makes uniform input give exactly 0.
    """
    if not f_values:
        raise MetricsError("no findability values")
    total = sum(f_values)
    if total <= 0:
        raise MetricsError("bias is undefined when all findability scores are 0")
    ordered = sorted(f_values)
    n = len(ordered)
    acc = sum((2 * i - n - 1) * f for i, f in enumerate(ordered, start=1))
    return acc / (n * total)


def hit_rate(run: RetrievalRun) -> float:
    """Fraction of queries whose relevant document is in the top-k."""
    if not run.records:
        raise MetricsError("empty run")
    hits = 0
    for rec in run.records:
        r = _rank_of(rec)
        if r is not None and r <= run.k:
            hits += 1
    return hits / len(run.records)


def mrr(run: RetrievalRun) -> float:
    """Mean reciprocal rank of the relevant document per query."""
    if not run.records:
        raise MetricsError("empty run")
    total = 0.0
    for rec in run.records:
        r = _rank_of(rec)
        if r is not None:
            total += 1.0 / r
    return total / len(run.records)


def fair_success_rate(satisfied: int, applicable: int) -> float:
    """100 * satisfied / applicable, as a percentage."""
    if applicable < 1:
        raise MetricsError("no applicable maturity indicators")
    if not 0 <= satisfied <= applicable:
        raise MetricsError("satisfied count outside [0, applicable]")
    return 100.0 * satisfied / applicable


def compute_report(run: RetrievalRun, label: str = "") -> MetricsReport:
    per_doc = {d: findability(run, d) for d in run.doc_ids()}
    return MetricsReport(
        per_doc_findability=per_doc,
        mean_findability=sum(per_doc.values()) / len(per_doc),
        findability_bias=findability_bias(list(per_doc.values())),
        hit_rate=hit_rate(run),
        mrr=mrr(run),
        n_docs=len(per_doc),
        n_queries=len(run.records),
        label=label,
    )


def load_run_file(path: str | Path, k: int = 4, m: int = 4) -> RetrievalRun:
    """Read a line-delimited run file.

    Each line is a JSON object {"query_id", "relevant_doc_id", "ranked"}.
    An optional first line {"type": "header", "k": ..., "m": ...}
    overrides the defaults.
    """
    lines = [ln for ln in Path(path).read_text(encoding="utf-8").splitlines() if ln.strip()]
    return parse_run_lines(lines, k=k, m=m)


def parse_run_lines(lines: list[str], k: int = 4, m: int = 4) -> RetrievalRun:
    records: list[QueryRecord] = []
    for i, line in enumerate(lines):
        try:
            raw = json.loads(line)
        except json.JSONDecodeError as exc:
            raise MetricsError(f"run line {i + 1} is not valid JSON: {exc}") from exc
        if i == 0 and isinstance(raw, dict) and raw.get("type") == "header":
            k = int(raw.get("k", k))
            m = int(raw.get("m", m))
            continue
        try:
            records.append(
                QueryRecord(
                    query_id=str(raw["query_id"]),
                    relevant_doc_id=str(raw["relevant_doc_id"]),
                    ranked_doc_ids=tuple(str(x) for x in raw["ranked"]),
                )
            )
        except KeyError as exc:
            raise MetricsError(f"run line {i + 1} missing field {exc}") from exc
    return RetrievalRun(records=records, k=k, m=m)


def render_report_table(reports: list[MetricsReport]) -> str:
    """Plain-text table with the standard metric column layout."""
    headers = ["Model", "Mean Findability", "Findability Bias", "Hit Rate", "MRR"]
    rows = [
        [
            r.label or "-",
            f"{r.mean_findability:.3f}",
            f"{r.findability_bias:.3f}",
            f"{r.hit_rate:.3f}",
            f"{r.mrr:.3f}",
        ]
        for r in reports
    ]
    widths = [max(len(h), *(len(row[i]) for row in rows)) if rows else len(h) for i, h in enumerate(headers)]
    def fmt(cells: list[str]) -> str:
        return " | ".join(c.ljust(w) for c, w in zip(cells, widths))
    lines = [fmt(headers), "-+-".join("-" * w for w in widths)]
    lines.extend(fmt(row) for row in rows)
    return "\n".join(lines)
