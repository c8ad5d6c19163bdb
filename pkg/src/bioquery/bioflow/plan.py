"""Schema matching and query planning.

The schema matcher pairs columns by exact match after normalization
(lowercase, strip non-alphanumerics), then by synonym-table lookup; each
column is matched at most once. The planner compiles identified resources
plus their known output schemas (from the knowledgebase or from wrapper
discovery) into an executable BioFlow query.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from importlib import resources as importlib_resources
from pathlib import Path

from .._text import normalize_for_match, normalize_identifier
from ..errors import CompileError
from .ast import BioFlowQuery, ExtractClause, Predicate, WithClause
from .parse import parse_bioflow

DEFAULT_MATCHER = "S-match"
DEFAULT_WRAPPER = "Web-Prospector"

#: registry of resolvable function names (lowercased); execution refuses
#: anything else at compile time
KNOWN_MATCHERS = {"s-match"}
KNOWN_WRAPPERS = {"web-prospector"}
KNOWN_FILLERS = {"default"}


class SynonymTable:
    """Groups of column names that mean the same thing.

    The first name in each group is the canonical spelling used for
    planner-generated attributes.
    """

    def __init__(self, groups: list[list[str]]):
        self.groups = [list(g) for g in groups if g]
        self._group_of: dict[str, int] = {}
        for gi, group in enumerate(self.groups):
            for name in group:
                self._group_of.setdefault(normalize_for_match(name), gi)

    def group_id(self, name: str) -> int | None:
        return self._group_of.get(normalize_for_match(name))

    def canonical(self, name: str) -> str | None:
        gi = self.group_id(name)
        return normalize_identifier(self.groups[gi][0]) if gi is not None else None

    def same_group(self, a: str, b: str) -> bool:
        ga, gb = self.group_id(a), self.group_id(b)
        return ga is not None and ga == gb


def load_synonyms(path: str | Path | None = None) -> SynonymTable:
    if path is None:
        text = (
            importlib_resources.files("bioquery.data")
            .joinpath("synonyms.json")
            .read_text(encoding="utf-8")
        )
    else:
        text = Path(path).read_text(encoding="utf-8")
    return SynonymTable(json.loads(text)["groups"])


@dataclass
class MatchResult:
    pairs: list[tuple[str, str]]
    unmatched_a: list[str]
    unmatched_b: list[str]


def schema_match(
    cols_a: list[str], cols_b: list[str], synonyms: SynonymTable | None = None
) -> MatchResult:
    """Pair columns of two schemas.

    Pass 1 matches on normalized equality, pass 2 on synonym groups;
    earlier columns win contested matches, and every column is used at
    most once.
    """
    synonyms = synonyms or SynonymTable([])
    pairs: list[tuple[str, str]] = []
    used_b: set[int] = set()
    matched_a: set[int] = set()

    for ai, a in enumerate(cols_a):
        na = normalize_for_match(a)
        for bi, b in enumerate(cols_b):
            if bi in used_b:
                continue
            if normalize_for_match(b) == na:
                pairs.append((a, b))
                used_b.add(bi)
                matched_a.add(ai)
                break
    for ai, a in enumerate(cols_a):
        if ai in matched_a:
            continue
        for bi, b in enumerate(cols_b):
            if bi in used_b:
                continue
            if synonyms.same_group(a, b):
                pairs.append((a, b))
                used_b.add(bi)
                matched_a.add(ai)
                break
    unmatched_a = [a for ai, a in enumerate(cols_a) if ai not in matched_a]
    unmatched_b = [b for bi, b in enumerate(cols_b) if bi not in used_b]
    return MatchResult(pairs=pairs, unmatched_a=unmatched_a, unmatched_b=unmatched_b)


def canonical_attribute(column: str, synonyms: SynonymTable) -> str:
    """Planner-facing attribute name for a source column."""
    return synonyms.canonical(column) or normalize_identifier(column) or "column"


_ACRONYM_RE = re.compile(r"\(([A-Za-z0-9]+)\)\s*$")


def alias_for_source(source_name: str, taken: set[str]) -> str:
    """Short alias: trailing parenthesized acronym if present, else the
    first word; lowercased alphanumerics, de-duplicated with a suffix."""
    m = _ACRONYM_RE.search(source_name.strip())
    base = m.group(1) if m else (source_name.split() or ["src"])[0]
    base = re.sub(r"[^a-z0-9]", "", base.lower()) or "src"
    alias, n = base, 2
    while alias in taken:
        alias = f"{base}{n}"
        n += 1
    taken.add(alias)
    return alias


@dataclass
class PlannedSource:
    """compile_plan's view of one resource: descriptor plus known schema."""

    resource: "object"
    columns: list[str]
    alias: str = ""
    attributes: list[str] = field(default_factory=list)
    attribute_of: dict[str, str] = field(default_factory=dict)


def compile_plan(
    query_text: str,
    resources: list,
    kb,
    assistant,
    discovered_columns: dict[str, list[str]] | None = None,
    synonyms: SynonymTable | None = None,
    retrieval_term: str | None = None,
) -> BioFlowQuery:
    """Compile identified resources into a BioFlow query.

    Output schemas come from the knowledgebase when a process description
    is stored for the resource, else from ``discovered_columns`` (keyed by
    data link) produced by wrapper discovery. The assistant may supply
    structural hints; absent hints, deterministic rules apply:
    every extract lists the canonical names of all its source's columns,
    the select clause lists join keys first then per-source attributes,
    and the retrieval term becomes an equality predicate on the primary
    join key (it parameterizes source access at execution).
    """
    if not resources:
        raise CompileError("no resources to plan over")
    synonyms = synonyms or load_synonyms()
    discovered_columns = discovered_columns or {}

    planned: list[PlannedSource] = []
    taken: set[str] = set()
    for res in resources:
        columns: list[str] | None = None
        if kb is not None:
            pd = kb.lookup_url(res.data_link)
            if pd is not None:
                columns = [c.name for c in pd.output_columns]
        if columns is None:
            columns = discovered_columns.get(res.data_link)
        if not columns:
            raise CompileError(
                f"no resolvable attributes for resource {res.source_name!r} "
                f"({res.data_link}): no stored process description and no discovered schema"
            )
        ps = PlannedSource(resource=res, columns=list(columns))
        ps.alias = alias_for_source(res.source_name, taken)
        for col in columns:
            attr = canonical_attribute(col, synonyms)
            if attr not in ps.attributes:
                ps.attributes.append(attr)
                ps.attribute_of[attr] = col
        planned.append(ps)

    hints = None
    if assistant is not None and hasattr(assistant, "plan_query"):
        hints = assistant.plan_query(
            query_text,
            [
                {"source_name": p.resource.source_name, "alias": p.alias, "columns": p.columns}
                for p in planned
            ],
        )
    if hints:
        return _plan_from_hints(hints, planned)

    counts: dict[str, int] = {}
    order: list[str] = []
    for p in planned:
        for attr in p.attributes:
            if attr not in counts:
                order.append(attr)
            counts[attr] = counts.get(attr, 0) + 1
    join_keys = [a for a in order if counts[a] >= 2]

    select: list[str] = list(join_keys)
    for p in planned:
        for attr in p.attributes:
            if attr not in select:
                select.append(attr)

    term = retrieval_term
    if term is None:
        term = getattr(planned[0].resource, "retrieval_query", "") or None
    predicates: tuple[Predicate, ...] = ()
    if term:
        anchor = join_keys[0] if join_keys else planned[0].attributes[0]
        predicates = (Predicate(column=anchor, op="=", literal=term),)

    with_clauses = tuple(
        WithClause(
            alias=p.alias,
            extract=ExtractClause(
                attributes=tuple(p.attributes),
                matcher=DEFAULT_MATCHER,
                wrapper=DEFAULT_WRAPPER,
                source_url=p.resource.data_link,
                submit_binding=p.alias,
            ),
        )
        for p in planned
    )
    plan = BioFlowQuery(
        with_clauses=with_clauses,
        select_columns=tuple(select),
        where_predicates=predicates,
    )
    _check_round_trip(plan)
    return plan


def _plan_from_hints(hints: dict, planned: list[PlannedSource]) -> BioFlowQuery:
    by_alias = {p.alias: p for p in planned}
    with_clauses = []
    for alias_hint in hints.get("aliases", []):
        alias = alias_hint["alias"]
        p = by_alias.get(alias)
        if p is None:
            raise CompileError(f"assistant hint names unknown alias {alias!r}")
        attrs = tuple(alias_hint.get("attributes") or p.attributes)
        with_clauses.append(
            WithClause(
                alias=alias,
                extract=ExtractClause(
                    attributes=attrs,
                    matcher=alias_hint.get("matcher", DEFAULT_MATCHER),
                    wrapper=alias_hint.get("wrapper", DEFAULT_WRAPPER),
                    source_url=p.resource.data_link,
                    submit_binding=alias,
                ),
            )
        )
    predicates = tuple(
        Predicate(column=pr[0], op=pr[1], literal=pr[2])
        for pr in hints.get("predicates", [])
    )
    plan = BioFlowQuery(
        with_clauses=tuple(with_clauses),
        select_columns=tuple(hints.get("select") or []),
        where_predicates=predicates,
    )
    _check_round_trip(plan)
    return plan


def _check_round_trip(plan: BioFlowQuery) -> None:
    from .ast import render_query

    reparsed = parse_bioflow(render_query(plan))
    if reparsed != plan:
        raise CompileError("compiled plan does not survive render/parse round trip")


def validate_registry_names(plan: BioFlowQuery) -> None:
    """Unknown matcher/filler/wrapper names are compile-time errors."""
    for wc in plan.with_clauses:
        ex = wc.extract
        if ex.matcher.lower() not in KNOWN_MATCHERS:
            raise CompileError(f"unknown matcher {ex.matcher!r} in {wc.alias!r}")
        if ex.wrapper.lower() not in KNOWN_WRAPPERS:
            raise CompileError(f"unknown wrapper {ex.wrapper!r} in {wc.alias!r}")
        if ex.filler is not None and ex.filler.lower() not in KNOWN_FILLERS:
            raise CompileError(f"unknown filler {ex.filler!r} in {wc.alias!r}")
