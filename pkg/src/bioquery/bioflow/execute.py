"""BioFlow executor: materialize extracts, join, filter, project.

Join semantics: inner equi-join across with-clauses on all schema-matched
column pairs, folded left in clause order; zero matched columns is a
"no join path" error, never a silent cross product. Joined output is
sorted by the join-key tuple then by source row order; a single-extract
query passes the wrapper table through in its original order.

Predicates: `=` is exact equality (numeric when the column is numeric),
`like` is case-insensitive substring. An `=` predicate whose literal
equals the plan's source search term is already enforced by the sources
themselves (the term is what was submitted to them) and is not re-applied
as a row filter.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Protocol

from ..errors import ExecutionError, NoJoinPathError, TableError
from ..table import Column, DataTable
from .ast import BioFlowQuery, ExtractClause
from .plan import SynonymTable, load_synonyms, schema_match, validate_registry_names


class WrapperFacade(Protocol):
    """What the executor needs from the wrapping layer."""

    retrieval_term: str | None

    def materialize(self, clause: ExtractClause) -> DataTable: ...


class TableRegistryFacade:
    """In-memory facade: source url -> pre-built table (tests, follow-ups)."""

    def __init__(self, tables: dict[str, DataTable], retrieval_term: str | None = None):
        self.tables = tables
        self.retrieval_term = retrieval_term

    def materialize(self, clause: ExtractClause) -> DataTable:
        try:
            return self.tables[clause.source_url]
        except KeyError:
            raise ExecutionError(f"no table registered for {clause.source_url}") from None


@dataclass
class _Materialized:
    alias: str
    table: DataTable
    source_url: str


@dataclass
class ExecutionReport:
    source_failures: dict[str, str] = field(default_factory=dict)
    join_columns: list[str] = field(default_factory=list)
    skipped_predicates: list[str] = field(default_factory=list)


def _resolve_column(name: str, columns: list[str], synonyms: SynonymTable) -> str | None:
    for c in columns:
        if c == name:
            return c
    lowered = {c.lower(): c for c in columns}
    if name.lower() in lowered:
        return lowered[name.lower()]
    match = schema_match([name], columns, synonyms)
    if match.pairs:
        return match.pairs[0][1]
    return None


def _project_attributes(
    mat: _Materialized, clause: ExtractClause, synonyms: SynonymTable
) -> DataTable:
    """Select and rename the extract's attributes out of the raw table."""
    mapping: dict[str, str] = {}
    missing: list[str] = []
    for attr in clause.attributes:
        col = _resolve_column(attr, mat.table.column_names, synonyms)
        if col is None or col in mapping.values():
            missing.append(attr)
        else:
            mapping[attr] = col
    if missing:
        raise ExecutionError(
            f"source {mat.alias!r} has no column matching {', '.join(repr(m) for m in missing)}"
        )
    projected = mat.table.project([mapping[a] for a in clause.attributes])
    renamed = projected.rename({mapping[a]: a for a in clause.attributes})
    renamed.provenance = {
        "columns": {a: f"{mat.alias}:{mapping[a]}" for a in clause.attributes},
        "source": mat.source_url,
    }
    return renamed


def _join_key(cell):
    if cell is None:
        return None
    if isinstance(cell, bool):
        return ("s", str(cell))
    if isinstance(cell, (int, float)):
        return ("n", float(cell))
    return ("s", str(cell))


def _equi_join(
    left: DataTable,
    right: DataTable,
    pairs: list[tuple[str, str]],
    left_order: list[tuple],
    right_alias: str,
) -> tuple[DataTable, list[tuple]]:
    """Hash inner join; keeps the left copy of each matched column."""
    li = [left.column_index(a) for a, _ in pairs]
    ri = [right.column_index(b) for _, b in pairs]
    drop = set(ri)
    keep_right = [i for i in range(len(right.columns)) if i not in drop]

    buckets: dict[tuple, list[int]] = {}
    for idx, row in enumerate(right.rows):
        key = tuple(_join_key(row[i]) for i in ri)
        if any(k is None for k in key):
            continue
        buckets.setdefault(key, []).append(idx)

    out_rows: list[list] = []
    out_order: list[tuple] = []
    for lidx, row in enumerate(left.rows):
        key = tuple(_join_key(row[i]) for i in li)
        if any(k is None for k in key):
            continue
        for ridx in buckets.get(key, ()):  # source order within a key
            out_rows.append(list(row) + [right.rows[ridx][i] for i in keep_right])
            out_order.append((key, *left_order[lidx], ridx))

    columns = list(left.columns) + [right.columns[i] for i in keep_right]
    prov_cols = dict(left.provenance.get("columns", {}))
    right_cols = right.provenance.get("columns", {})
    for i in keep_right:
        name = right.columns[i].name
        prov_cols[name] = right_cols.get(name, f"{right_alias}:{name}")
    joined = DataTable(columns, out_rows, {"columns": prov_cols})
    return joined, out_order


def _apply_predicate(table: DataTable, column: str, op: str, literal, synonyms) -> DataTable:
    col = _resolve_column(column, table.column_names, synonyms)
    if col is None:
        raise ExecutionError(f"predicate column {column!r} not in result schema")
    idx = table.column_index(col)
    col_type = table.columns[idx].type

    if op == "=":
        if col_type in ("integer", "real") and not isinstance(literal, (int, float)):
            try:
                literal = float(literal)
            except (TypeError, ValueError):
                raise ExecutionError(
                    f"literal {literal!r} does not parse against numeric column {col!r}"
                ) from None

        def keep(cell) -> bool:
            if cell is None:
                return False
            if isinstance(cell, (int, float)) and isinstance(literal, (int, float)):
                return float(cell) == float(literal)
            return str(cell) == str(literal)

    elif op == "like":
        needle = str(literal).lower()

        def keep(cell) -> bool:
            return cell is not None and needle in str(cell).lower()

    else:  # pragma: no cover - parser only emits = and like
        raise ExecutionError(f"unsupported operator {op!r}")

    rows = [row for row in table.rows if keep(row[idx])]
    return DataTable(list(table.columns), rows, dict(table.provenance))


def execute(
    plan: BioFlowQuery,
    wrapper: WrapperFacade,
    kb=None,
    synonyms: SynonymTable | None = None,
    report: ExecutionReport | None = None,
) -> DataTable:
    """Run a BioFlow query through the wrapper facade.

    Per-source wrapper failures are tolerated and recorded on the report;
    the whole query fails only when a selected column's source failed (or
    when nothing materialized at all).
    """
    synonyms = synonyms or load_synonyms()
    report = report if report is not None else ExecutionReport()
    validate_registry_names(plan)

    materialized: list[_Materialized] = []
    for wc in plan.with_clauses:
        try:
            raw = wrapper.materialize(wc.extract)
            mat = _Materialized(alias=wc.alias, table=raw, source_url=wc.extract.source_url)
            materialized.append(
                _Materialized(
                    alias=wc.alias,
                    table=_project_attributes(mat, wc.extract, synonyms),
                    source_url=wc.extract.source_url,
                )
            )
        except Exception as exc:  # per-source partial failure
            report.source_failures[wc.alias] = str(exc)

    if not materialized:
        raise ExecutionError(
            "every source failed: "
            + "; ".join(f"{a}: {m}" for a, m in report.source_failures.items())
        )

    current = materialized[0].table
    order: list[tuple] = [(i,) for i in range(current.n_rows)]
    joined = len(materialized) > 1
    for nxt in materialized[1:]:
        match = schema_match(current.column_names, nxt.table.column_names, synonyms)
        if not match.pairs:
            raise NoJoinPathError(
                f"no join path between accumulated result and {nxt.alias!r}"
            )
        report.join_columns.extend(a for a, _ in match.pairs if a not in report.join_columns)
        current, order = _equi_join(current, nxt.table, match.pairs, order, nxt.alias)

    if joined:
        ranked = sorted(range(len(current.rows)), key=lambda i: order[i])
        current = DataTable(
            list(current.columns),
            [current.rows[i] for i in ranked],
            dict(current.provenance),
        )

    search_term = (wrapper.retrieval_term or "").lower()
    for pred in plan.where_predicates:
        if (
            pred.op == "="
            and isinstance(pred.literal, str)
            and search_term
            and pred.literal.lower() == search_term
        ):
            # This predicate is the search term the sources were queried
            # with; the extracts already enforced it.
            report.skipped_predicates.append(pred.render())
            continue
        current = _apply_predicate(current, pred.column, pred.op, pred.literal, synonyms)

    select_cols: list[str] = []
    unresolved: list[str] = []
    for name in plan.select_columns:
        col = _resolve_column(name, current.column_names, synonyms)
        if col is None:
            unresolved.append(name)
        else:
            select_cols.append(col)
    if unresolved:
        detail = f"selected columns not available: {', '.join(unresolved)}"
        if report.source_failures:
            detail += " (failed sources: " + ", ".join(
                f"{a}: {m}" for a, m in report.source_failures.items()
            ) + ")"
        raise ExecutionError(detail)

    try:
        result = current.project(select_cols)
    except TableError as exc:
        raise ExecutionError(str(exc)) from exc
    result = result.rename(dict(zip(select_cols, plan.select_columns)))
    result.provenance.setdefault("method", "bioflow")
    if report.source_failures:
        result.provenance["partial_failures"] = dict(report.source_failures)
    return result
