"""BioFlow AST and canonical printer."""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class Predicate:
    column: str
    op: str  # "=" or "like"
    literal: str | int | float

    def render(self) -> str:
        if isinstance(self.literal, str):
            lit = "'" + self.literal.replace("'", "''") + "'"
        else:
            lit = repr(self.literal)
        return f"{self.column} {self.op} {lit}"


@dataclass(frozen=True)
class ExtractClause:
    attributes: tuple[str, ...]
    matcher: str
    wrapper: str
    source_url: str
    submit_binding: str
    filler: str | None = None


@dataclass(frozen=True)
class WithClause:
    alias: str
    extract: ExtractClause


@dataclass(frozen=True)
class BioFlowQuery:
    with_clauses: tuple[WithClause, ...]
    select_columns: tuple[str, ...]
    where_predicates: tuple[Predicate, ...] = ()

    def alias_names(self) -> list[str]:
        return [w.alias for w in self.with_clauses]


def render_extract(clause: ExtractClause, indent: str) -> list[str]:
    using = f"using matcher {clause.matcher}"
    if clause.filler:
        using += f" filler {clause.filler}"
    using += f" wrapper {clause.wrapper}"
    return [
        f"{indent}extract {', '.join(clause.attributes)}",
        f"{indent}{using}",
        f"{indent}from {clause.source_url}",
        f"{indent}submit {clause.submit_binding}",
    ]


def render_query(query: BioFlowQuery) -> str:
    """Canonical text: lowercase keywords, two-space indents, `with` once.

    parse_bioflow(render_query(q)) is structurally equal to q.
    """
    lines = [f"select {', '.join(query.select_columns)}"]
    lines.append("from (")
    for i, wc in enumerate(query.with_clauses):
        head = "with " if i == 0 else ""
        lines.append(f"  {head}{wc.alias} as (")
        lines.extend(render_extract(wc.extract, "    "))
        sep = "," if i < len(query.with_clauses) - 1 else ""
        lines.append(f"  ){sep}")
    lines.append(")")
    if query.where_predicates:
        preds = " and ".join(p.render() for p in query.where_predicates)
        lines.append(f"where {preds};")
    else:
        lines[-1] += ";"
    return "\n".join(lines) + "\n"
