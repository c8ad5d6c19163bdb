"""BioFlow: the declarative integration layer.

extract clauses materialize one relational table per source through named
matcher/filler/wrapper functions; the enclosing select/with layer joins,
filters and projects the results.
"""

from .ast import BioFlowQuery, ExtractClause, Predicate, WithClause, render_query
from .parse import parse_bioflow
from .plan import SynonymTable, compile_plan, load_synonyms, schema_match
from .execute import execute, TableRegistryFacade

__all__ = [
    "BioFlowQuery",
    "ExtractClause",
    "Predicate",
    "WithClause",
    "render_query",
    "parse_bioflow",
    "SynonymTable",
    "schema_match",
    "compile_plan",
    "load_synonyms",
    "execute",
    "TableRegistryFacade",
]
