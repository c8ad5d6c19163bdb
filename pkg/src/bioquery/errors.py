"""Typed error taxonomy shared across the engine.

Fetch errors mirror the failure classes observed against live sources
(not-found, bad-gateway, timeout); everything else is a module-specific
subclass of EngineError so callers can catch one family per concern.
"""

from __future__ import annotations


class EngineError(Exception):
    """Base class for all engine failures."""

    #: short machine-readable class, used in run records and step logs
    code = "engine_error"


class IngestionError(EngineError):
    code = "ingestion_error"


class EmbeddingError(EngineError):
    code = "embedding_error"


class TransportError(EngineError):
    """A remote backend could not be reached; retryable."""

    code = "transport_error"


class BackendUnavailableError(TransportError):
    """Every issued request failed at the transport level."""

    code = "backend_unavailable"


class SchemaValidationError(EngineError):
    """A generative backend returned output that failed schema validation."""

    code = "schema_validation"


class NoCandidatesError(EngineError):
    """Retrieval and keyword search both produced nothing."""

    code = "no_candidates"


class FetchError(TransportError):
    """Base class for HTTP access failures."""

    code = "fetch_error"

    def __init__(self, message: str, url: str = "", status: int | None = None):
        super().__init__(message)
        self.url = url
        self.status = status


class NotFoundError(FetchError):
    code = "not_found"


class BadGatewayError(FetchError):
    code = "bad_gateway"


class FetchTimeoutError(FetchError):
    code = "timeout"


class TableError(EngineError):
    code = "table_error"


class ParseError(EngineError):
    """Syntax error in a DSL source, carrying position and expectation."""

    code = "parse_error"

    def __init__(self, message: str, line: int, column: int, expected: list[str] | None = None):
        super().__init__(message)
        self.line = line
        self.column = column
        self.expected = expected or []

    def __str__(self) -> str:  # pragma: no cover - cosmetic
        base = super().__str__()
        return f"{base} (line {self.line}, column {self.column})"


class SemanticError(EngineError):
    """Well-formed DSL source violating a semantic rule."""

    code = "semantic_error"


class CompileError(EngineError):
    code = "compile_error"


class NoJoinPathError(CompileError):
    code = "no_join_path"


class ExecutionError(EngineError):
    code = "execution_error"


class FormError(EngineError):
    code = "form_error"


class UnsuitableSourceError(EngineError):
    """A resource could not be wrapped into a table by any strategy."""

    code = "unsuitable_source"

    def __init__(self, message: str, error_class: str = "no_data"):
        super().__init__(message)
        self.error_class = error_class


class RunStateError(EngineError):
    """An operation was applied to a run in the wrong lifecycle state."""

    code = "run_state"


class SessionExpiredError(EngineError):
    code = "session_expired"


class MetricsError(EngineError):
    code = "metrics_error"
