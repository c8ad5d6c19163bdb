"""Process descriptions: the declarative access schemas stored per source.

Grammar (keywords case-insensitive, identifiers case-preserving):

    create process <name>
      at <url>
      access browser
      [postfix <text>]
      accepts filter ( <name> <type> {, <name> <type>} )
      returns table ( <name> <type> [primary key] {, ...} ) ;

Types are string/int (any keyword case). Unknown types are a semantic
error rather than being silently string-ified. At most one output column
may be the primary key.
"""

from __future__ import annotations

import json
import re
import threading
from dataclasses import dataclass
from pathlib import Path
from urllib.parse import urlparse

from .errors import ParseError, SemanticError

_IDENT_RE = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*$")

FILTER_TYPES = ("string", "int")
COLUMN_TYPES = ("string", "int")


@dataclass(frozen=True)
class FilterField:
    name: str
    type: str


@dataclass(frozen=True)
class OutputColumn:
    name: str
    type: str
    primary_key: bool = False


@dataclass(frozen=True)
class ProcessDescription:
    name: str
    url: str
    access_mode: str
    filters: tuple[FilterField, ...]
    output_columns: tuple[OutputColumn, ...]
    postfix: str | None = None


@dataclass
class Token:
    text: str
    line: int
    column: int

    @property
    def lower(self) -> str:
        return self.text.lower()


_PUNCT = "(),;"


def _lex(source: str) -> list[Token]:
    """Whitespace-separated words; parentheses, commas and semicolons are
    their own tokens. URLs and postfix values survive as single words."""
    tokens: list[Token] = []
    line, col = 1, 1
    word = ""
    word_line, word_col = 1, 1

    def flush() -> None:
        nonlocal word
        if word:
            tokens.append(Token(word, word_line, word_col))
            word = ""

    for ch in source:
        if ch == "\n":
            flush()
            line += 1
            col = 1
            continue
        if ch.isspace():
            flush()
        elif ch in _PUNCT:
            flush()
            tokens.append(Token(ch, line, col))
        else:
            if not word:
                word_line, word_col = line, col
            word += ch
        col += 1
    flush()
    return tokens


class _Stream:
    def __init__(self, tokens: list[Token], source: str):
        self.tokens = tokens
        self.pos = 0
        self.source = source

    def peek(self) -> Token | None:
        return self.tokens[self.pos] if self.pos < len(self.tokens) else None

    def next(self, expected: str) -> Token:
        tok = self.peek()
        if tok is None:
            last = self.tokens[-1] if self.tokens else Token("", 1, 1)
            raise ParseError(
                f"unexpected end of input, expected {expected}",
                last.line,
                last.column + len(last.text),
                [expected],
            )
        self.pos += 1
        return tok

    def expect_keyword(self, *keywords: str) -> Token:
        tok = self.next(" or ".join(keywords))
        if tok.lower not in keywords:
            raise ParseError(
                f"expected {' or '.join(keywords)!r}, found {tok.text!r}",
                tok.line,
                tok.column,
                list(keywords),
            )
        return tok

    def expect_punct(self, punct: str) -> Token:
        tok = self.next(punct)
        if tok.text != punct:
            raise ParseError(
                f"expected {punct!r}, found {tok.text!r}", tok.line, tok.column, [punct]
            )
        return tok

    def expect_identifier(self, what: str) -> Token:
        tok = self.next(what)
        if not _IDENT_RE.match(tok.text):
            raise ParseError(
                f"expected {what} identifier, found {tok.text!r}",
                tok.line,
                tok.column,
                [what],
            )
        return tok

    def expect_word(self, what: str) -> Token:
        tok = self.next(what)
        if tok.text in _PUNCT:
            raise ParseError(
                f"expected {what}, found {tok.text!r}", tok.line, tok.column, [what]
            )
        return tok


def _parse_type(stream: _Stream, vocabulary: tuple[str, ...], what: str) -> str:
    tok = stream.expect_word(f"{what} type")
    if tok.lower not in vocabulary:
        raise SemanticError(
            f"unknown {what} type {tok.text!r} at line {tok.line}, column {tok.column}; "
            f"expected one of {', '.join(vocabulary)}"
        )
    return tok.lower


def parse_pd(source: str) -> ProcessDescription:
    """Parse one process description; total over arbitrary byte input
    (anything that is not a description yields a diagnostic, never a crash)."""
    if not isinstance(source, str):
        raise ParseError("source must be text", 1, 1)
    stream = _Stream(_lex(source), source)
    stream.expect_keyword("create")
    stream.expect_keyword("process")
    name = stream.expect_identifier("process name").text
    stream.expect_keyword("at")
    url = stream.expect_word("url").text
    stream.expect_keyword("access")
    stream.expect_keyword("browser")
    postfix = None
    nxt = stream.peek()
    if nxt is not None and nxt.lower == "postfix":
        stream.next("postfix")
        postfix = stream.expect_word("postfix value").text
    stream.expect_keyword("accepts")
    stream.expect_keyword("filter")
    stream.expect_punct("(")
    filters: list[FilterField] = []
    while True:
        fname = stream.expect_identifier("filter name")
        ftype = _parse_type(stream, FILTER_TYPES, "filter")
        filters.append(FilterField(fname.text, ftype))
        tok = stream.next("',' or ')'")
        if tok.text == ")":
            break
        if tok.text != ",":
            raise ParseError(
                f"expected ',' or ')', found {tok.text!r}", tok.line, tok.column, [",", ")"]
            )
    stream.expect_keyword("returns")
    stream.expect_keyword("table")
    stream.expect_punct("(")
    columns: list[OutputColumn] = []
    while True:
        cname = stream.expect_identifier("column name")
        ctype = _parse_type(stream, COLUMN_TYPES, "column")
        primary = False
        tok = stream.next("',', ')' or 'primary'")
        if tok.lower == "primary":
            stream.expect_keyword("key")
            primary = True
            tok = stream.next("',' or ')'")
        columns.append(OutputColumn(cname.text, ctype, primary))
        if tok.text == ")":
            break
        if tok.text != ",":
            raise ParseError(
                f"expected ',' or ')', found {tok.text!r}", tok.line, tok.column, [",", ")"]
            )
    stream.expect_punct(";")
    trailing = stream.peek()
    if trailing is not None:
        raise ParseError(
            f"unexpected input after ';': {trailing.text!r}",
            trailing.line,
            trailing.column,
            ["end of input"],
        )

    _check_semantics(name, filters, columns)
    return ProcessDescription(
        name=name,
        url=url,
        access_mode="browser",
        filters=tuple(filters),
        output_columns=tuple(columns),
        postfix=postfix,
    )


def _check_semantics(
    name: str, filters: list[FilterField], columns: list[OutputColumn]
) -> None:
    seen_f: set[str] = set()
    for f in filters:
        if f.name in seen_f:
            raise SemanticError(f"duplicate filter {f.name!r} in process {name}")
        seen_f.add(f.name)
    seen_c: set[str] = set()
    pks = 0
    for c in columns:
        if c.name in seen_c:
            raise SemanticError(f"duplicate column {c.name!r} in process {name}")
        seen_c.add(c.name)
        pks += c.primary_key
    if pks > 1:
        raise SemanticError(f"process {name} declares {pks} primary keys; at most one allowed")


def render_pd(pd: ProcessDescription) -> str:
    """Canonical source: keywords lowercase, two-space indent, one field
    per line. parse(render(pd)) is structurally equal to pd."""
    lines = [f"create process {pd.name}"]
    lines.append(f"  at {pd.url}")
    lines.append("  access browser")
    if pd.postfix is not None:
        lines.append(f"  postfix {pd.postfix}")
    lines.append("  accepts filter (")
    for i, f in enumerate(pd.filters):
        sep = "," if i < len(pd.filters) - 1 else " )"
        lines.append(f"    {f.name} {f.type}{sep}")
    lines.append("  returns table (")
    for i, c in enumerate(pd.output_columns):
        pk = " primary key" if c.primary_key else ""
        sep = "," if i < len(pd.output_columns) - 1 else " );"
        lines.append(f"    {c.name} {c.type}{pk}{sep}")
    return "\n".join(lines) + "\n"


def _norm_host(url: str) -> str:
    parsed = urlparse(url if "://" in url else f"http://{url}")
    host = (parsed.hostname or "").lower()
    return host[4:] if host.startswith("www.") else host


def _path_segments(url: str) -> list[str]:
    parsed = urlparse(url if "://" in url else f"http://{url}")
    return [seg for seg in parsed.path.split("/") if seg]


class ProcessKB:
    """Knowledgebase of process descriptions.

    Persisted as a directory of canonical .pd files plus a generated
    index.json; the DSL text is the source of truth. Reads are lock-free
    on an immutable snapshot; writes are serialized.
    """

    def __init__(self, directory: str | Path | None = None):
        self.directory = Path(directory) if directory else None
        self._entries: dict[str, ProcessDescription] = {}
        self._write_lock = threading.Lock()
        if self.directory and self.directory.exists():
            for pd_file in sorted(self.directory.glob("*.pd")):
                pd = parse_pd(pd_file.read_text(encoding="utf-8"))
                self._entries[pd.name] = pd

    def __len__(self) -> int:
        return len(self._entries)

    def names(self) -> list[str]:
        return sorted(self._entries)

    def get(self, name: str) -> ProcessDescription | None:
        return self._entries.get(name)

    def add(self, pd: ProcessDescription, overwrite: bool = False) -> None:
        with self._write_lock:
            if pd.name in self._entries and not overwrite:
                raise SemanticError(f"process {pd.name!r} already stored")
            self._entries[pd.name] = pd
            if self.directory:
                self.directory.mkdir(parents=True, exist_ok=True)
                (self.directory / f"{pd.name}.pd").write_text(
                    render_pd(pd), encoding="utf-8"
                )
                index = {
                    name: {"url": entry.url, "file": f"{name}.pd"}
                    for name, entry in sorted(self._entries.items())
                }
                (self.directory / "index.json").write_text(
                    json.dumps(index, indent=2), encoding="utf-8"
                )

    def lookup_url(self, url: str) -> ProcessDescription | None:
        """Best entry for a data link.

        The host must match exactly; the entry path and the resource path
        must be segment-prefixes of one another (so same-host entries for
        unrelated path trees never cross-match), and the deepest shared
        path wins; name order breaks exact ties.
        """
        host = _norm_host(url)
        if not host:
            return None
        segments = [s.lower() for s in _path_segments(url)]
        best_shared = -1
        best_pd: ProcessDescription | None = None
        for name in sorted(self._entries):
            entry = self._entries[name]
            if _norm_host(entry.url) != host:
                continue
            entry_segs = [s.lower() for s in _path_segments(entry.url)]
            shared = 0
            for a, b in zip(segments, entry_segs):
                if a != b:
                    break
                shared += 1
            if shared < min(len(segments), len(entry_segs)):
                continue
            if shared > best_shared:
                best_shared, best_pd = shared, entry
        return best_pd


def kb_lookup(kb: ProcessKB, resource) -> ProcessDescription | None:
    """Lookup by a ResourceDescriptor's data link (absent -> None)."""
    return kb.lookup_url(resource.data_link)
