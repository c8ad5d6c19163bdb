"""DataTable: the universal relational frame every wrapper output and
query result is shaped into.

Cells are str, int, float or None. Column types are inferred per column:
integer if every non-null cell parses as an integer, real if every
non-null cell parses numerically, else string.
"""

from __future__ import annotations

import csv
import io
import json
import re
from dataclasses import dataclass, field

from .errors import TableError

COLUMN_TYPES = ("string", "integer", "real")

_INT_RE = re.compile(r"^[+-]?\d+$")
_NULL_STRINGS = {"", "na", "n/a", "null", "none", "-"}


@dataclass(frozen=True)
class Column:
    name: str
    type: str = "string"

    def __post_init__(self) -> None:
        if self.type not in COLUMN_TYPES:
            raise TableError(f"unknown column type {self.type!r}")


@dataclass
class DataTable:
    columns: list[Column]
    rows: list[list]
    provenance: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        width = len(self.columns)
        for i, row in enumerate(self.rows):
            if len(row) != width:
                raise TableError(f"row {i} has {len(row)} cells, expected {width}")

    @property
    def column_names(self) -> list[str]:
        return [c.name for c in self.columns]

    @property
    def n_rows(self) -> int:
        return len(self.rows)

    def column_index(self, name: str) -> int:
        try:
            return self.column_names.index(name)
        except ValueError:
            raise TableError(f"no column named {name!r}") from None

    def column_values(self, name: str) -> list:
        i = self.column_index(name)
        return [row[i] for row in self.rows]

    def rename(self, mapping: dict[str, str]) -> "DataTable":
        cols = [Column(mapping.get(c.name, c.name), c.type) for c in self.columns]
        return DataTable(cols, [list(r) for r in self.rows], dict(self.provenance))

    def project(self, names: list[str]) -> "DataTable":
        idx = [self.column_index(n) for n in names]
        cols = [self.columns[i] for i in idx]
        rows = [[row[i] for i in idx] for row in self.rows]
        prov = dict(self.provenance)
        if "columns" in prov:
            prov["columns"] = {n: prov["columns"][n] for n in names if n in prov["columns"]}
        return DataTable(cols, rows, prov)

    def to_records(self) -> list[dict]:
        names = self.column_names
        return [dict(zip(names, row)) for row in self.rows]

    def render_delimited(self, delimiter: str = ",") -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, delimiter=delimiter, lineterminator="\n")
        writer.writerow(self.column_names)
        for row in self.rows:
            writer.writerow(["" if cell is None else cell for cell in row])
        return buf.getvalue()

    def render_json(self) -> str:
        return json.dumps(
            {
                "columns": [{"name": c.name, "type": c.type} for c in self.columns],
                "rows": self.rows,
                "provenance": self.provenance,
            }
        )


def _parse_cell(raw: str, kind: str):
    if raw is None:
        return None
    text = raw.strip() if isinstance(raw, str) else raw
    if isinstance(text, str) and text.lower() in _NULL_STRINGS:
        return None
    if kind == "integer":
        return int(text)
    if kind == "real":
        return float(text)
    return text


def _cell_kind(raw) -> str:
    """Narrowest type a raw cell admits."""
    if raw is None:
        return "null"
    if isinstance(raw, bool):
        return "string"
    if isinstance(raw, int):
        return "integer"
    if isinstance(raw, float):
        return "real"
    text = str(raw).strip()
    if text.lower() in _NULL_STRINGS:
        return "null"
    if _INT_RE.match(text):
        return "integer"
    try:
        float(text)
        return "real"
    except ValueError:
        return "string"


def infer_column_type(raw_cells: list) -> str:
    kinds = {_cell_kind(c) for c in raw_cells}
    kinds.discard("null")
    if not kinds:
        return "string"
    if kinds == {"integer"}:
        return "integer"
    if kinds <= {"integer", "real"}:
        return "real"
    return "string"


def from_raw_rows(
    header: list[str], raw_rows: list[list], provenance: dict | None = None
) -> DataTable:
    """Build a typed table from string-ish cells.

    Ragged rows are padded with nulls (or truncated) to the header width,
    then per-column types are inferred and cells parsed accordingly.
    """
    width = len(header)
    if width == 0:
        raise TableError("cannot build a table with no columns")
    squared = []
    for row in raw_rows:
        row = list(row[:width]) + [None] * max(0, width - len(row))
        squared.append(row)
    types = [infer_column_type([row[i] for row in squared]) for i in range(width)]
    columns = [Column(str(n), t) for n, t in zip(header, types)]
    rows = []
    for row in squared:
        rows.append([_parse_cell(cell, t) for cell, t in zip(row, types)])
    return DataTable(columns, rows, provenance or {})


def sniff_delimiter(text: str) -> str:
    """Pick the delimiter among comma/tab/semicolon that yields the most
    consistent column count over the first 20 non-empty lines."""
    lines = [ln for ln in text.splitlines() if ln.strip()][:20]
    if not lines:
        raise TableError("empty delimited payload")
    best, best_key = ",", None
    for delim in (",", "\t", ";"):
        counts = []
        for ln in lines:
            counts.append(len(next(csv.reader([ln], delimiter=delim))))
        width = max(set(counts), key=counts.count)
        consistency = counts.count(width)
        # Prefer wider consistent layouts; a delimiter absent from the
        # payload parses every line as one column.
        key = (consistency if width > 1 else 0, width)
        if best_key is None or key > best_key:
            best, best_key = delim, key
    return best


def parse_delimited(text: str, provenance: dict | None = None) -> DataTable:
    """Parse CSV/TSV/semicolon text with dialect sniffing.

    The first row is taken as the header when it is all-string while some
    later row is not; otherwise synthetic col1..colN names are used.
    """
    delimiter = sniff_delimiter(text)
    reader = csv.reader(io.StringIO(text), delimiter=delimiter)
    raw = [row for row in reader if any(str(c).strip() for c in row)]
    if not raw:
        raise TableError("no rows in delimited payload")
    first_kinds = [_cell_kind(c) for c in raw[0]]
    later_nonstring = any(
        _cell_kind(c) in ("integer", "real") for row in raw[1:] for c in row
    )
    has_header = all(k == "string" for k in first_kinds) and later_nonstring
    if has_header and len(raw) >= 2:
        header, body = [str(c).strip() for c in raw[0]], raw[1:]
    else:
        header, body = [f"col{i + 1}" for i in range(len(raw[0]))], raw
    return from_raw_rows(header, body, provenance)
