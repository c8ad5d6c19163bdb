"""Tolerant HTML scanning: anchors with context, tables, forms.

Built on html.parser so arbitrary byte garbage yields degraded results,
never an exception. Unclosed cells and rows are recovered by the next
opening tag; a nested <form> implicitly closes the previous one.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from html.parser import HTMLParser
from urllib.parse import urljoin

SNIPPET_RADIUS = 120

_TEXT_INPUT_TYPES = {
    "",
    "text",
    "search",
    "email",
    "url",
    "tel",
    "number",
    "date",
    "password",
}


@dataclass
class Anchor:
    href: str
    text: str
    snippet: str


@dataclass
class RawTable:
    header: list[str]
    rows: list[list[str]]
    header_from_th: bool


@dataclass
class FormField:
    name: str
    kind: str  # text | select | checkbox | radio | hidden | submit
    options: list[str] = field(default_factory=list)
    default: str = ""


@dataclass
class RawForm:
    action: str
    method: str
    fields: list[FormField] = field(default_factory=list)

    def field_named(self, name: str) -> FormField | None:
        for f in self.fields:
            if f.name == name:
                return f
        return None


@dataclass
class PageScan:
    anchors: list[Anchor]
    tables: list[RawTable]
    forms: list[RawForm]
    title: str
    text: str


class _Scanner(HTMLParser):
    def __init__(self) -> None:
        super().__init__(convert_charrefs=True)
        self.buffer: list[str] = []
        self.pos = 0

        self.anchors: list[Anchor] = []
        self._anchor_snips: list[tuple[int, int, int]] = []
        self._anchor: tuple[str, int] | None = None  # href, text start
        self._anchor_parts: list[str] = []

        self.tables: list[RawTable] = []
        self._table_stack: list[dict] = []

        self.forms: list[RawForm] = []
        self._form: RawForm | None = None
        self._select: FormField | None = None
        self._option_pending = False
        self._option_attr: str | None = None
        self._option_label = ""
        self._option_selected = False

        self.title = ""
        self._in_title = False

    # -- text ----------------------------------------------------------

    def _append_text(self, data: str) -> None:
        self.buffer.append(data)
        self.pos += len(data)

    def handle_data(self, data: str) -> None:
        if self._in_title:
            self.title += data
        if self._anchor is not None:
            self._anchor_parts.append(data)
        if self._table_stack and self._table_stack[-1]["cell"] is not None:
            self._table_stack[-1]["cell"].append(data)
        if self._option_pending:
            self._option_label += data
        self._append_text(data)

    # -- anchors ---------------------------------------------------------

    def _close_anchor(self) -> None:
        if self._anchor is None:
            return
        href, start = self._anchor
        text = " ".join("".join(self._anchor_parts).split())
        self.anchors.append(Anchor(href=href, text=text, snippet=""))
        self._anchor_snips.append((len(self.anchors) - 1, start, self.pos))
        self._anchor = None
        self._anchor_parts = []

    # -- tables ----------------------------------------------------------

    def _close_cell(self) -> None:
        if not self._table_stack:
            return
        t = self._table_stack[-1]
        if t["cell"] is not None:
            text = " ".join("".join(t["cell"]).split())
            t["row"].append(text)
            t["row_is_th"].append(t["cell_is_th"])
            t["cell"] = None

    def _close_row(self) -> None:
        if not self._table_stack:
            return
        self._close_cell()
        t = self._table_stack[-1]
        if t["row"]:
            t["rows"].append((list(t["row"]), bool(t["row_is_th"]) and all(t["row_is_th"])))
        t["row"] = []
        t["row_is_th"] = []

    def _close_table(self) -> None:
        if not self._table_stack:
            return
        self._close_row()
        t = self._table_stack.pop()
        rows = t["rows"]
        if not rows:
            return
        header_from_th = bool(rows[0][1])
        header = rows[0][0]
        body = [r for r, _ in rows[1:]]
        self.tables.append(RawTable(header=header, rows=body, header_from_th=header_from_th))

    # -- forms -------------------------------------------------------

    def _flush_option(self) -> None:
        if self._option_pending and self._select is not None:
            label = " ".join(self._option_label.split())
            value = self._option_attr if self._option_attr else label
            if value:
                self._select.options.append(value)
                if self._option_selected:
                    self._select.default = value
                elif not self._select.default and len(self._select.options) == 1:
                    self._select.default = value
        self._option_pending = False
        self._option_attr = None
        self._option_label = ""
        self._option_selected = False

    def _close_select(self) -> None:
        self._flush_option()
        self._select = None

    def _close_form(self) -> None:
        self._close_select()
        if self._form is not None:
            self.forms.append(self._form)
            self._form = None

    # -- dispatch ------------------------------------------------------

    def handle_starttag(self, tag: str, attrs: list[tuple[str, str | None]]) -> None:
        a = {k: (v if v is not None else "") for k, v in attrs}
        if tag == "title":
            self._in_title = True
        elif tag == "a":
            self._close_anchor()
            href = a.get("href", "").strip()
            if href:
                self._anchor = (href, self.pos)
                self._anchor_parts = []
        elif tag == "table":
            self._table_stack.append(
                {"rows": [], "row": [], "row_is_th": [], "cell": None, "cell_is_th": False}
            )
        elif tag == "tr":
            self._close_row()
        elif tag in ("td", "th"):
            self._close_cell()
            if self._table_stack:
                t = self._table_stack[-1]
                t["cell"] = []
                t["cell_is_th"] = tag == "th"
        elif tag == "form":
            self._close_form()
            self._form = RawForm(
                action=a.get("action", "").strip(),
                method=(a.get("method", "get").strip().lower() or "get"),
            )
        elif tag == "input" and self._form is not None:
            self._handle_input(a)
        elif tag == "select" and self._form is not None:
            self._close_select()
            name = a.get("name", "").strip()
            if name and self._form.field_named(name) is None:
                fld = FormField(name=name, kind="select")
                self._form.fields.append(fld)
                self._select = fld
        elif tag == "option" and self._select is not None:
            self._flush_option()
            self._option_pending = True
            self._option_selected = "selected" in a
            self._option_attr = a["value"] if "value" in a and a["value"] else None
            self._option_label = ""
        elif tag == "textarea" and self._form is not None:
            name = a.get("name", "").strip()
            if name and self._form.field_named(name) is None:
                self._form.fields.append(FormField(name=name, kind="text"))
        elif tag == "button" and self._form is not None:
            if a.get("type", "submit").lower() == "submit":
                self._form.fields.append(
                    FormField(name=a.get("name", "") or "submit", kind="submit")
                )
        elif tag in ("br", "p", "div", "li", "section", "h1", "h2", "h3"):
            self._append_text("\n")

    def _handle_input(self, a: dict[str, str]) -> None:
        assert self._form is not None
        name = a.get("name", "").strip()
        itype = a.get("type", "").strip().lower()
        if itype in ("submit", "button", "image", "reset"):
            kind = "submit"
        elif itype == "hidden":
            kind = "hidden"
        elif itype == "checkbox":
            kind = "checkbox"
        elif itype == "radio":
            kind = "radio"
        else:
            kind = "text"
        if kind == "radio" and name:
            existing = self._form.field_named(name)
            value = a.get("value", "")
            if existing is not None and existing.kind == "radio":
                if value:
                    existing.options.append(value)
                if "checked" in a and value:
                    existing.default = value
                return
            fld = FormField(name=name, kind="radio", options=[value] if value else [])
            if "checked" in a:
                fld.default = value
            self._form.fields.append(fld)
            return
        if not name and kind != "submit":
            return
        if name and self._form.field_named(name) is not None:
            return
        self._form.fields.append(
            FormField(name=name or "submit", kind=kind, default=a.get("value", ""))
        )

    def handle_endtag(self, tag: str) -> None:
        if tag == "title":
            self._in_title = False
        elif tag == "a":
            self._close_anchor()
        elif tag in ("td", "th"):
            self._close_cell()
        elif tag == "tr":
            self._close_row()
        elif tag == "table":
            self._close_table()
        elif tag == "select":
            self._close_select()
        elif tag == "option":
            self._flush_option()
        elif tag == "form":
            self._close_form()

    def finish(self) -> PageScan:
        self._close_anchor()
        while self._table_stack:
            self._close_table()
        self._close_form()
        text = "".join(self.buffer)
        for idx, start, end in self._anchor_snips:
            lo = max(0, start - SNIPPET_RADIUS)
            hi = min(len(text), end + SNIPPET_RADIUS)
            self.anchors[idx].snippet = " ".join(text[lo:hi].split())
        return PageScan(
            anchors=self.anchors,
            tables=self.tables,
            forms=self.forms,
            title=" ".join(self.title.split()),
            text=text,
        )


def scan_html(html: str) -> PageScan:
    """Parse markup into anchors/tables/forms; never raises on bad input."""
    scanner = _Scanner()
    try:
        scanner.feed(html)
        scanner.close()
    except Exception:
        # html.parser is robust in practice; any residual parser crash
        # degrades to whatever was collected before it.
        pass
    try:
        return scanner.finish()
    except Exception:
        return PageScan(anchors=[], tables=[], forms=[], title="", text="")


def resolve_href(base_url: str, href: str) -> str:
    return urljoin(base_url, href)
