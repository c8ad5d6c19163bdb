"""The smart wrapper: harvest links from a resource page, filter by
relevance, classify each path, execute the best access strategy, emit a
DataTable.

Access priority is strict: downloadable files first, then HTML tables,
then search forms. A form is never executed for a resource when any
downloadable candidate yielded a parseable table. When nothing works the
source is flagged unsuitable rather than raising.
"""

from __future__ import annotations

import logging
import posixpath
from dataclasses import dataclass, field
from urllib.parse import urlencode, urlparse

from .embedding import EmbeddingBackend, cosine_similarity
from .errors import (
    EmbeddingError,
    FetchError,
    FormError,
    SchemaValidationError,
    TableError,
)
from .fetch import Fetcher, FetchResponse
from .htmlscan import FormField, RawForm, RawTable, resolve_href, scan_html
from .table import DataTable, from_raw_rows, parse_delimited

log = logging.getLogger(__name__)

DEFAULT_RELEVANCE_THRESHOLD = 0.15

DOWNLOADABLE_EXTENSIONS = {".csv", ".tsv", ".xls", ".xlsx", ".zip", ".json"}
DOWNLOADABLE_CONTENT_TYPES = (
    "text/csv",
    "text/tab-separated-values",
    "application/csv",
    "application/json",
    "application/zip",
    "application/vnd.ms-excel",
    "application/vnd.openxmlformats-officedocument.spreadsheetml",
)

CLASS_DOWNLOADABLE = "downloadable"
CLASS_HTML_TABLE = "html_table"
CLASS_FORM = "form_page"
CLASS_OTHER = "other"


@dataclass
class LinkRecord:
    url: str
    anchor_text: str
    context_snippet: str
    classification: str | None = None
    relevance: float = 0.0
    error: str | None = None

    def describe(self) -> str:
        return f"{self.anchor_text} {self.context_snippet}"


@dataclass
class FormSchema:
    action_url: str
    method: str  # GET or POST
    fields: list[FormField]

    def fillable_fields(self) -> list[FormField]:
        return [f for f in self.fields if f.kind not in ("hidden", "submit")]


@dataclass
class FormFill:
    assignments: dict[str, str]
    target_form: int = 0


@dataclass
class WrapOutcome:
    """smart_wrap result: a table, or an unsuitable flag with the reason."""

    table: DataTable | None
    unsuitable: bool = False
    error_class: str | None = None
    detail: str = ""
    link: "LinkRecord | None" = None
    survey: "SiteSurvey | None" = None

    @property
    def ok(self) -> bool:
        return self.table is not None


@dataclass
class AccessCandidate:
    """One classified link plus whatever was pre-fetched to classify it."""

    link: LinkRecord
    tables: list[DataTable] = field(default_factory=list)
    forms: list[FormSchema] = field(default_factory=list)


@dataclass
class SiteSurvey:
    """Step 1 + 2 of the wrapping flow, kept so a human (or the auto rule)
    can pick the access path."""

    resource_url: str
    links: list[LinkRecord]
    kept: list[LinkRecord]
    candidates: dict[str, AccessCandidate]


def harvest_links(page_url: str, fetcher: Fetcher) -> list[LinkRecord]:
    """All anchor targets of the page, absolute, deduplicated by URL."""
    resp = fetcher.get(page_url)
    scan = scan_html(resp.text)
    seen: set[str] = set()
    out: list[LinkRecord] = []
    for anchor in scan.anchors:
        url = resolve_href(resp.final_url or page_url, anchor.href)
        if url in seen:
            continue
        seen.add(url)
        out.append(
            LinkRecord(url=url, anchor_text=anchor.text, context_snippet=anchor.snippet)
        )
    return out


def filter_links(
    links: list[LinkRecord],
    retrieval_query: str,
    embedder: EmbeddingBackend,
    threshold: float = DEFAULT_RELEVANCE_THRESHOLD,
) -> list[LinkRecord]:
    """Keep links whose anchor-plus-context embedding is close enough to
    the retrieval query; order preserved. A link with no embeddable text
    scores -1 (kept only by a no-op threshold)."""
    qvec = embedder.embed(retrieval_query)
    kept: list[LinkRecord] = []
    for link in links:
        try:
            link.relevance = cosine_similarity(qvec, embedder.embed(link.describe()))
        except EmbeddingError:
            link.relevance = -1.0
        if link.relevance >= threshold:
            kept.append(link)
    return kept


def _extension_of(url: str) -> str:
    path = urlparse(url).path
    return posixpath.splitext(path)[1].lower()


def _looks_downloadable(url: str, content_type: str) -> bool:
    if _extension_of(url) in DOWNLOADABLE_EXTENSIONS:
        return True
    ct = content_type.split(";")[0].strip().lower()
    return any(ct.startswith(known) for known in DOWNLOADABLE_CONTENT_TYPES)


def classify_link(link: LinkRecord, fetcher: Fetcher) -> str:
    """downloadable > html_table > form_page > other.

    A fetch failure is carried on the record (link.error) and classifies
    as other; such links are excluded from access candidates.
    """
    if _extension_of(link.url) in DOWNLOADABLE_EXTENSIONS:
        link.classification = CLASS_DOWNLOADABLE
        return link.classification
    try:
        resp = fetcher.get(link.url)
    except FetchError as exc:
        link.error = exc.code
        link.classification = CLASS_OTHER
        return link.classification
    if _looks_downloadable(link.url, resp.content_type):
        link.classification = CLASS_DOWNLOADABLE
        return link.classification
    scan = scan_html(resp.text)
    if any(len(t.rows) + 1 >= 2 for t in scan.tables):
        link.classification = CLASS_HTML_TABLE
    elif any(
        any(f.kind not in ("hidden", "submit") for f in form.fields) for form in scan.forms
    ):
        link.classification = CLASS_FORM
    else:
        link.classification = CLASS_OTHER
    return link.classification


def parse_html_tables(html: str, provenance: dict | None = None) -> list[DataTable]:
    """Every table on the page as a typed DataTable.

    Header comes from header cells when present, else the first row;
    ragged rows are padded with nulls.
    """
    scan = scan_html(html)
    out: list[DataTable] = []
    for raw in scan.tables:
        if not raw.header:
            continue
        try:
            out.append(from_raw_rows(raw.header, raw.rows, dict(provenance or {})))
        except TableError:
            continue
    return out


def extract_forms(html: str, page_url: str = "") -> list[FormSchema]:
    """One schema per form; the page URL is inherited when action is absent."""
    scan = scan_html(html)
    out: list[FormSchema] = []
    for raw in scan.forms:
        action = resolve_href(page_url, raw.action) if raw.action else page_url
        fields: list[FormField] = []
        seen: set[str] = set()
        for f in raw.fields:
            if f.name in seen and f.kind != "submit":
                continue
            seen.add(f.name)
            fields.append(f)
        method = "POST" if raw.method.lower() == "post" else "GET"
        out.append(FormSchema(action_url=action, method=method, fields=fields))
    return out


def plan_form_fill(form: FormSchema, retrieval_query: str, keywords: list[str], assistant) -> FormFill:
    """Assistant-provided assignments, validated against the schema."""
    fillable = form.fillable_fields()
    if not fillable:
        raise FormError("form has no fillable fields")
    assignments = assistant.fill_form(form, retrieval_query, keywords)
    fill = FormFill(assignments=dict(assignments))
    problems = _validate_fill(fill, form)
    if problems:
        assignments = assistant.fill_form(form, retrieval_query, keywords)
        fill = FormFill(assignments=dict(assignments))
        problems = _validate_fill(fill, form)
        if problems:
            raise SchemaValidationError(
                "form fill failed validation twice: " + "; ".join(problems)
            )
    if not fill.assignments:
        raise FormError("assistant assigned no form fields")
    return fill


def _validate_fill(fill: FormFill, form: FormSchema) -> list[str]:
    problems = []
    for name, value in fill.assignments.items():
        fld = None
        for f in form.fields:
            if f.name == name:
                fld = f
                break
        if fld is None:
            problems.append(f"no field named {name!r}")
        elif fld.kind in ("select", "radio") and value not in fld.options:
            problems.append(f"{value!r} is not an option of {name!r}")
    return problems


def execute_form(fill: FormFill, form: FormSchema, fetcher: Fetcher) -> FetchResponse:
    """Submit the form: GET encodes into the query string, POST into a
    form-encoded body. Defaults of untouched hidden fields are preserved."""
    payload: dict[str, str] = {}
    for f in form.fields:
        if f.kind == "hidden" and f.default:
            payload[f.name] = f.default
    payload.update(fill.assignments)
    if form.method == "GET":
        sep = "&" if urlparse(form.action_url).query else "?"
        url = f"{form.action_url}{sep}{urlencode(payload)}"
        return fetcher.get(url)
    return fetcher.post(form.action_url, payload)


def rank_downloadables(
    candidates: list[LinkRecord], retrieval_query: str, embedder: EmbeddingBackend
) -> LinkRecord:
    """Most query-relevant downloadable; cosine over anchor + context +
    filename, exact ties by lexicographic URL."""
    if not candidates:
        raise ValueError("no downloadable candidates to rank")
    qvec = embedder.embed(retrieval_query)
    best: tuple[float, str] | None = None
    best_link: LinkRecord | None = None
    for link in candidates:
        filename = posixpath.basename(urlparse(link.url).path)
        text = f"{link.describe()} {filename}".strip()
        try:
            score = cosine_similarity(qvec, embedder.embed(text))
        except EmbeddingError:
            score = -1.0
        key = (-score, link.url)
        if best is None or key < best:
            best = key
            best_link = link
    assert best_link is not None
    return best_link


def _table_relevance(table: DataTable, retrieval_query: str, embedder: EmbeddingBackend) -> float:
    sample = " ".join(table.column_names)
    if table.rows:
        sample += " " + " ".join(str(c) for c in table.rows[0] if c is not None)
    try:
        return cosine_similarity(embedder.embed(retrieval_query), embedder.embed(sample))
    except EmbeddingError:
        return -1.0


class SmartWrapper:
    """Alg.-style wrapping of one resource into one DataTable."""

    def __init__(
        self,
        fetcher: Fetcher,
        embedder: EmbeddingBackend,
        assistant,
        relevance_threshold: float = DEFAULT_RELEVANCE_THRESHOLD,
    ):
        self.fetcher = fetcher
        self.embedder = embedder
        self.assistant = assistant
        self.relevance_threshold = relevance_threshold

    # -- survey (steps 1 + 2) -------------------------------------------

    def survey(self, resource_url: str, retrieval_query: str) -> SiteSurvey:
        links = harvest_links(resource_url, self.fetcher)
        kept = filter_links(links, retrieval_query, self.embedder, self.relevance_threshold)
        candidates: dict[str, AccessCandidate] = {}
        for link in kept:
            classify_link(link, self.fetcher)
            if link.error:
                continue
            cand = AccessCandidate(link=link)
            if link.classification == CLASS_HTML_TABLE:
                resp = self.fetcher.get(link.url)
                cand.tables = parse_html_tables(
                    resp.text, {"source": link.url, "method": CLASS_HTML_TABLE}
                )
            elif link.classification == CLASS_FORM:
                resp = self.fetcher.get(link.url)
                cand.forms = extract_forms(resp.text, resp.final_url or link.url)
            if link.classification in (CLASS_DOWNLOADABLE, CLASS_HTML_TABLE, CLASS_FORM):
                candidates[link.url] = cand
        return SiteSurvey(
            resource_url=resource_url, links=links, kept=kept, candidates=candidates
        )

    # -- access (step 2/3 execution) ----------------------------------

    def _access_downloadable(self, link: LinkRecord) -> DataTable | None:
        try:
            resp = self.fetcher.get(link.url)
        except FetchError as exc:
            link.error = exc.code
            return None
        ext = _extension_of(link.url)
        ct = resp.content_type.split(";")[0].strip().lower()
        try:
            if ext == ".json" or ct == "application/json":
                return self._table_from_json(resp)
            return parse_delimited(
                resp.text, {"source": link.url, "method": CLASS_DOWNLOADABLE}
            )
        except (TableError, ValueError):
            return None

    def _table_from_json(self, resp: FetchResponse) -> DataTable | None:
        import json as _json

        try:
            payload = _json.loads(resp.text)
        except ValueError:
            return None
        if isinstance(payload, list) and payload and all(isinstance(r, dict) for r in payload):
            header = list(payload[0].keys())
            rows = [[r.get(k) for k in header] for r in payload]
            return from_raw_rows(header, rows, {"source": resp.url, "method": CLASS_DOWNLOADABLE})
        return None

    def _access_table_page(self, cand: AccessCandidate, retrieval_query: str) -> DataTable | None:
        best: DataTable | None = None
        best_score = float("-inf")
        for table in cand.tables:
            score = _table_relevance(table, retrieval_query, self.embedder)
            if score > best_score:
                best, best_score = table, score
        return best

    def _access_form_page(
        self, cand: AccessCandidate, retrieval_query: str, keywords: list[str]
    ) -> DataTable | None:
        for idx, form in enumerate(cand.forms):
            if not form.fillable_fields():
                continue
            try:
                fill = plan_form_fill(form, retrieval_query, keywords, self.assistant)
                fill.target_form = idx
                resp = execute_form(fill, form, self.fetcher)
            except (FormError, SchemaValidationError, FetchError) as exc:
                log.warning("form submission failed on %s: %s", form.action_url, exc)
                continue
            tables = parse_html_tables(
                resp.text, {"source": resp.final_url, "method": "form"}
            )
            if tables:
                best: DataTable | None = None
                best_score = float("-inf")
                for table in tables:
                    score = _table_relevance(table, retrieval_query, self.embedder)
                    if score > best_score:
                        best, best_score = table, score
                return best
            synthesized = self.assistant.synthesize_table(
                scan_html(resp.text).text, retrieval_query
            )
            if synthesized:
                table = from_raw_rows(
                    synthesized["columns"],
                    synthesized["rows"],
                    {"source": resp.final_url, "method": "assistant-synthesized"},
                )
                return table
        return None

    def access(
        self,
        survey: SiteSurvey,
        link: LinkRecord,
        retrieval_query: str,
        keywords: list[str],
    ) -> DataTable | None:
        """Wrap one chosen link according to its classification."""
        cand = survey.candidates.get(link.url, AccessCandidate(link=link))
        if link.classification == CLASS_DOWNLOADABLE:
            return self._access_downloadable(link)
        if link.classification == CLASS_HTML_TABLE:
            if not cand.tables:
                resp = self.fetcher.get(link.url)
                cand.tables = parse_html_tables(
                    resp.text, {"source": link.url, "method": CLASS_HTML_TABLE}
                )
            return self._access_table_page(cand, retrieval_query)
        if link.classification == CLASS_FORM:
            if not cand.forms:
                resp = self.fetcher.get(link.url)
                cand.forms = extract_forms(resp.text, resp.final_url or link.url)
            return self._access_form_page(cand, retrieval_query, keywords)
        return None

    # -- the whole flow ------------------------------------------------

    def wrap_from_survey(
        self, survey: SiteSurvey, retrieval_query: str, keywords: list[str]
    ) -> WrapOutcome:
        """Step 3: strict access priority over an existing survey.

        Tracks which link produced the table so callers can log the
        choice (and so a guided run picking the same link reproduces the
        same table via access()).
        """
        downloadables = [
            c.link
            for c in survey.candidates.values()
            if c.link.classification == CLASS_DOWNLOADABLE
        ]
        while downloadables:
            best = rank_downloadables(downloadables, retrieval_query, self.embedder)
            table = self._access_downloadable(best)
            if table is not None:
                return WrapOutcome(table=table, link=best, survey=survey)
            downloadables = [l for l in downloadables if l.url != best.url]

        best_table: DataTable | None = None
        best_score = float("-inf")
        best_link: LinkRecord | None = None
        for link in survey.kept:
            if link.classification != CLASS_HTML_TABLE or link.url not in survey.candidates:
                continue
            for table in survey.candidates[link.url].tables:
                score = _table_relevance(table, retrieval_query, self.embedder)
                if score > best_score:
                    best_table, best_score, best_link = table, score, link
        if best_table is not None:
            return WrapOutcome(table=best_table, link=best_link, survey=survey)

        for link in survey.kept:
            if link.classification != CLASS_FORM or link.url not in survey.candidates:
                continue
            table = self._access_form_page(
                survey.candidates[link.url], retrieval_query, keywords
            )
            if table is not None:
                return WrapOutcome(table=table, link=link, survey=survey)

        return WrapOutcome(
            table=None,
            unsuitable=True,
            error_class="no_data",
            detail=f"no access strategy produced a table for {survey.resource_url}",
            survey=survey,
        )

    def wrap(self, resource_url: str, retrieval_query: str, keywords: list[str]) -> WrapOutcome:
        """Steps 1-3 with the strict priority; never raises for access
        failures, returns an unsuitable outcome instead.

        Degenerate resource links are honored before link harvesting: a
        data link that is itself a downloadable file is parsed directly,
        and when no harvested link works the access page itself is tried
        as a table or form page.
        """
        self_link = LinkRecord(
            url=resource_url, anchor_text="(access link)", context_snippet=""
        )
        if _extension_of(resource_url) in DOWNLOADABLE_EXTENSIONS:
            self_link.classification = CLASS_DOWNLOADABLE
            table = self._access_downloadable(self_link)
            if table is not None:
                return WrapOutcome(table=table, link=self_link)

        try:
            survey = self.survey(resource_url, retrieval_query)
        except FetchError as exc:
            return WrapOutcome(
                table=None, unsuitable=True, error_class=exc.code, detail=str(exc)
            )
        outcome = self.wrap_from_survey(survey, retrieval_query, keywords)
        if outcome.ok:
            return outcome
        fallback = self._access_base_page(survey, resource_url, retrieval_query, keywords)
        return fallback if fallback is not None else outcome

    def _access_base_page(
        self, survey: SiteSurvey, resource_url: str, retrieval_query: str, keywords: list[str]
    ) -> WrapOutcome | None:
        """Treat the access link itself as the table or form page."""
        try:
            resp = self.fetcher.get(resource_url)
        except FetchError:
            return None
        self_link = LinkRecord(
            url=resource_url, anchor_text="(access link)", context_snippet=""
        )
        if _looks_downloadable(resource_url, resp.content_type):
            self_link.classification = CLASS_DOWNLOADABLE
            table = self._access_downloadable(self_link)
            if table is not None:
                return WrapOutcome(table=table, link=self_link, survey=survey)
        tables = parse_html_tables(
            resp.text, {"source": resource_url, "method": CLASS_HTML_TABLE}
        )
        if tables:
            self_link.classification = CLASS_HTML_TABLE
            cand = AccessCandidate(link=self_link, tables=tables)
            table = self._access_table_page(cand, retrieval_query)
            if table is not None:
                return WrapOutcome(table=table, link=self_link, survey=survey)
        forms = extract_forms(resp.text, resp.final_url or resource_url)
        if forms:
            self_link.classification = CLASS_FORM
            cand = AccessCandidate(link=self_link, forms=forms)
            table = self._access_form_page(cand, retrieval_query, keywords)
            if table is not None:
                return WrapOutcome(table=table, link=self_link, survey=survey)
        return None


def smart_wrap(resource, query_bundle, wrapper: SmartWrapper) -> WrapOutcome:
    """Convenience entry point taking a ResourceDescriptor and QueryBundle."""
    term = resource.retrieval_query or query_bundle.retrieval_query
    return wrapper.wrap(resource.data_link, term, query_bundle.keywords)


def execute_process(
    pd,
    retrieval_query: str,
    keywords: list[str],
    fetcher: Fetcher,
    assistant,
    embedder: EmbeddingBackend,
) -> DataTable:
    """Run a stored process description directly: fetch its URL, feed the
    search term through the declared filters (form page) or read the page
    tables, then shape the result onto the declared output schema.

    Raises on failure so the caller can fall back to the full wrapping
    workflow.
    """
    from ._text import normalize_for_match

    resp = fetcher.get(pd.url)
    scan = scan_html(resp.text)
    tables: list[DataTable] = []
    if scan.forms:
        forms = extract_forms(resp.text, resp.final_url or pd.url)
        for form in forms:
            fillable = form.fillable_fields()
            if not fillable:
                continue
            assignments: dict[str, str] = {}
            for flt in pd.filters:
                for f in fillable:
                    if normalize_for_match(f.name) == normalize_for_match(flt.name):
                        assignments[f.name] = retrieval_query
            if not assignments:
                fill = plan_form_fill(form, retrieval_query, keywords, assistant)
            else:
                fill = FormFill(assignments=assignments)
            result = execute_form(fill, form, fetcher)
            tables = parse_html_tables(
                result.text, {"source": result.final_url, "method": "process_description"}
            )
            if tables:
                break
    if not tables:
        tables = parse_html_tables(
            resp.text, {"source": pd.url, "method": "process_description"}
        )
    if not tables:
        raise FormError(f"stored process {pd.name!r} produced no table")

    wanted = [c.name for c in pd.output_columns]
    best: DataTable | None = None
    best_overlap = -1
    for table in tables:
        table_norm = {normalize_for_match(c) for c in table.column_names}
        overlap = sum(1 for w in wanted if normalize_for_match(w) in table_norm)
        if overlap > best_overlap:
            best, best_overlap = table, overlap
    assert best is not None
    if best_overlap < len(wanted):
        missing = [
            w
            for w in wanted
            if normalize_for_match(w) not in {normalize_for_match(c) for c in best.column_names}
        ]
        raise TableError(
            f"stored process {pd.name!r}: result lacks declared columns {missing}"
        )
    mapping = {}
    for w in wanted:
        for c in best.column_names:
            if normalize_for_match(c) == normalize_for_match(w):
                mapping[w] = c
                break
    projected = best.project([mapping[w] for w in wanted]).rename(
        {mapping[w]: w for w in wanted}
    )
    projected.provenance["method"] = "process_description"
    projected.provenance["process"] = pd.name
    return projected
