"""Smart wrapper: link harvesting, filtering, classification, access
strategies, and robustness over malformed markup."""

from __future__ import annotations

import random
from urllib.parse import urlencode

import pytest

from bioquery.assistant import FixtureAssistant
from bioquery.errors import FormError, NotFoundError
from bioquery.fetch import FixtureFetcher, FixtureSite
from bioquery.htmlscan import scan_html
from bioquery.procdesc import parse_pd
from bioquery.wrapper import (
    CLASS_DOWNLOADABLE,
    CLASS_FORM,
    CLASS_HTML_TABLE,
    CLASS_OTHER,
    FormFill,
    LinkRecord,
    SmartWrapper,
    classify_link,
    execute_form,
    execute_process,
    extract_forms,
    filter_links,
    harvest_links,
    parse_html_tables,
    plan_form_fill,
    rank_downloadables,
)
from tests.conftest import ANNOT_BASE, MIKDB_BASE, UNIPROT_BASE


def page_fetcher(pages: dict[str, str], host: str = "http://page.test") -> FixtureFetcher:
    site = FixtureSite()
    for path, body in pages.items():
        if path.endswith(".csv"):
            site.add_page(path, body, content_type="text/csv")
        else:
            site.add_page(path, body)
    return FixtureFetcher({host: site})


class TestHarvestLinks:
    def test_three_anchors_resolved(self):
        fetcher = page_fetcher(
            {
                "/": """<html><body>
                <a href="relative.html">rel</a>
                <a href="/rooted.html">rooted</a>
                <a href="http://other.test/abs">abs</a>
                </body></html>"""
            }
        )
        links = harvest_links("http://page.test/", fetcher)
        assert [l.url for l in links] == [
            "http://page.test/relative.html",
            "http://page.test/rooted.html",
            "http://other.test/abs",
        ]

    def test_duplicate_hrefs_deduped(self):
        fetcher = page_fetcher(
            {"/": '<a href="x.html">one</a><a href="x.html">two</a>'}
        )
        links = harvest_links("http://page.test/", fetcher)
        assert len(links) == 1

    def test_mikdb_fixture_manifest(self, fixture_fetcher):
        links = harvest_links(f"{MIKDB_BASE}/", fixture_fetcher)
        assert [l.url for l in links] == [
            f"{MIKDB_BASE}/search.html",
            f"{MIKDB_BASE}/about.html",
        ]
        assert "Search infertility genes by phenotype" in links[0].anchor_text
        assert links[0].context_snippet  # surrounding text captured

    def test_uniprot_fixture_manifest(self, fixture_fetcher):
        links = harvest_links(f"{UNIPROT_BASE}/", fixture_fetcher)
        assert [l.url for l in links] == [
            f"{UNIPROT_BASE}/proteome/h2a.html",
            f"{UNIPROT_BASE}/stats.html",
        ]

    def test_fetch_error_propagates(self, fixture_fetcher):
        with pytest.raises(NotFoundError):
            harvest_links(f"{MIKDB_BASE}/missing.html", fixture_fetcher)


class TestFilterLinks:
    def _links(self):
        return [
            LinkRecord("http://a/", "H2A histone table", "H2A histone table"),
            LinkRecord("http://b/", "release notes", "release notes unrelated"),
        ]

    def test_no_op_threshold_keeps_all(self, embedder):
        for threshold in (0.0, -1.0):
            kept = filter_links(self._links(), "H2A histone", embedder, threshold)
            assert len(kept) == 2

    def test_identical_anchor_kept_at_any_threshold(self, embedder):
        links = [LinkRecord("http://a/", "H2A histone", "H2A histone")]
        kept = filter_links(links, "H2A histone", embedder, threshold=1.0)
        assert kept and kept[0].relevance == pytest.approx(1.0, abs=1e-9)

    def test_threshold_drops_unrelated(self, embedder):
        kept = filter_links(self._links(), "H2A histone", embedder, threshold=0.2)
        assert [l.url for l in kept] == ["http://a/"]
        assert all(l.relevance >= 0.2 for l in kept)

    def test_order_preserved(self, embedder):
        links = [
            LinkRecord("http://1/", "histone one", "histone one"),
            LinkRecord("http://2/", "histone two", "histone two"),
        ]
        kept = filter_links(links, "histone", embedder, threshold=0.1)
        assert [l.url for l in kept] == ["http://1/", "http://2/"]


class TestClassifyLink:
    def test_csv_extension(self, fixture_fetcher):
        link = LinkRecord(f"{ANNOT_BASE}/data/h2a_annotations.csv", "csv", "")
        assert classify_link(link, fixture_fetcher) == CLASS_DOWNLOADABLE

    def test_csv_content_type_without_extension(self):
        site = FixtureSite()
        site.add_page("/data", "a,b\n1,2\n", content_type="text/csv")
        fetcher = FixtureFetcher({"http://ct.test": site})
        link = LinkRecord("http://ct.test/data", "data", "")
        assert classify_link(link, fetcher) == CLASS_DOWNLOADABLE

    def test_table_page(self, fixture_fetcher):
        link = LinkRecord(f"{UNIPROT_BASE}/proteome/h2a.html", "table", "")
        assert classify_link(link, fixture_fetcher) == CLASS_HTML_TABLE

    def test_form_page(self, fixture_fetcher):
        link = LinkRecord(f"{MIKDB_BASE}/search.html", "form", "")
        assert classify_link(link, fixture_fetcher) == CLASS_FORM

    def test_table_beats_form(self):
        body = """<table><tr><th>A</th></tr><tr><td>1</td></tr></table>
        <form><input type="text" name="q"/></form>"""
        fetcher = page_fetcher({"/both.html": body})
        link = LinkRecord("http://page.test/both.html", "x", "")
        assert classify_link(link, fetcher) == CLASS_HTML_TABLE

    def test_plain_page_is_other(self):
        fetcher = page_fetcher({"/p.html": "<p>nothing here</p>"})
        link = LinkRecord("http://page.test/p.html", "x", "")
        assert classify_link(link, fetcher) == CLASS_OTHER

    def test_single_row_table_not_enough(self):
        fetcher = page_fetcher({"/t.html": "<table><tr><td>only</td></tr></table>"})
        link = LinkRecord("http://page.test/t.html", "x", "")
        assert classify_link(link, fetcher) == CLASS_OTHER

    def test_fetch_failure_carried_on_record(self, fixture_fetcher):
        link = LinkRecord(f"{MIKDB_BASE}/gone.html", "x", "")
        assert classify_link(link, fixture_fetcher) == CLASS_OTHER
        assert link.error == "not_found"


class TestParseHtmlTables:
    def test_header_and_rows(self):
        html = """<table>
        <tr><th>Symbol</th><th>ChrLoc</th></tr>
        <tr><td>H2AC1</td><td>6p22.2</td></tr>
        <tr><td>BRCA1</td><td>17q21</td></tr>
        </table>"""
        tables = parse_html_tables(html)
        assert len(tables) == 1
        t = tables[0]
        assert t.column_names == ["Symbol", "ChrLoc"]
        assert [c.type for c in t.columns] == ["string", "string"]
        assert t.rows == [["H2AC1", "6p22.2"], ["BRCA1", "17q21"]]

    def test_integer_inference(self):
        html = "<table><tr><th>n</th></tr><tr><td>1</td></tr><tr><td>2</td></tr><tr><td>3</td></tr></table>"
        t = parse_html_tables(html)[0]
        assert t.columns[0].type == "integer"
        assert [r[0] for r in t.rows] == [1, 2, 3]

    def test_first_row_header_when_no_th(self):
        html = "<table><tr><td>name</td><td>count</td></tr><tr><td>a</td><td>1</td></tr></table>"
        t = parse_html_tables(html)[0]
        assert t.column_names == ["name", "count"]

    def test_ragged_rows_padded(self):
        html = """<table><tr><th>a</th><th>b</th></tr>
        <tr><td>1</td></tr><tr><td>2</td><td>3</td><td>4</td></tr></table>"""
        t = parse_html_tables(html)[0]
        assert all(len(r) == 2 for r in t.rows)

    def test_unclosed_cells_recovered(self):
        html = "<table><tr><th>a<th>b<tr><td>1<td>2</table>"
        t = parse_html_tables(html)[0]
        assert t.column_names == ["a", "b"]
        assert t.rows == [[1, 2]]

    def test_uniprot_fixture_table(self, fixture_fetcher):
        resp = fixture_fetcher.get(f"{UNIPROT_BASE}/proteome/h2a.html")
        tables = parse_html_tables(resp.text)
        assert len(tables) == 1
        t = tables[0]
        assert t.column_names == [
            "Entry", "Entry Name", "Protein Names", "Gene Names", "Organism", "Length",
        ]
        assert t.columns[-1].type == "integer"
        assert t.rows[0] == [
            "P0C0S8", "H2A1_HUMAN", "Histone H2A type 1", "H2AC11", "Homo sapiens", 130,
        ]
        assert len(t.rows) == 3

    def test_zero_tables(self):
        assert parse_html_tables("<p>hello</p>") == []


class TestForms:
    def test_text_and_submit(self):
        html = '<form action="/go"><input type="text" name="Phenotype"/><input type="submit"/></form>'
        forms = extract_forms(html, "http://f.test/page")
        assert len(forms) == 1
        form = forms[0]
        assert form.action_url == "http://f.test/go"
        assert form.method == "GET"
        assert [(f.name, f.kind) for f in form.fields] == [
            ("Phenotype", "text"),
            ("submit", "submit"),
        ]

    def test_select_options_in_order(self):
        html = """<form><select name="organism">
        <option>human</option><option>mouse</option><option>rat</option>
        </select></form>"""
        form = extract_forms(html, "http://f.test/")[0]
        assert form.fields[0].options == ["human", "mouse", "rat"]
        assert form.fields[0].default == "human"

    def test_action_defaults_to_page_url(self):
        form = extract_forms("<form><input name='q'/></form>", "http://f.test/page.html")[0]
        assert form.action_url == "http://f.test/page.html"

    def test_mikdb_fixture_form_manifest(self, fixture_fetcher):
        resp = fixture_fetcher.get(f"{MIKDB_BASE}/search.html")
        forms = extract_forms(resp.text, f"{MIKDB_BASE}/search.html")
        assert len(forms) == 1
        form = forms[0]
        assert form.method == "POST"
        assert form.action_url == f"{MIKDB_BASE}/mip.php"
        assert [(f.name, f.kind) for f in form.fields] == [
            ("Phenotype", "text"),
            ("submit", "submit"),
        ]


class TestPlanFormFill:
    def test_lone_text_field(self, fixture_fetcher):
        resp = fixture_fetcher.get(f"{MIKDB_BASE}/search.html")
        form = extract_forms(resp.text, f"{MIKDB_BASE}/search.html")[0]
        fill = plan_form_fill(form, "H2A histone", ["h2a", "histone"], FixtureAssistant())
        assert fill.assignments == {"Phenotype": "H2A histone"}

    def test_all_hidden_rejected(self):
        form = extract_forms(
            '<form><input type="hidden" name="token" value="x"/></form>', "http://f/"
        )[0]
        with pytest.raises(FormError):
            plan_form_fill(form, "q", [], FixtureAssistant())

    def test_select_keyword_option(self):
        html = """<form><select name="panel">
        <option>metabolome</option><option>histone set</option>
        </select></form>"""
        form = extract_forms(html, "http://f/")[0]
        fill = plan_form_fill(form, "histone", ["histone"], FixtureAssistant())
        assert fill.assignments["panel"] == "histone set"

    def test_invalid_assignment_rejected_after_retry(self):
        class BadAssistant:
            def fill_form(self, form, retrieval_query, keywords):
                return {"ghost_field": "x"}

        form = extract_forms("<form><input name='q'/></form>", "http://f/")[0]
        with pytest.raises(Exception):
            plan_form_fill(form, "q", [], BadAssistant())


class TestExecuteForm:
    def test_get_encodes_query_string(self):
        site = FixtureSite()
        seen = {}

        def handler(params):
            seen.update(params)
            return "text/html", "<p>ok</p>"

        site.add_handler("/go", handler)
        fetcher = FixtureFetcher({"http://f.test": site})
        form = extract_forms('<form action="/go"><input name="q"/></form>', "http://f.test/")[0]
        execute_form(FormFill({"q": "h2a"}), form, fetcher)
        assert seen == {"q": "h2a"}
        method, url, _ = fetcher.log[-1]
        assert method == "GET" and "q=h2a" in url

    def test_post_body_encoding(self, fixture_fetcher):
        resp = fixture_fetcher.get(f"{MIKDB_BASE}/search.html")
        form = extract_forms(resp.text, f"{MIKDB_BASE}/search.html")[0]
        result = execute_form(
            FormFill({"Phenotype": "H2A histone"}), form, fixture_fetcher
        )
        method, url, data = fixture_fetcher.log[-1]
        assert method == "POST" and url == f"{MIKDB_BASE}/mip.php"
        assert data == {"Phenotype": "H2A histone"}
        # the standard form encoding of that payload
        assert urlencode(data) == "Phenotype=H2A+histone"
        assert "H2AC1" in result.text

    def test_hidden_defaults_preserved(self):
        site = FixtureSite()
        seen = {}
        site.add_handler("/go", lambda p: (seen.update(p), ("text/html", "<p>ok</p>"))[1])
        fetcher = FixtureFetcher({"http://f.test": site})
        form = extract_forms(
            '<form action="/go"><input type="hidden" name="tok" value="t1"/><input name="q"/></form>',
            "http://f.test/",
        )[0]
        execute_form(FormFill({"q": "x"}), form, fetcher)
        assert seen == {"tok": "t1", "q": "x"}


class TestRankDownloadables:
    def test_single_candidate(self, embedder):
        only = LinkRecord("http://d/x.csv", "data", "")
        assert rank_downloadables([only], "q", embedder) is only

    def test_filename_tokens_win(self, embedder):
        a = LinkRecord("http://d/other_stuff.csv", "download", "archive")
        b = LinkRecord("http://d/h2a_histone.csv", "download", "archive")
        best = rank_downloadables([a, b], "h2a histone", embedder)
        assert best is b

    def test_tie_breaks_lexicographic(self, embedder):
        a = LinkRecord("http://d/b.csv", "same words", "same context")
        b = LinkRecord("http://d/a.csv", "same words", "same context")
        best = rank_downloadables([a, b], "irrelevant term zz", embedder)
        assert best.url == "http://d/a.csv"


@pytest.fixture()
def wrapper(fixture_fetcher, embedder):
    return SmartWrapper(fixture_fetcher, embedder, FixtureAssistant())


class TestSmartWrap:
    def test_csv_site(self, wrapper):
        outcome = wrapper.wrap(f"{ANNOT_BASE}/", "h2a histone expression annotations", ["h2a"])
        assert outcome.ok
        table = outcome.table
        assert table.provenance["method"] == CLASS_DOWNLOADABLE
        assert table.n_rows == 4
        assert table.column_names == ["Symbol", "Tissue", "ExpressionLevel"]

    def test_form_site(self, wrapper):
        outcome = wrapper.wrap(f"{MIKDB_BASE}/", "H2A histone", ["h2a", "histone"])
        assert outcome.ok
        table = outcome.table
        assert table.provenance["method"] == "form"
        assert [r[0] for r in table.rows] == ["H2AC1", "H2AC11"]

    def test_table_site(self, wrapper):
        outcome = wrapper.wrap(f"{UNIPROT_BASE}/", "H2A histone", ["h2a", "histone"])
        assert outcome.ok
        assert outcome.table.provenance["method"] == CLASS_HTML_TABLE
        assert outcome.table.n_rows == 3

    def test_dead_link_unsuitable_not_found(self, wrapper):
        outcome = wrapper.wrap("http://mikdb.test/really/missing", "q", [])
        assert not outcome.ok
        assert outcome.unsuitable
        assert outcome.error_class == "not_found"

    def test_no_strategy_unsuitable(self, embedder):
        fetcher = page_fetcher({"/": '<a href="p.html">histone page</a>', "/p.html": "<p>words</p>"})
        wrapper = SmartWrapper(fetcher, embedder, FixtureAssistant())
        outcome = wrapper.wrap("http://page.test/", "histone", ["histone"])
        assert outcome.unsuitable and outcome.error_class == "no_data"

    def test_downloadable_priority_over_form(self, embedder):
        site = FixtureSite()
        site.add_page(
            "/",
            """<a href="histone_data.csv">histone csv download</a>
               <a href="search.html">histone search form</a>""",
        )
        site.add_page("/histone_data.csv", "Symbol,Count\nH2AC1,1\n", content_type="text/csv")
        site.add_page("/search.html", '<form action="go"><input name="q"/></form>')
        calls = []
        site.add_handler("/go", lambda p: calls.append(p) or ("text/html", "<p></p>"))
        fetcher = FixtureFetcher({"http://prio.test": site})
        wrapper = SmartWrapper(fetcher, embedder, FixtureAssistant())
        outcome = wrapper.wrap("http://prio.test/", "histone", ["histone"])
        assert outcome.ok
        assert outcome.table.provenance["method"] == CLASS_DOWNLOADABLE
        assert calls == []  # the form was never executed

    def test_form_result_without_table_synthesized(self, embedder):
        site = FixtureSite()
        site.add_page("/", '<a href="search.html">histone gene search</a>')
        site.add_page("/search.html", '<form action="go"><input name="q"/></form>')
        site.add_handler(
            "/go",
            lambda p: ("text/html", "<p>Gene: H2AC1</p><p>Location: 6p22.2</p>"),
        )
        fetcher = FixtureFetcher({"http://synth.test": site})
        wrapper = SmartWrapper(fetcher, embedder, FixtureAssistant())
        outcome = wrapper.wrap("http://synth.test/", "histone gene", ["histone", "gene"])
        assert outcome.ok
        assert outcome.table.provenance["method"] == "assistant-synthesized"
        assert ["Gene", "H2AC1"] in outcome.table.rows


class TestExecuteProcess:
    def test_stored_form_process(self, fixture_fetcher, embedder):
        pd = parse_pd(
            f"""create process MikdbFixture
              at {MIKDB_BASE}/search.html
              access browser
              accepts filter ( Phenotype string )
              returns table ( Symbol string primary key, ChrLoc string, Disease string );"""
        )
        table = execute_process(
            pd, "H2A histone", ["h2a"], fixture_fetcher, FixtureAssistant(), embedder
        )
        assert table.column_names == ["Symbol", "ChrLoc", "Disease"]
        assert table.provenance["method"] == "process_description"
        assert [r[0] for r in table.rows] == ["H2AC1", "H2AC11"]

    def test_stored_table_process(self, fixture_fetcher, embedder):
        pd = parse_pd(
            f"""create process UniprotFixture
              at {UNIPROT_BASE}/proteome/h2a.html
              access browser
              accepts filter ( ProteinName string )
              returns table ( Entry string primary key, EntryName string, Length int );"""
        )
        table = execute_process(
            pd, "H2A histone", ["h2a"], fixture_fetcher, FixtureAssistant(), embedder
        )
        assert table.column_names == ["Entry", "EntryName", "Length"]
        assert table.rows[0] == ["P0C0S8", "H2A1_HUMAN", 130]

    def test_missing_columns_fail(self, fixture_fetcher, embedder):
        pd = parse_pd(
            f"""create process Bad
              at {UNIPROT_BASE}/proteome/h2a.html
              access browser
              accepts filter ( X string )
              returns table ( Nonexistent string );"""
        )
        with pytest.raises(Exception):
            execute_process(pd, "q", [], fixture_fetcher, FixtureAssistant(), embedder)


MALFORMED_SNIPPETS = [
    "<table><tr><td>unclosed",
    "<a href=>empty</a>",
    "<form><select><option>no names",
    "<<<>>>&&&;;;",
    "<table><table><tr><td>nested</table>",
    "\x00\x01binary\x02garbage",
    "<a href='x.html'>link<table><tr><th>h</th><tr><td>1</td>",
    "<form action='go'><input name='q' value='<tag>'/><form><input/>",
    "<td>floating cell</td><tr>floating row</tr>",
    "<option selected>orphan option</option>",
]


class TestRobustness:
    def test_malformed_fragments(self):
        for snippet in MALFORMED_SNIPPETS:
            scan = scan_html(snippet)
            assert scan is not None
            parse_html_tables(snippet)
            extract_forms(snippet, "http://x/")

    def test_random_fuzz_never_crashes(self, embedder):
        rng = random.Random(777)
        fragments = [
            "<table>", "</table>", "<tr>", "<td>", "<th>", "</td>", "<form>",
            "</form>", "<input name='q'>", "<select name='s'>", "<option>",
            "<a href='x'>", "</a>", "text", "1,2,3", "&amp;", "&bogus;", "<!--",
            "-->", "<script>", "\x00", "🧬", "<div", ">", "='", "\"",
        ]
        for _ in range(100):
            blob = "".join(rng.choice(fragments) for _ in range(rng.randint(1, 60)))
            scan = scan_html(blob)
            assert isinstance(scan.tables, list)
            parse_html_tables(blob)
            extract_forms(blob, "http://x/")
