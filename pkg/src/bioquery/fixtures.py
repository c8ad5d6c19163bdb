"""Bundled fixture world: two mini deep-web sites (a form-accessed gene
knowledgebase and a table-accessed protein catalog), a third site with a
direct CSV download, a matching literature corpus, and a local
static+form HTTP server.

Everything here is deterministic, so end-to-end runs replay
byte-identically with zero external network. The demo service and the
test suite share this module.
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from urllib.parse import parse_qsl, urlparse

from .corpus import Document
from .fetch import FixtureSite

# --------------------------------------------------------------------
# mini-MiKDB: reachable only through a phenotype search form (POST)
# --------------------------------------------------------------------

MIKDB_GENES = [
    # symbol, chromosomal location, disease note, match tags
    ("H2AC1", "6p22.2", "Male infertility (teratozoospermia)", "h2a histone"),
    ("H2AC11", "6p22.1", "Male infertility (oligozoospermia)", "h2a histone"),
    ("BRCA1", "17q21.31", "Breast cancer susceptibility", "brca"),
    ("CFTR", "7q31.2", "Cystic fibrosis", "cftr"),
]


def _mikdb_results_page(phenotype: str) -> str:
    needles = [t for t in phenotype.lower().split() if t]
    rows = []
    for symbol, loc, disease, tags in MIKDB_GENES:
        hay = f"{symbol} {disease} {tags}".lower()
        if not needles or any(n in hay for n in needles):
            rows.append(
                f"<tr><td>{symbol}</td><td>{loc}</td><td>{disease}</td></tr>"
            )
    body = "\n".join(rows) if rows else ""
    return f"""<html><head><title>Gene knowledgebase results</title></head>
<body>
<h1>Genes matching phenotype: {phenotype}</h1>
<table>
<tr><th>Symbol</th><th>ChrLoc</th><th>Disease</th></tr>
{body}
</table>
</body></html>"""


def build_mikdb_site() -> FixtureSite:
    site = FixtureSite()
    site.add_page(
        "/",
        """<html><head><title>Male Infertility Knowledgebase</title></head>
<body>
<h1>Male Infertility Knowledgebase</h1>
<p>A curated catalog of genes implicated in male infertility, including the
H2A histone family and other chromatin factors.</p>
<p><a href="search.html">Search infertility genes by phenotype</a>
covering H2A histone variants, protamines and more.</p>
<p><a href="about.html">About the project and curation policy</a></p>
</body></html>""",
    )
    site.add_page(
        "/search.html",
        """<html><head><title>Phenotype search</title></head>
<body>
<h2>Search the gene catalog</h2>
<p>Enter a phenotype or gene family, for example H2A histone.</p>
<form action="mip.php" method="post">
  <input type="text" name="Phenotype" />
  <input type="submit" value="Search" />
</form>
</body></html>""",
    )
    site.add_page(
        "/about.html",
        "<html><head><title>About</title></head><body><p>Curation policy notes.</p></body></html>",
    )
    site.add_handler(
        "/mip.php",
        lambda params: ("text/html", _mikdb_results_page(params.get("Phenotype", ""))),
    )
    return site


# --------------------------------------------------------------------
# mini-UniProt: a static page holding the protein table
# --------------------------------------------------------------------

UNIPROT_ROWS = [
    ("P0C0S8", "H2A1_HUMAN", "Histone H2A type 1", "H2AC11", "Homo sapiens", 130),
    ("Q96QV6", "H2A1A_HUMAN", "Histone H2A type 1-A", "H2AC1", "Homo sapiens", 131),
    ("P04908", "H2A1B_HUMAN", "Histone H2A type 1-B/E", "H2AC4", "Homo sapiens", 130),
]


def build_uniprot_site() -> FixtureSite:
    rows = "\n".join(
        f"<tr><td>{e}</td><td>{en}</td><td>{pn}</td><td>{gn}</td><td>{org}</td><td>{ln}</td></tr>"
        for e, en, pn, gn, org, ln in UNIPROT_ROWS
    )
    site = FixtureSite()
    site.add_page(
        "/",
        """<html><head><title>Protein knowledgebase</title></head>
<body>
<h1>Protein knowledgebase</h1>
<p><a href="proteome/h2a.html">H2A histone protein entries</a> with gene
names, organism and sequence length for each histone record.</p>
<p><a href="stats.html">Release statistics and notes</a></p>
</body></html>""",
    )
    site.add_page(
        "/proteome/h2a.html",
        f"""<html><head><title>H2A histone entries</title></head>
<body>
<h2>H2A histone family</h2>
<table>
<tr><th>Entry</th><th>Entry Name</th><th>Protein Names</th><th>Gene Names</th><th>Organism</th><th>Length</th></tr>
{rows}
</table>
</body></html>""",
    )
    site.add_page(
        "/stats.html",
        "<html><head><title>Stats</title></head><body><p>Release numbers.</p></body></html>",
    )
    return site


# --------------------------------------------------------------------
# mini annotation source: direct CSV download
# --------------------------------------------------------------------

ANNOTATION_CSV = """Symbol,Tissue,ExpressionLevel
H2AC1,testis,12.5
H2AC11,testis,8.1
H2AC4,ovary,3.4
BRCA1,breast,6.2
"""


def build_annotation_site() -> FixtureSite:
    site = FixtureSite()
    site.add_page(
        "/",
        """<html><head><title>Gene expression annotations</title></head>
<body>
<h1>Expression annotations</h1>
<p><a href="data/h2a_annotations.csv">H2A histone expression table (CSV)</a>
for testis and ovary tissue.</p>
</body></html>""",
    )
    site.add_page("/data/h2a_annotations.csv", ANNOTATION_CSV, content_type="text/csv")
    return site


# --------------------------------------------------------------------
# fixture corpora
# --------------------------------------------------------------------

EXAMPLE_QUERY = (
    'Retrieve gene and protein information for all "H2A histone" genes from '
    "UniProt and associated infertility data from the Male Infertility "
    "Knowledgebase (MiKDB)."
)

_DECOY_TOPICS = [
    ("Metabolomic atlas of the zebrafish liver", "zebrafish liver metabolome atlas covering lipid pathways"),
    ("Crop genome browser for hexaploid wheat", "wheat genome browser with syntenic tracks and marker panels"),
    ("Soil microbiome diversity survey methods", "amplicon sequencing pipeline for soil microbial diversity"),
    ("Protein secondary structure benchmark sets", "benchmark collection for secondary structure predictors"),
    ("Clinical trial registry mining toolkit", "registry mining toolkit for oncology trial metadata"),
    ("Coral reef bleaching observation network", "reef bleaching observations with satellite temperature overlays"),
    ("Antibiotic resistance gene tracker", "surveillance resource tracking resistance cassettes in enterobacteria"),
    ("Neuronal calcium imaging repository", "two photon calcium imaging datasets for cortical circuits"),
    ("Plant phenotype ontology alignment", "ontology alignment service for plant phenotype descriptors"),
    ("Viral packaging signal predictor", "predictor of packaging signals in ssRNA viruses"),
]


def fixture_documents(
    mikdb_base: str, uniprot_base: str, annotation_base: str | None = None, misc_base: str = ""
) -> list[Document]:
    """Corpus for the worked example: the two genuine source papers plus
    topic decoys. Access links point into the fixture web."""
    docs = [
        Document(
            id="pmid-mikdb",
            title="Male Infertility Knowledgebase: decoding the genetic and disease landscape",
            abstract=(
                "The Male Infertility Knowledgebase (MiKDB) catalogs every gene and "
                "protein implicated in male infertility. MiKDB genes include the H2A "
                "histone family, and entries are cross-linked to UniProt protein "
                "records with phenotype annotations for teratozoospermia and "
                "oligozoospermia."
            ),
            access_link=f"{mikdb_base}/",
            year=2021,
        ),
        Document(
            id="pmid-uniprot",
            title="The UniProtKB guide to the human proteome",
            abstract=(
                "UniProtKB provides protein sequence and functional annotation for "
                "the human proteome. The guide covers histone proteins including "
                "H2A variants with gene names, organism and sequence length for "
                "every entry."
            ),
            access_link=f"{uniprot_base}/",
            year=2011,
        ),
    ]
    if annotation_base:
        docs.append(
            Document(
                id="pmid-annot",
                title="An expression annotation compendium for chromatin genes",
                abstract=(
                    "Expression annotations across tissues for chromatin genes, "
                    "downloadable as delimited tables."
                ),
                access_link=f"{annotation_base}/",
                year=2019,
            )
        )
    for i, (title, abstract) in enumerate(_DECOY_TOPICS):
        link = f"{misc_base}/misc/{i}.html" if misc_base else f"{mikdb_base}/about.html"
        docs.append(
            Document(
                id=f"pmid-decoy-{i}",
                title=title,
                abstract=abstract,
                access_link=link,
                year=2009 + i,
            )
        )
    return docs


def write_corpus_file(documents: list[Document], path) -> None:
    lines = [
        json.dumps(
            {
                "id": d.id,
                "title": d.title,
                "abstract": d.abstract,
                "link": d.access_link,
                "year": d.year,
            }
        )
        for d in documents
    ]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


_WORD_BANK = [
    "genome", "pathway", "assay", "cohort", "annotation", "sequencing", "marker",
    "expression", "variant", "phenotype", "clinical", "microbiome", "protein",
    "structure", "imaging", "metabolite", "receptor", "signaling", "transcript",
    "epigenome", "lineage", "organoid", "biomarker", "resistance", "enzyme",
]


def synthetic_corpus(n_docs: int, base_link: str = "http://corpus.test") -> list[Document]:
    """Deterministic synthetic corpus of n_docs records.

    Each document gets a mostly doc-specific vocabulary (tokens carry the
    document number) plus a few shared domain words, which keeps retrieval
    benchmarks well-separated without randomness.
    """
    docs = []
    for i in range(n_docs):
        specific = [f"term{i}x{j}" for j in range(12)]
        shared = [_WORD_BANK[(i + j) % len(_WORD_BANK)] for j in range(3)]
        title = f"Resource study {i} on {_WORD_BANK[i % len(_WORD_BANK)]}"
        abstract = " ".join(specific + shared)
        docs.append(
            Document(
                id=f"doc-{i:04d}",
                title=title,
                abstract=abstract,
                access_link=f"{base_link}/{i}",
                year=2001 + (i % 23),
            )
        )
    return docs


# --------------------------------------------------------------------
# local static+form HTTP server
# --------------------------------------------------------------------


@dataclass
class ServedSite:
    prefix: str
    site: FixtureSite


class _FixtureHandler(BaseHTTPRequestHandler):
    sites: dict[str, FixtureSite] = {}

    def log_message(self, *args) -> None:  # silence test output
        pass

    def _route(self) -> tuple[FixtureSite | None, str]:
        parsed = urlparse(self.path)
        parts = parsed.path.split("/", 2)
        prefix = parts[1] if len(parts) > 1 else ""
        rest = "/" + (parts[2] if len(parts) > 2 else "")
        site = self.sites.get(prefix)
        return site, rest

    def _reply(self, status: int, content_type: str, body: bytes) -> None:
        self.send_response(status)
        self.send_header("Content-Type", content_type)
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        if self.command != "HEAD":
            self.wfile.write(body)

    def _serve(self, params: dict[str, str]) -> None:
        site, path = self._route()
        if site is None:
            self._reply(404, "text/plain", b"no such site")
            return
        qs = dict(parse_qsl(urlparse(self.path).query))
        merged = {**qs, **params}
        if path in site.handlers:
            content_type, body = site.handlers[path](merged)
            data = body.encode("utf-8") if isinstance(body, str) else body
            self._reply(200, content_type, data)
            return
        page = site.pages.get(path)
        if page is None:
            self._reply(404, "text/plain", b"not found")
            return
        self._reply(200, page.content_type, page.body)

    def do_GET(self) -> None:  # noqa: N802 (stdlib naming)
        self._serve({})

    def do_HEAD(self) -> None:  # noqa: N802
        self._serve({})

    def do_POST(self) -> None:  # noqa: N802
        length = int(self.headers.get("Content-Length", "0") or 0)
        raw = self.rfile.read(length).decode("utf-8") if length else ""
        self._serve(dict(parse_qsl(raw)))


class FixtureServer:
    """Serves fixture sites under path prefixes on 127.0.0.1.

    base_url(prefix) gives the root for one site, e.g.
    http://127.0.0.1:41371/mikdb
    """

    def __init__(self, sites: dict[str, FixtureSite]):
        handler = type("Handler", (_FixtureHandler,), {"sites": dict(sites)})
        self._server = ThreadingHTTPServer(("127.0.0.1", 0), handler)
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)

    def start(self) -> "FixtureServer":
        self._thread.start()
        return self

    def stop(self) -> None:
        self._server.shutdown()
        self._server.server_close()

    @property
    def port(self) -> int:
        return self._server.server_address[1]

    def base_url(self, prefix: str) -> str:
        return f"http://127.0.0.1:{self.port}/{prefix}"


def standard_sites() -> dict[str, FixtureSite]:
    return {
        "mikdb": build_mikdb_site(),
        "uniprot": build_uniprot_site(),
        "annot": build_annotation_site(),
    }
