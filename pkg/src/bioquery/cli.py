"""Command line interface.

Subcommands: index (build/info), query (auto or guided in the terminal),
pd (parse/add/list), bioflow (run), eval, serve, demo.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from . import __version__
from .assistant import FixtureAssistant, RemoteAssistant, load_rules
from .corpus import ingest_corpus, load_index, save_index
from .embedding import HashingEmbedder, RemoteEmbedder
from .engine import Engine, EngineConfig, FileRunStore, InMemoryRunStore
from .errors import EngineError, ParseError, SemanticError
from .fetch import HttpFetcher
from .keywords import LocalBooleanBackend, RemoteBibliographicBackend
from .metrics import compute_report, load_run_file, render_report_table
from .procdesc import ProcessKB, parse_pd, render_pd
from .wrapper import SmartWrapper


@click.group()
@click.version_option(version=__version__)
def main() -> None:
    """Natural-language data queries over deep-web sources."""


# ------------------------------------------------------------------ index


@main.group()
def index() -> None:
    """Corpus index management."""


@index.command("build")
@click.option("--corpus", "corpus_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--dim", default=1024, show_default=True)
@click.option("--workers", default=1, show_default=True)
def index_build(corpus_path: str, out_path: str, dim: int, workers: int) -> None:
    """Embed a line-delimited corpus file into an index."""
    embedder = HashingEmbedder(dim=dim)
    idx = ingest_corpus(corpus_path, embedder, workers=workers)
    save_index(idx, out_path)
    click.echo(f"indexed {len(idx)} documents (dim {dim}) -> {out_path}")
    if idx.rejections:
        click.echo(f"{len(idx.rejections)} records rejected:", err=True)
        for rej in idx.rejections:
            click.echo(f"  line {rej.line_no}: {rej.reason}", err=True)


@index.command("info")
@click.argument("index_path", type=click.Path(exists=True))
def index_info(index_path: str) -> None:
    idx = load_index(index_path)
    click.echo(
        json.dumps(
            {
                "documents": len(idx),
                "dim": idx.dim,
                "embedder": idx.embedder_signature,
            },
            indent=2,
        )
    )


# ------------------------------------------------------------------ pd


@main.group()
def pd() -> None:
    """Process description tools."""


@pd.command("parse")
@click.argument("path", type=click.Path(exists=True))
def pd_parse(path: str) -> None:
    """Parse and reprint a .pd file canonically."""
    try:
        parsed = parse_pd(Path(path).read_text(encoding="utf-8"))
    except (ParseError, SemanticError) as exc:
        raise click.ClickException(str(exc)) from exc
    click.echo(render_pd(parsed), nl=False)


@pd.command("add")
@click.argument("path", type=click.Path(exists=True))
@click.option("--kb", "kb_path", required=True, type=click.Path())
@click.option("--overwrite", is_flag=True)
def pd_add(path: str, kb_path: str, overwrite: bool) -> None:
    try:
        parsed = parse_pd(Path(path).read_text(encoding="utf-8"))
        kb = ProcessKB(kb_path)
        kb.add(parsed, overwrite=overwrite)
    except (ParseError, SemanticError) as exc:
        raise click.ClickException(str(exc)) from exc
    click.echo(f"stored {parsed.name} in {kb_path}")


@pd.command("list")
@click.option("--kb", "kb_path", required=True, type=click.Path(exists=True))
def pd_list(kb_path: str) -> None:
    kb = ProcessKB(kb_path)
    for name in kb.names():
        entry = kb.get(name)
        assert entry is not None
        click.echo(f"{name}\t{entry.url}")


# ------------------------------------------------------------------ engine wiring


def _build_engine(
    corpus: str | None,
    index_path: str | None,
    kb_path: str | None,
    backend: str,
    dim: int,
    run_dir: str | None,
    rules: str | None,
    politeness: float,
    link_threshold: float,
    top_n: int,
    expansion_k: int,
    min_combo: int,
    remote_embed_url: str | None,
    remote_embed_model: str | None,
    assistant_url: str | None,
    pub_url: str | None,
    pub_key: str | None,
) -> Engine:
    if backend == "deterministic":
        embedder = HashingEmbedder(dim=dim)
    else:
        if not remote_embed_url or not remote_embed_model:
            raise click.ClickException(
                "--backend remote needs --remote-embed-url and --remote-embed-model"
            )
        embedder = RemoteEmbedder(remote_embed_url, remote_embed_model, dim=dim)

    if index_path:
        idx = load_index(index_path)
    elif corpus:
        idx = ingest_corpus(corpus, embedder)
    else:
        raise click.ClickException("provide --index or --corpus")

    assistant = (
        RemoteAssistant(assistant_url)
        if assistant_url
        else FixtureAssistant(load_rules(rules) if rules else None)
    )
    if pub_url:
        kw_backend = RemoteBibliographicBackend(pub_url, api_key=pub_key)
    else:
        kw_backend = LocalBooleanBackend(idx)

    fetcher = HttpFetcher(politeness_delay=politeness)
    kb = ProcessKB(kb_path) if kb_path else ProcessKB()
    wrapper = SmartWrapper(fetcher, embedder, assistant, relevance_threshold=link_threshold)
    store = FileRunStore(run_dir) if run_dir else InMemoryRunStore()
    config = EngineConfig(
        expansion_k=expansion_k,
        per_query_n=top_n,
        final_cut=top_n,
        min_combo=min_combo,
    )
    return Engine(
        index=idx,
        embedder=embedder,
        assistant=assistant,
        fetcher=fetcher,
        kw_backend=kw_backend,
        kb=kb,
        wrapper=wrapper,
        store=store,
        config=config,
    )


_engine_options = [
    click.option("--corpus", type=click.Path(exists=True), default=None),
    click.option("--index", "index_path", type=click.Path(exists=True), default=None),
    click.option("--kb", "kb_path", type=click.Path(), default=None),
    click.option(
        "--backend",
        type=click.Choice(["deterministic", "remote"]),
        default="deterministic",
        show_default=True,
    ),
    click.option("--dim", default=1024, show_default=True),
    click.option("--run-dir", type=click.Path(), default=None),
    click.option("--rules", type=click.Path(exists=True), default=None),
    click.option("--politeness", default=0.5, show_default=True),
    click.option("--link-threshold", default=0.15, show_default=True),
    click.option("--top-n", default=4, show_default=True),
    click.option("--expansion-k", default=5, show_default=True),
    click.option("--min-combo", "-L", default=2, show_default=True),
    click.option("--remote-embed-url", default=None),
    click.option("--remote-embed-model", default=None),
    click.option("--assistant-url", default=None),
    click.option("--pub-url", default=None),
    click.option("--pub-key", default=None),
]


def engine_options(fn):
    for option in reversed(_engine_options):
        fn = option(fn)
    return fn


@main.command("query")
@click.argument("text")
@click.option("--knowledge", default=None)
@click.option("--guided", is_flag=True)
@click.option("--format", "fmt", type=click.Choice(["csv", "tsv", "json"]), default="csv")
@engine_options
def query_cmd(text: str, knowledge: str | None, guided: bool, fmt: str, **kw) -> None:
    """Answer a natural-language data query."""
    engine = _build_engine(**kw)
    if not guided:
        run = engine.run_auto(text, knowledge=knowledge)
    else:
        run = engine.submit(text, mode="guided", knowledge=knowledge)
        while True:
            try:
                choice = engine.wait_for_choice(run.id, timeout=300.0)
            except EngineError:
                break
            except TimeoutError:
                break
            click.echo(f"\n[{choice.choice_kind}] pick one" + (" or more (comma-separated)" if choice.multi else "") + ":")
            for i, option in enumerate(choice.options):
                click.echo(f"  {i}. {option.label}  {option.detail.get('data_link', option.detail.get('url', ''))}")
            raw = click.prompt("selection", default="0")
            picks = []
            for part in raw.split(","):
                part = part.strip()
                if part.isdigit() and int(part) < len(choice.options):
                    picks.append(choice.options[int(part)].id)
            engine.submit_choice(run.id, picks or [choice.options[0].id])
            run_state = engine.get_run(run.id).state
            if run_state in ("done", "failed"):
                break
        run = engine.wait(run.id)

    for step in run.steps:
        click.echo(f"[{step.stage}] {json.dumps(step.payload)[:160]}", err=True)
    if run.state == "failed":
        raise click.ClickException(f"run failed: {run.error}")
    assert run.result is not None
    if fmt == "json":
        click.echo(run.result.render_json())
    else:
        click.echo(run.result.render_delimited("," if fmt == "csv" else "\t"), nl=False)


@main.command("bioflow")
@click.option("--query", "query_text", default=None, help="BioFlow text (or use --file)")
@click.option("--file", "query_file", type=click.Path(exists=True), default=None)
@click.option("--table", "tables", multiple=True, help="url=path.csv bindings")
@click.option("--format", "fmt", type=click.Choice(["csv", "tsv", "json"]), default="csv")
def bioflow_cmd(query_text: str | None, query_file: str | None, tables: tuple[str, ...], fmt: str) -> None:
    """Parse and execute a BioFlow statement over bound tables."""
    from .bioflow import TableRegistryFacade, execute, parse_bioflow
    from .table import parse_delimited

    if not query_text and not query_file:
        raise click.ClickException("provide --query or --file")
    source = query_text or Path(query_file).read_text(encoding="utf-8")  # type: ignore[arg-type]
    try:
        plan = parse_bioflow(source)
    except (ParseError, SemanticError) as exc:
        raise click.ClickException(str(exc)) from exc
    registry = {}
    for binding in tables:
        url, _, path = binding.partition("=")
        if not path:
            raise click.ClickException(f"binding {binding!r} is not url=path")
        registry[url] = parse_delimited(Path(path).read_text(encoding="utf-8"))
    try:
        result = execute(plan, TableRegistryFacade(registry))
    except EngineError as exc:
        raise click.ClickException(str(exc)) from exc
    if fmt == "json":
        click.echo(result.render_json())
    else:
        click.echo(result.render_delimited("," if fmt == "csv" else "\t"), nl=False)


@main.command("eval")
@click.argument("run_file", type=click.Path(exists=True))
@click.option("-k", default=4, show_default=True)
@click.option("-m", default=4, show_default=True)
@click.option("--label", default="run")
@click.option("--json", "as_json", is_flag=True)
def eval_cmd(run_file: str, k: int, m: int, label: str, as_json: bool) -> None:
    """Score a retrieval run file."""
    run = load_run_file(run_file, k=k, m=m)
    report = compute_report(run, label=label)
    if as_json:
        click.echo(json.dumps(report.as_dict(), indent=2))
    else:
        click.echo(render_report_table([report]))


@main.command("serve")
@click.option("--port", default=8600, show_default=True)
@click.option("--host", default="127.0.0.1", show_default=True)
@engine_options
def serve_cmd(port: int, host: str, **kw) -> None:
    """Serve the HTTP API over a real corpus."""
    import uvicorn

    from .service import create_app

    engine = _build_engine(**kw)
    uvicorn.run(create_app(engine), host=host, port=port, log_level="warning")


@main.command("demo")
@click.option("--port", default=8600, show_default=True)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option(
    "--no-induce",
    is_flag=True,
    help="Do not store induced process descriptions (keeps every run on the discovery path).",
)
def demo_cmd(port: int, host: str, no_induce: bool) -> None:
    """Serve the API over the bundled fixture world (no external network)."""
    import uvicorn

    from .service import create_app
    from .demo import build_demo_engine

    engine, fixture_server = build_demo_engine(store_induced=not no_induce)
    click.echo(f"fixture web on 127.0.0.1:{fixture_server.port}; API on {host}:{port}")
    try:
        uvicorn.run(create_app(engine), host=host, port=port, log_level="warning")
    finally:
        fixture_server.stop()


if __name__ == "__main__":
    sys.exit(main())
