"""Demo wiring: the whole engine over the bundled fixture world.

Used by `bioquery demo`, the browser client's test harness, and the
end-to-end suite. Everything is deterministic and local.
"""

from __future__ import annotations

from .assistant import FixtureAssistant
from .corpus import build_index
from .embedding import HashingEmbedder
from .engine import Engine, EngineConfig, InMemoryRunStore
from .fetch import HttpFetcher
from .fixtures import EXAMPLE_QUERY, FixtureServer, fixture_documents, standard_sites
from .keywords import LocalBooleanBackend
from .procdesc import ProcessKB
from .wrapper import SmartWrapper


def build_demo_engine(
    kb_dir=None, dim: int = 1024, store_induced: bool = True
) -> tuple[Engine, FixtureServer]:
    """Engine + running fixture server; caller stops the server."""
    server = FixtureServer(standard_sites()).start()
    mikdb = server.base_url("mikdb")
    uniprot = server.base_url("uniprot")
    annot = server.base_url("annot")

    embedder = HashingEmbedder(dim=dim)
    docs = fixture_documents(mikdb, uniprot, annotation_base=annot)
    index = build_index(docs, embedder)
    assistant = FixtureAssistant()
    fetcher = HttpFetcher(politeness_delay=0.0)
    engine = Engine(
        index=index,
        embedder=embedder,
        assistant=assistant,
        fetcher=fetcher,
        kw_backend=LocalBooleanBackend(index),
        kb=ProcessKB(kb_dir),
        wrapper=SmartWrapper(fetcher, embedder, assistant),
        store=InMemoryRunStore(),
        config=EngineConfig(example_queries=[EXAMPLE_QUERY], store_induced=store_induced),
    )
    return engine, server
