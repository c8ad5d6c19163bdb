"""Shared fixtures: the in-process fixture web, engines, corpora."""

from __future__ import annotations

import pytest

from bioquery.assistant import FixtureAssistant
from bioquery.corpus import build_index
from bioquery.embedding import HashingEmbedder
from bioquery.engine import Engine, EngineConfig, InMemoryRunStore
from bioquery.fetch import FixtureFetcher
from bioquery.fixtures import (
    EXAMPLE_QUERY,
    fixture_documents,
    standard_sites,
)
from bioquery.keywords import LocalBooleanBackend
from bioquery.procdesc import ProcessKB
from bioquery.wrapper import SmartWrapper

MIKDB_BASE = "http://mikdb.test"
UNIPROT_BASE = "http://uniprot.test"
ANNOT_BASE = "http://annot.test"


@pytest.fixture(scope="session")
def embedder() -> HashingEmbedder:
    return HashingEmbedder(dim=1024)


@pytest.fixture()
def fixture_fetcher() -> FixtureFetcher:
    sites = standard_sites()
    return FixtureFetcher(
        {
            MIKDB_BASE: sites["mikdb"],
            UNIPROT_BASE: sites["uniprot"],
            ANNOT_BASE: sites["annot"],
        }
    )


@pytest.fixture()
def fixture_docs():
    return fixture_documents(MIKDB_BASE, UNIPROT_BASE, annotation_base=ANNOT_BASE)


@pytest.fixture()
def fixture_index(fixture_docs, embedder):
    return build_index(fixture_docs, embedder)


def make_engine(
    index,
    embedder,
    fetcher,
    kb: ProcessKB | None = None,
    assistant: FixtureAssistant | None = None,
    **config_overrides,
) -> Engine:
    assistant = assistant or FixtureAssistant()
    config = EngineConfig(example_queries=[EXAMPLE_QUERY], **config_overrides)
    return Engine(
        index=index,
        embedder=embedder,
        assistant=assistant,
        fetcher=fetcher,
        kw_backend=LocalBooleanBackend(index),
        kb=kb or ProcessKB(),
        wrapper=SmartWrapper(fetcher, embedder, assistant),
        store=InMemoryRunStore(),
        config=config,
    )


@pytest.fixture()
def engine(fixture_index, embedder, fixture_fetcher) -> Engine:
    return make_engine(fixture_index, embedder, fixture_fetcher)


EXPECTED_JOIN_CSV = (
    "GeneSymbol,ProteinID,EntryName,ProteinNames,Organism,Length,ChrLoc,InfertilityData\n"
    "H2AC1,Q96QV6,H2A1A_HUMAN,Histone H2A type 1-A,Homo sapiens,131,6p22.2,"
    "Male infertility (teratozoospermia)\n"
    "H2AC11,P0C0S8,H2A1_HUMAN,Histone H2A type 1,Homo sapiens,130,6p22.1,"
    "Male infertility (oligozoospermia)\n"
)
