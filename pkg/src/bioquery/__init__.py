"""bioquery: natural-language data queries over deep-web sources.

Discovers candidate data sources from a literature corpus, wraps
heterogeneous web resources (files, HTML tables, search forms) into
relational tables, and integrates them through a declarative query layer.
"""

__version__ = "0.1.0"

from .corpus import CorpusIndex, Document, ingest_corpus, top_n
from .embedding import HashingEmbedder, RemoteEmbedder, cosine_similarity, embed_text
from .engine import Engine, EngineConfig
from .table import DataTable

__all__ = [
    "__version__",
    "CorpusIndex",
    "Document",
    "ingest_corpus",
    "top_n",
    "HashingEmbedder",
    "RemoteEmbedder",
    "cosine_similarity",
    "embed_text",
    "Engine",
    "EngineConfig",
    "DataTable",
]
