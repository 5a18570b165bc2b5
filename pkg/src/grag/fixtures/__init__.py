"""Bundled high-entropy-alloy fixtures for offline runs and tests.

Ships a small document corpus, a gazetteer and alias table covering its
entities, a ten-query evaluation dataset with ground truths, the default
prompt template, and a pre-built knowledge graph derived from the corpus
via the link pipeline.
"""

from importlib.resources import files
from pathlib import Path

CORPUS = "hea_corpus.jsonl"
GAZETTEER = "gazetteer.jsonl"
ALIASES = "aliases.jsonl"
QUERIES = "queries.jsonl"
TEMPLATE = "prompt_template.txt"
GRAPH = "hea.graph"


def fixture_path(name: str) -> Path:
    """Filesystem path of a bundled fixture file."""
    return Path(str(files("grag.fixtures") / name))
