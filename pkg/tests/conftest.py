import io
import json
from pathlib import Path

import pytest

from skillgraph.config import ServiceConfig
from skillgraph.engine import Engine
from skillgraph.graph import ingest, ingest_file

FIXTURES = Path(__file__).parent / "fixtures"
GOLDEN = Path(__file__).parent / "golden"
FIXED_NOW = "2025-01-01T00:00:00+00:00"


def jsonl(records) -> io.StringIO:
    return io.StringIO("\n".join(json.dumps(r, ensure_ascii=False) for r in records) + "\n")


def graph_from(records, **kw):
    kw.setdefault("now", FIXED_NOW)
    return ingest(jsonl(records), **kw)


@pytest.fixture(scope="session")
def fixture_graph():
    graph, _ = ingest_file(FIXTURES / "skills.jsonl", now=FIXED_NOW)
    return graph


@pytest.fixture(scope="session")
def fixture_engine(fixture_graph):
    return Engine.from_graph(fixture_graph, ServiceConfig())


@pytest.fixture(scope="session")
def mismatch_engine():
    from skillgraph.evaluation.corpora import mismatch_corpus

    graph, summary = graph_from(mismatch_corpus())
    assert not summary.rejected
    return Engine.from_graph(graph, ServiceConfig())


@pytest.fixture(scope="session")
def synthetic_engine():
    """10k-skill corpus, English index only (building both languages doubles the setup time)."""
    from skillgraph.evaluation.corpora import synthetic_corpus

    graph, summary = graph_from(list(synthetic_corpus()))
    assert not summary.rejected
    return Engine.from_graph(graph, ServiceConfig(languages=["en"]))
