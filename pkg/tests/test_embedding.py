import httpx
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import graph_from
from skillgraph.embedding import DIMENSION, EmbeddingError, HashingEmbedder, HttpEmbedder, compose_text, embed_nodes


def node(**kw):
    rec = {"id": "esco:S1", "kind": "skill", "framework": "ESCO"}
    rec.update(kw)
    return graph_from([rec])[0].get_node("esco:S1")


def test_compose_text_examples():
    n = node(labels={"en": "data analysis"}, descriptions={"en": "inspecting data"})
    assert compose_text(n, "en") == ("data analysis\n\ninspecting data", False)
    assert compose_text(n, "en") == compose_text(n, "en")
    with_alts = node(labels={"en": "SQL"}, alt_labels={"en": ["structured query language", "sequel"]})
    assert compose_text(with_alts, "en")[0] == "SQL\nstructured query language; sequel\n"


def test_compose_text_language_fallback():
    n = node(labels={"fr": "gestion de classe"}, descriptions={"fr": "tenir une classe"})
    assert compose_text(n, "en") == ("gestion de classe\n\ntenir une classe", True)


@settings(max_examples=100)
@given(st.text(max_size=80))
def test_fallback_vectors_are_unit_and_deterministic(text):
    emb = HashingEmbedder()
    a, b = emb.embed([text, text])
    assert a.shape == (DIMENSION,) and a.dtype == np.float32
    assert abs(float(np.linalg.norm(a)) - 1.0) <= 1e-6
    assert np.array_equal(a, b)


def test_trigram_similarity_ordering():
    a, b, c = HashingEmbedder().embed(["data analysis", "data analyses", "network routing"])
    assert float(a @ b) > float(a @ c)
    assert float(b @ a) > float(b @ c)


def test_embed_nodes_only_language_with_text(fixture_graph):
    embs = embed_nodes(fixture_graph.nodes(), "en", HashingEmbedder())
    ids = {e.node_id for e in embs}
    assert "esco:S13" not in ids and "esco:S12" in ids
    assert all(e.language == "en" and len(e.text_hash) == 16 for e in embs)


def _client(handler):
    return httpx.Client(transport=httpx.MockTransport(handler))


def test_http_embedder_contract_and_normalization():
    seen = {}

    def handler(request):
        seen["body"] = request.read()
        return httpx.Response(200, json={"vectors": [[2.0] + [0.0] * (DIMENSION - 1)]})

    emb = HttpEmbedder("http://embed/v1", client=_client(handler))
    out = emb.embed(["hello"], "fr")
    assert b'"lang":"fr"' in seen["body"].replace(b" ", b"") and out[0][0] == pytest.approx(1.0)


def test_http_embedder_dimension_mismatch():
    emb = HttpEmbedder("http://embed/v1", client=_client(lambda r: httpx.Response(200, json={"vectors": [[1.0, 0.0]]})))
    with pytest.raises(EmbeddingError, match="expected"):
        emb.embed(["x"])


def test_http_embedder_retries_then_fails():
    calls = []

    def handler(request):
        calls.append(1)
        return httpx.Response(503)

    emb = HttpEmbedder("http://embed/v1", retries=3, backoff=0.0, client=_client(handler))
    with pytest.raises(EmbeddingError, match="unreachable"):
        emb.embed(["x"])
    assert len(calls) == 3


def test_http_embedder_recovers_after_transient_error():
    state = {"n": 0}

    def handler(request):
        state["n"] += 1
        if state["n"] == 1:
            return httpx.Response(500)
        return httpx.Response(200, json={"vectors": [[0.0, 3.0] + [0.0] * (DIMENSION - 2)]})

    emb = HttpEmbedder("http://embed/v1", backoff=0.0, client=_client(handler))
    assert emb.embed(["x"])[0][1] == pytest.approx(1.0)
