import math
import random

import httpx
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import graph_from
from oracles import brute_fusion, exact_cosines
from skillgraph.embedding import HashingEmbedder, compose_text
from skillgraph.engine import IndexBundle
from skillgraph.hnsw import SemanticScore
from skillgraph.lexical import LexicalScore
from skillgraph.retrieval import (
    FusionConfig,
    HttpRanker,
    IdentityRanker,
    PerturbationRanker,
    RankerOutput,
    RankerUnavailable,
    Retriever,
    ScoredCandidate,
    Variant,
    fuse,
    minmax_normalize,
    rerank,
    sanitize_order,
)

WORDS = ["data", "model", "team", "plan", "network", "budget", "design", "cloud", "audit", "sales", "risk", "code"]


def random_corpus(rng, n_docs):
    recs = []
    for i in range(n_docs):
        label = " ".join(rng.sample(WORDS, rng.randint(1, 3)))
        desc = " ".join(rng.choice(WORDS) for _ in range(rng.randint(0, 8)))
        recs.append({"id": f"esco:R{i:02d}", "kind": "skill", "labels": {"en": label}, "descriptions": {"en": desc}, "framework": "ESCO"})
    return graph_from(recs)[0]


def retriever_for(graph):
    embedder = HashingEmbedder()
    bundle = IndexBundle.build(graph, embedder, ["en"])
    return Retriever(bundle.lexical, bundle.vectors, embedder), bundle, embedder


def check_fusion_oracle(seed):
    """Hybrid ranking over a random corpus equals brute-force evaluation from independent pools."""
    rng = random.Random(seed)
    graph = random_corpus(rng, rng.randint(3, 20))
    retriever, bundle, embedder = retriever_for(graph)
    query = " ".join(rng.sample(WORDS, rng.randint(1, 2)))
    lex = {h.node_id: h.s_lex for h in bundle.lexical.search_lexical(query, "en", 50).hits}
    texts = {n.id: compose_text(n, "en")[0] for n in graph.nodes()}
    vectors = dict(zip(texts, embedder.embed(list(texts.values()))))
    sem = exact_cosines(vectors, embedder.embed([query])[0])
    for alpha in (0.0, 0.25, 0.5, 1.0):
        got = retriever.search(query, "en", FusionConfig(Variant.HYBRID, alpha, k=20, rerank_n=20)).candidates
        want = brute_fusion(lex, sem, alpha)[:20]
        assert [c.node_id for c in got] == [i for i, _ in want], (seed, alpha, query)
        for c, (_, score) in zip(got, want):
            assert abs(c.s_final - score) <= 1e-9


@pytest.mark.parametrize("seed", range(10))
def test_hybrid_matches_brute_force(seed):
    check_fusion_oracle(seed)


# ------------------------------------------------------------------- fusion


def test_minmax_all_equal_maps_to_one():
    assert minmax_normalize([("a", 2.0), ("b", 2.0)]) == [("a", 1.0), ("b", 1.0)]
    assert minmax_normalize([]) == []


@settings(max_examples=200)
@given(
    st.dictionaries(st.sampled_from("abcdefgh"), st.floats(0, 50, allow_nan=False), max_size=8),
    st.dictionaries(st.sampled_from("abcdefgh"), st.floats(-1, 1, allow_nan=False), max_size=8),
    st.floats(0, 1),
)
def test_fuse_properties(lex, sem, alpha):
    out = fuse([LexicalScore(i, s) for i, s in lex.items()], [SemanticScore(i, s) for i, s in sem.items()], alpha)
    assert {c.node_id for c in out} == set(lex) | set(sem)
    for c in out:
        assert 0.0 <= c.s_lex_norm <= 1.0 and 0.0 <= c.s_sem_norm <= 1.0
        assert -1e-12 <= c.s_final <= 1.0 + 1e-12
        if c.node_id not in lex:
            assert c.s_lex_norm == 0.0 and c.s_lex_raw is None
        if c.node_id not in sem:
            assert c.s_sem_norm == 0.0 and c.s_sem_raw is None
    keys = [(-c.s_final, c.node_id) for c in out]
    assert keys == sorted(keys)
    want = brute_fusion(lex, sem, alpha)
    assert [c.node_id for c in out] == [i for i, _ in want]


def test_fusion_config_validation():
    with pytest.raises(ValueError):
        FusionConfig(alpha=1.5)
    with pytest.raises(ValueError):
        FusionConfig(k=0)
    with pytest.raises(ValueError):
        FusionConfig(k=60)
    with pytest.raises(ValueError):
        FusionConfig(k=10, rerank_n=5)
    grown = FusionConfig().with_k(80)
    assert (grown.k, grown.pool_lex, grown.pool_sem, grown.rerank_n) == (80, 80, 80, 80)


# ------------------------------------------------------------------ variants


def test_variants_on_fixture(fixture_engine):
    r = fixture_engine.retriever
    bm25 = r.search("SQL", "en", FusionConfig(Variant.BM25_ONLY))
    assert bm25.alpha == 1.0 and bm25.candidates[0].node_id == "esco:S1"
    assert all(c.s_lex_raw is not None for c in bm25.candidates)
    dense = r.search("SQL querying", "en", FusionConfig(Variant.DENSE_ONLY))
    assert dense.alpha == 0.0 and all(c.s_lex_raw is None for c in dense.candidates)
    hybrid = r.search("SQL", "en", FusionConfig(Variant.HYBRID, k=3))
    assert len(hybrid.candidates) == 3 and "lexical:phrase" in hybrid.flags
    with pytest.raises(ValueError):
        r.search("   ", "en")


def test_bm25_paraphrase_misses(mismatch_engine):
    res = mismatch_engine.search("optimisation", "en", FusionConfig(Variant.BM25_ONLY))
    assert res.candidates == []
    dense = mismatch_engine.search("optimisation", "en", FusionConfig(Variant.DENSE_ONLY))
    assert dense.candidates[0].node_id == "esco:P01"


def test_java_collision(mismatch_engine):
    dense = mismatch_engine.search("Java", "en", FusionConfig(Variant.DENSE_ONLY))
    hybrid = mismatch_engine.search("Java", "en", FusionConfig(Variant.HYBRID))
    assert dense.candidates[0].node_id == "esco:C02"  # JavaScript wins on trigrams
    assert hybrid.candidates[0].node_id == "esco:C01"


def test_missing_semantic_index_flagged(fixture_engine):
    res = fixture_engine.search("SQL", "de")
    assert "semantic:no-index" in res.flags and "analyzer_fallback" in res.flags


def test_rerank_variant_uses_ranker(fixture_graph):
    retriever, bundle, embedder = retriever_for(fixture_graph)

    class Reverse:
        def rank(self, query, items):
            ids = [it["id"] for it in items]
            return RankerOutput(ids[::-1], {i: float(n) for n, i in enumerate(ids)})

    retriever.ranker = Reverse()
    base = retriever.search("database", "en", FusionConfig(Variant.HYBRID, k=5, rerank_n=5))
    rr = retriever.search("database", "en", FusionConfig(Variant.RERANK, k=5, rerank_n=5))
    assert [c.node_id for c in rr.candidates] == [c.node_id for c in base.candidates][::-1]
    assert rr.candidates[0].rerank_score is not None


# ------------------------------------------------------------------ rerank


def cands(ids):
    return [ScoredCandidate(i, None, 0.5, 0.0, 1.0, 0.5) for i in ids]


@settings(max_examples=300)
@given(
    st.lists(st.text(min_size=1, max_size=4), min_size=1, max_size=15, unique=True),
    st.lists(st.one_of(st.text(max_size=4), st.integers(), st.none()), max_size=25),
)
def test_sanitize_order_is_permutation(original, proposed):
    order, notes = sanitize_order(original, proposed)
    assert sorted(order) == sorted(original)
    clean = [p for p in proposed if isinstance(p, str) and p in original]
    if list(dict.fromkeys(clean)) == clean and set(clean) == set(original) and len(clean) == len(proposed):
        assert notes == [] and order == clean


def test_rerank_violation_and_skip():
    class Liar:
        def rank(self, query, items):
            return RankerOutput(["ghost", items[0]["id"], items[0]["id"]])

    class Down:
        def rank(self, query, items):
            raise RankerUnavailable("offline")

    c = cands(["a", "b", "c"])
    out, flags = rerank("q", c, Liar())
    assert [x.node_id for x in out] == ["a", "b", "c"] and flags == ["rerank_violation"]
    out, flags = rerank("q", c, Down())
    assert [x.node_id for x in out] == ["a", "b", "c"] and flags == ["rerank_skipped"]


def test_perturbation_ranker_deterministic():
    items = [{"id": f"n{i}", "label": "", "snippet": ""} for i in range(10)]
    a = PerturbationRanker(seed=3).rank("query", items)
    b = PerturbationRanker(seed=3).rank("query", items)
    assert a == b and sorted(a.order) == [it["id"] for it in items]


def test_identity_ranker():
    items = [{"id": "x"}, {"id": "y"}]
    assert IdentityRanker().rank("q", items).order == ["x", "y"]


def test_http_ranker_contract():
    def handler(request):
        body = request.read()
        assert b'"candidates"' in body
        return httpx.Response(200, json={"order": ["b", "a"], "scores": {"b": 2, "a": 1}})

    ranker = HttpRanker("http://rank", client=httpx.Client(transport=httpx.MockTransport(handler)))
    out = ranker.rank("q", [{"id": "a", "label": "", "snippet": ""}, {"id": "b", "label": "", "snippet": ""}])
    assert out.order == ["b", "a"] and out.scores == {"b": 2.0, "a": 1.0}
    down = HttpRanker("http://rank", client=httpx.Client(transport=httpx.MockTransport(lambda r: httpx.Response(500))))
    with pytest.raises(RankerUnavailable):
        down.rank("q", [{"id": "a"}])


def test_junk_scores_dropped():
    class Junk:
        def rank(self, query, items):
            return RankerOutput([it["id"] for it in items], {"a": math.nan, "b": "high", "c": 1})

    out, _ = rerank("q", cands(["a", "b", "c"]), Junk())
    assert [x.rerank_score for x in out] == [None, None, 1.0]
