import random

import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import ref_ndcg5, ref_percentile, ref_precision
from skillgraph.explain import Audience, EvidenceContext, Explanation, Fact, Mode, Sentence
from skillgraph.evaluation.metrics import (
    explanation_metrics,
    latency_profile,
    ndcg_at_5,
    percentile,
    precision_at_k,
)


def test_worked_examples():
    assert ndcg_at_5(["x", "a", "y", "z", "w"], {"a"}) == pytest.approx(0.6309, abs=1e-4)
    assert ndcg_at_5(["a", "b"], {"a", "b"}) == 1.0
    assert precision_at_k(["a", "x"], {"a"}, 5) == 0.2
    assert percentile([10, 20, 30], 50) == 20
    assert percentile(list(range(1, 101)), 95) == 95
    assert latency_profile([30, 10, 20]) == (20, 30)


def test_empty_inputs():
    with pytest.raises(ValueError):
        percentile([], 50)
    with pytest.raises(ValueError):
        precision_at_k(["a"], {"a"}, 0)
    assert ndcg_at_5(["a"], set()) == 0.0
    assert precision_at_k([], {"a"}, 5) == 0.0


def test_against_reference_on_random_cases():
    rng = random.Random(2024)
    universe = [f"n{i}" for i in range(12)]
    for _ in range(1000):
        ranked = rng.sample(universe, rng.randint(0, 10))
        relevant = set(rng.sample(universe, rng.randint(0, 6)))
        k = rng.randint(1, 10)
        assert precision_at_k(ranked, relevant, k) == pytest.approx(ref_precision(ranked, relevant, k), abs=1e-12)
        assert ndcg_at_5(ranked, relevant) == pytest.approx(ref_ndcg5(ranked, relevant), abs=1e-12)
        samples = [rng.randint(0, 50) for _ in range(rng.randint(1, 30))]
        pct = rng.randint(1, 100)
        assert percentile(samples, pct) == ref_percentile(samples, pct)


@given(st.lists(st.integers(0, 1000), min_size=1, max_size=50), st.integers(1, 100))
def test_percentile_is_a_sample_and_monotone(samples, pct):
    v = percentile(samples, pct)
    assert v in samples
    assert percentile(samples, min(100, pct + 1)) >= v


def ctx(ids):
    return EvidenceContext("esco:S1", "SQL", [Fact(i, i) for i in ids], "en", Audience.TEACHER)


def test_coverage_example():
    exp = Explanation(Mode.C2, [Sentence("a", ("def:x",)), Sentence("b", ("ghost",)), Sentence("c d", ("prov:x",))], False, 4)
    m = explanation_metrics([exp], [ctx(["def:x", "prov:x", "rel:x"])])
    assert m.coverage == pytest.approx(2 / 3) and m.unsupported_rate == pytest.approx(1 / 3)
    assert m.citation_precision == pytest.approx(2 / 3) and m.citation_recall == pytest.approx(2 / 3)
    assert m.words_per_sentence == pytest.approx(4 / 3) and m.fallback_rate == 0.0
    assert m.latency_median_ms == 4


def test_freeform_scores_zero():
    exp = Explanation(Mode.C3, [Sentence("a"), Sentence("b")])
    m = explanation_metrics([exp], [ctx(["def:x"])])
    assert m.coverage == 0.0 and m.citation_precision == 0.0 and m.unsupported_rate == 1.0


def test_explanation_metrics_pairing():
    with pytest.raises(ValueError):
        explanation_metrics([], [ctx(["a"])])
