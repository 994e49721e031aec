"""Ranking, latency and explanation metrics (binary relevance throughout)."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Collection, Sequence

from ..explain import EvidenceContext, Explanation


def precision_at_k(ranked: Sequence[str], relevant: Collection[str], k: int) -> float:
    """Hits in the top ``k`` divided by ``k``; missing slots count as misses."""
    if k < 1:
        raise ValueError("k must be >= 1")
    rel = set(relevant)
    return sum(1 for nid in ranked[:k] if nid in rel) / k


def dcg_at_k(ranked: Sequence[str], relevant: Collection[str], k: int) -> float:
    rel = set(relevant)
    return sum(1.0 / math.log2(i + 2) for i, nid in enumerate(ranked[:k]) if nid in rel)


def ndcg_at_k(ranked: Sequence[str], relevant: Collection[str], k: int) -> float:
    rel = set(relevant)
    if not rel:
        return 0.0
    ideal = sum(1.0 / math.log2(i + 2) for i in range(min(len(rel), k)))
    return dcg_at_k(ranked, rel, k) / ideal


def ndcg_at_5(ranked: Sequence[str], relevant: Collection[str]) -> float:
    return ndcg_at_k(ranked, relevant, 5)


def percentile(samples: Sequence[float], pct: float) -> float:
    """Nearest-rank percentile: the smallest sample with at least ``pct``% of samples at or below it."""
    if not samples:
        raise ValueError("percentile of an empty sample")
    if not 0 < pct <= 100:
        raise ValueError("pct must lie in (0, 100]")
    ordered = sorted(samples)
    rank = max(1, math.ceil(pct / 100.0 * len(ordered)))
    return ordered[rank - 1]


def latency_profile(samples: Sequence[float]) -> tuple[float, float]:
    """(median, p95) by nearest rank."""
    return percentile(samples, 50), percentile(samples, 95)


@dataclass
class ExplanationMetrics:
    explanations: int
    sentences: int
    coverage: float
    unsupported_rate: float
    citation_precision: float
    citation_recall: float
    words_per_sentence: float
    fallback_rate: float
    latency_median_ms: float

    def to_dict(self) -> dict:
        return asdict(self)


def explanation_metrics(
    explanations: Sequence[Explanation], contexts: Sequence[EvidenceContext]
) -> ExplanationMetrics:
    """Mode-level faithfulness metrics.

    Coverage and citation precision pool all sentences/citations; recall is
    the mean over explanations of distinct valid ids cited / facts offered.
    The context fact ids serve as the gold set.
    """
    if len(explanations) != len(contexts):
        raise ValueError("explanations and contexts must pair up")
    total_sentences = covered = cited = valid_cited = words = fallbacks = 0
    recalls: list[float] = []
    latencies: list[float] = []
    for exp, ctx in zip(explanations, contexts):
        gold = set(ctx.evidence_ids)
        distinct_valid: set[str] = set()
        for s in exp.sentences:
            total_sentences += 1
            words += len(s.text.split())
            valid = [e for e in s.evidence if e in gold]
            cited += len(s.evidence)
            valid_cited += len(valid)
            distinct_valid.update(valid)
            if valid:
                covered += 1
        recalls.append(len(distinct_valid) / len(gold) if gold else 0.0)
        latencies.append(float(exp.latency_ms))
        fallbacks += bool(exp.fallback_used)
    coverage = covered / total_sentences if total_sentences else 0.0
    return ExplanationMetrics(
        explanations=len(explanations),
        sentences=total_sentences,
        coverage=coverage,
        unsupported_rate=1.0 - coverage,
        citation_precision=valid_cited / cited if cited else 0.0,
        citation_recall=sum(recalls) / len(recalls) if recalls else 0.0,
        words_per_sentence=words / total_sentences if total_sentences else 0.0,
        fallback_rate=fallbacks / len(explanations) if explanations else 0.0,
        latency_median_ms=percentile(latencies, 50) if latencies else 0.0,
    )
