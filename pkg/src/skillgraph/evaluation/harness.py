"""Offline evaluation runner: retrieval variants and explanation modes.

Queries run sequentially so latencies are not distorted by contention. The
clock is injectable; passing a :class:`StepClock` makes every report byte
identical across runs.
"""

from __future__ import annotations

import csv
import io
import json
import time
from dataclasses import dataclass, field
from pathlib import Path
from statistics import fmean
from typing import Callable, Iterable, Sequence

from ..engine import Engine
from ..explain import (
    EchoGenerator,
    EvidenceContext,
    Explanation,
    Generator,
    Mode,
    build_context,
    explain_constrained,
    explain_freeform,
    explain_template,
)
from ..retrieval import FusionConfig, Variant
from .metrics import explanation_metrics, latency_profile, ndcg_at_5, precision_at_k

LANGUAGES = ("en", "fr")
RETRIEVAL_COLUMNS = ("variant", "lang", "queries", "p_at_3", "p_at_5", "ndcg_at_5", "latency_median_ms", "latency_p95_ms")
EXPLAIN_COLUMNS = (
    "mode", "explanations", "coverage", "unsupported_rate", "citation_precision",
    "citation_recall", "words_per_sentence", "fallback_rate", "latency_median_ms",
)  # fmt: skip


class EvalError(ValueError):
    """Bad evaluation input; ``report`` is a machine-readable summary."""

    def __init__(self, message: str, report: dict):
        super().__init__(message)
        self.report = report


@dataclass(frozen=True)
class QueryRecord:
    query_id: str
    text: str
    language: str

    def __post_init__(self):
        if not self.text.strip():
            raise ValueError(f"query {self.query_id!r} has empty text")
        if self.language not in LANGUAGES:
            raise ValueError(f"query {self.query_id!r}: language must be one of {LANGUAGES}")


class StepClock:
    """Deterministic clock advancing a fixed step per reading."""

    def __init__(self, step_s: float = 0.001):
        self.step = step_s
        self.now = 0.0

    def __call__(self) -> float:
        self.now += self.step
        return self.now


def load_queries(path: str | Path) -> list[QueryRecord]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                raw = json.loads(line)
                out.append(QueryRecord(str(raw["query_id"]), str(raw["text"]), str(raw["lang"])))
            except (ValueError, KeyError, TypeError) as exc:
                raise EvalError(f"{path}:{lineno}: {exc}", {"error": "bad-query", "line": lineno}) from None
    return out


def load_qrels(path: str | Path) -> dict[str, set[str]]:
    qrels: dict[str, set[str]] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 2 or not all(p.strip() for p in parts):
                raise EvalError(f"{path}:{lineno}: expected 'query_id<TAB>node_id'", {"error": "bad-qrel", "line": lineno})
            qrels.setdefault(parts[0].strip(), set()).add(parts[1].strip())
    return qrels


@dataclass
class EvalReport:
    per_query: list[dict] = field(default_factory=list)
    retrieval: list[dict] = field(default_factory=list)
    explanation: list[dict] = field(default_factory=list)

    def row(self, variant: str, lang: str) -> dict:
        for r in self.retrieval:
            if r["variant"] == variant and r["lang"] == lang:
                return r
        raise KeyError((variant, lang))

    def to_dict(self) -> dict:
        return {"retrieval": self.retrieval, "explanation": self.explanation}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def per_query_csv(self) -> str:
        buf = io.StringIO()
        cols = ["query_id", "lang", "variant", "p_at_3", "p_at_5", "ndcg_at_5", "latency_ms", "results"]
        writer = csv.DictWriter(buf, fieldnames=cols, lineterminator="\n")
        writer.writeheader()
        for row in self.per_query:
            writer.writerow({c: _fmt(row[c]) if c != "results" else " ".join(row[c]) for c in cols})
        return buf.getvalue()

    def table(self) -> str:
        """Aligned plain-text tables: retrieval effectiveness, then explanation faithfulness."""
        blocks = [_align(RETRIEVAL_COLUMNS, self.retrieval)]
        if self.explanation:
            blocks.append(_align(EXPLAIN_COLUMNS, self.explanation))
        return "\n\n".join(blocks) + "\n"

    def write(self, out_dir: str | Path) -> list[Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        files = {"per_query.csv": self.per_query_csv(), "report.json": self.to_json(), "report.txt": self.table()}
        for name, text in files.items():
            (out / name).write_text(text, encoding="utf-8")
        return [out / name for name in files]


def _fmt(value) -> str:
    if isinstance(value, float):
        return f"{value:.4f}"
    return str(value)


def _align(columns: Sequence[str], rows: Sequence[dict]) -> str:
    cells = [list(columns)] + [[_fmt(r[c]) for c in columns] for r in rows]
    widths = [max(len(row[i]) for row in cells) for i in range(len(columns))]
    left = [bool(rows) and isinstance(rows[0][c], str) for c in columns]
    lines = ["  ".join(c.ljust(w) if lj else c.rjust(w) for c, w, lj in zip(row, widths, left)) for row in cells]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(line.rstrip() for line in lines)


def check_qrels(engine: Engine, queries: Sequence[QueryRecord], qrels: dict[str, set[str]]) -> None:
    known = {n.id for n in engine.graph.nodes()}
    unresolved = sorted({(q, n) for q, ids in qrels.items() for n in ids if n not in known})
    if unresolved:
        raise EvalError(
            f"{len(unresolved)} qrel node id(s) do not resolve in the snapshot",
            {"error": "unresolved-qrel", "unresolved": [{"query_id": q, "node_id": n} for q, n in unresolved]},
        )
    ids = [q.query_id for q in queries]
    if len(ids) != len(set(ids)):
        raise EvalError("duplicate query ids", {"error": "duplicate-query-id"})


def _aggregate(variant: str, lang: str, rows: list[dict]) -> dict:
    median, p95 = latency_profile([r["latency_ms"] for r in rows])
    return {
        "variant": variant,
        "lang": lang,
        "queries": len(rows),
        "p_at_3": fmean(r["p_at_3"] for r in rows),
        "p_at_5": fmean(r["p_at_5"] for r in rows),
        "ndcg_at_5": fmean(r["ndcg_at_5"] for r in rows),
        "latency_median_ms": median,
        "latency_p95_ms": p95,
    }


def run_eval(
    engine: Engine,
    queries: Sequence[QueryRecord],
    qrels: dict[str, set[str]],
    variants: Iterable[Variant | str] = (Variant.BM25_ONLY, Variant.DENSE_ONLY, Variant.HYBRID),
    modes: Iterable[Mode | str] = (),
    out_dir: str | Path | None = None,
    clock: Callable[[], float] = time.perf_counter,
    generator: Generator | None = None,
    explain_ids: Sequence[str] | None = None,
    audience: str = "teacher",
) -> EvalReport:
    """Run every query through every variant, then every explanation mode.

    Aggregate rows are exact means of per-query values: one row per variant
    and language, plus an ``avg`` row pooling all queries of that variant.
    Queries without qrels score zero. Explanations are produced for
    ``explain_ids`` (default: every judged-relevant node, sorted) in the
    first query language.
    """
    check_qrels(engine, queries, qrels)
    variants = [Variant(v) for v in variants]
    modes = [Mode(m) for m in modes]
    report = EvalReport()
    k = 5
    for variant in variants:
        base = engine.fusion_defaults
        fusion = FusionConfig(variant, base.alpha, k, base.pool_lex, base.pool_sem, base.rerank_n).with_k(k)
        rows = []
        for q in queries:
            start = clock()
            result = engine.search(q.text, q.language, fusion)
            elapsed = (clock() - start) * 1000.0
            ranked = [c.node_id for c in result.candidates]
            relevant = qrels.get(q.query_id, set())
            rows.append(
                {
                    "query_id": q.query_id,
                    "lang": q.language,
                    "variant": variant.value,
                    "p_at_3": precision_at_k(ranked, relevant, 3),
                    "p_at_5": precision_at_k(ranked, relevant, 5),
                    "ndcg_at_5": ndcg_at_5(ranked, relevant),
                    "latency_ms": elapsed,
                    "results": ranked,
                }
            )
        report.per_query.extend(rows)
        for lang in LANGUAGES:
            subset = [r for r in rows if r["lang"] == lang]
            if subset:
                report.retrieval.append(_aggregate(variant.value, lang, subset))
        if rows:
            report.retrieval.append(_aggregate(variant.value, "avg", rows))

    if modes:
        if explain_ids is None:
            explain_ids = sorted({n for ids in qrels.values() for n in ids})
        lang = queries[0].language if queries else engine.config.default_language
        contexts = [build_context(engine.graph, nid, lang, audience, engine.reasoner(lang)) for nid in explain_ids]
        for mode in modes:
            explanations = [_explain(engine, ctx, mode, generator, clock) for ctx in contexts]
            metrics = explanation_metrics(explanations, contexts).to_dict()
            metrics.pop("sentences")
            report.explanation.append({"mode": mode.value, **metrics})

    if out_dir is not None:
        report.write(out_dir)
    return report


def _explain(
    engine: Engine, ctx: EvidenceContext, mode: Mode, generator: Generator | None, clock: Callable[[], float]
) -> Explanation:
    # Free-form is benchmarked even when the service keeps it disabled.
    cfg = engine.config.generator
    start = clock()
    if mode is Mode.C1:
        exp = explain_template(ctx)
    elif mode is Mode.C2:
        gen = generator or engine.generator or EchoGenerator()
        exp = explain_constrained(ctx, gen, cfg.deadline_s, cfg.max_tokens)
    else:
        gen = generator or engine.generator or EchoGenerator(freeform=True)
        exp = explain_freeform(ctx, gen, True, cfg.deadline_s, cfg.max_tokens)
    exp.latency_ms = (clock() - start) * 1000.0
    return exp
