"""FastAPI application exposing search, records, structure and explanations."""

from __future__ import annotations

import asyncio
import time
from enum import Enum
from typing import Callable, Optional, TypeVar

from fastapi import FastAPI, HTTPException, Query, Request
from fastapi.concurrency import run_in_threadpool
from fastapi.responses import JSONResponse, PlainTextResponse

from ..engine import Engine
from ..explain import Audience, FreeformDisabled, GeneratorError, Mode
from ..graph import NodeNotFound
from ..reasoning import StructuralAnswer
from ..retrieval import FusionConfig, Variant
from .schemas import (
    ExplainResponse,
    SearchHit,
    SearchResponse,
    SentenceOut,
    SkillRecord,
    StructuralItem,
    StructuralResponse,
)

T = TypeVar("T")
MAX_K = 100


class OutputFormat(str, Enum):
    TEXT = "text"
    JSON = "json"


def create_app(engine: Engine) -> FastAPI:
    app = FastAPI(title="skillgraph", version="0.1.0")
    app.state.engine = engine
    deadline = engine.config.request_deadline_s

    @app.middleware("http")
    async def timing_header(request: Request, call_next):
        # Timing lives in a header so response bodies stay byte-stable.
        start = time.perf_counter()
        response = await call_next(request)
        response.headers["X-Process-Time-Ms"] = f"{(time.perf_counter() - start) * 1000:.2f}"
        return response

    async def run(fn: Callable[..., T], *args) -> T:
        try:
            return await asyncio.wait_for(run_in_threadpool(fn, *args), timeout=deadline)
        except asyncio.TimeoutError:
            raise HTTPException(504, f"request exceeded the {deadline:.1f}s deadline") from None
        except NodeNotFound as exc:
            raise HTTPException(404, str(exc)) from None

    def label_of(node_id: str, lang: str) -> tuple[str, str, bool]:
        return engine.graph.get_node(node_id).label(lang)

    @app.get("/search", response_model=SearchResponse)
    async def search(
        q: str = Query("", description="free-text query"),
        lang: Optional[str] = None,
        k: int = Query(5, ge=1, le=MAX_K),
        variant: Variant = Variant.HYBRID,
        alpha: Optional[float] = Query(None, ge=0.0, le=1.0),
    ):
        if not q.strip():
            raise HTTPException(400, "query parameter 'q' must not be empty")
        lang = lang or engine.config.default_language
        defaults = engine.fusion_defaults
        fusion = FusionConfig(
            variant,
            defaults.alpha if alpha is None else alpha,
            defaults.k,
            defaults.pool_lex,
            defaults.pool_sem,
            defaults.rerank_n,
        ).with_k(k)
        result = await run(engine.search, q, lang, fusion)
        hits = []
        for c in result.candidates:
            label, label_lang, fell_back = label_of(c.node_id, lang)
            hits.append(
                SearchHit(
                    id=c.node_id,
                    label=label,
                    label_lang=label_lang,
                    label_fallback=fell_back,
                    score=c.s_final,
                    s_lex=c.s_lex_raw,
                    s_sem=c.s_sem_raw,
                    s_lex_norm=c.s_lex_norm,
                    s_sem_norm=c.s_sem_norm,
                    source_tag=c.source_tag.value,
                    rerank_score=c.rerank_score,
                )
            )
        return SearchResponse(
            query=q, lang=lang, k=k, variant=result.variant.value, alpha=result.alpha, flags=result.flags, results=hits
        )

    @app.get("/skill/{node_id:path}", response_model=SkillRecord)
    async def skill(node_id: str):
        try:
            node = engine.graph.get_node(node_id)
        except NodeNotFound as exc:
            raise HTTPException(404, str(exc)) from None
        data = node.to_dict()
        data["relations"] = [{"type": e.relation.value, "target": e.to_id} for e in engine.graph.out_edges(node_id)]
        data["mappings"] = [
            {"target": m.to_id, "kind": m.mapping_kind.value} for m in engine.graph.mappings if m.from_id == node_id
        ]
        return SkillRecord.model_validate(data)

    def structural(answer: StructuralAnswer, relation: str, k: int, lang: str) -> StructuralResponse:
        items = [
            StructuralItem(id=it.node_id, label=label_of(it.node_id, lang)[0], score=it.score, source_tag=it.source_tag.value)
            for it in answer.items
        ]
        return StructuralResponse(id=answer.target_id, relation=relation, k=k, flags=answer.flags, items=items)

    @app.get("/prerequisites", response_model=StructuralResponse)
    async def prerequisites(id: str, k: int = Query(5, ge=1, le=MAX_K), lang: Optional[str] = None):
        lang = lang or engine.config.default_language
        answer = await run(engine.prerequisites, id, k, lang)
        return structural(answer, "prerequisites", k, lang)

    @app.get("/subskills", response_model=StructuralResponse)
    async def subskills(id: str, k: int = Query(5, ge=1, le=MAX_K), lang: Optional[str] = None):
        lang = lang or engine.config.default_language
        answer = await run(engine.subskills, id, k, lang)
        return structural(answer, "subskills", k, lang)

    @app.get("/explain", response_model=ExplainResponse, response_model_exclude_none=True)
    async def explain(
        id: str,
        lang: Optional[str] = None,
        audience: Audience = Audience.TEACHER,
        format: OutputFormat = OutputFormat.TEXT,
        mode: Optional[Mode] = None,
    ):
        lang = lang or engine.config.default_language
        if mode is Mode.C3 and not engine.config.enable_freeform:
            raise HTTPException(422, "free-form mode is disabled")
        if mode in (Mode.C2, Mode.C3) and engine.generator is None:
            raise HTTPException(422, f"mode {mode.value} needs a configured generator")
        try:
            result = await run(engine.explain, id, lang, audience.value, mode)
        except (GeneratorError, FreeformDisabled) as exc:
            raise HTTPException(502, str(exc)) from None
        headers = {"X-Explain-Latency-Ms": str(result.latency_ms), "X-Explain-Mode": result.mode.value}
        if format is OutputFormat.TEXT:
            return PlainTextResponse(result.as_text(), headers=headers)
        body = ExplainResponse(
            id=id,
            lang=lang,
            audience=audience.value,
            mode=result.mode.value,
            fallback_used=result.fallback_used,
            sentences=[SentenceOut(text=s.text, evidence=list(s.evidence)) for s in result.sentences],
        )
        return JSONResponse(body.model_dump(exclude_none=True), headers=headers)

    return app
