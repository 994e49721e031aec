"""Response models for the REST API. Field order here is the wire order."""

from typing import Dict, List, Optional

from pydantic import BaseModel


class SearchHit(BaseModel):
    id: str
    label: str
    label_lang: str
    label_fallback: bool
    score: float
    s_lex: Optional[float]
    s_sem: Optional[float]
    s_lex_norm: float
    s_sem_norm: float
    source_tag: str
    rerank_score: Optional[float] = None


class SearchResponse(BaseModel):
    query: str
    lang: str
    k: int
    variant: str
    alpha: float
    flags: List[str]
    results: List[SearchHit]


class ProvenanceOut(BaseModel):
    framework: str
    version: str
    uri: str
    ingested_at: str


class RelationOut(BaseModel):
    type: str
    target: str


class MappingOut(BaseModel):
    target: str
    kind: str


class SkillRecord(BaseModel):
    id: str
    kind: str
    labels: Dict[str, str]
    alt_labels: Dict[str, List[str]]
    descriptions: Dict[str, str]
    provenance: ProvenanceOut
    relations: List[RelationOut]
    mappings: List[MappingOut]


class StructuralItem(BaseModel):
    id: str
    label: str
    score: float
    source_tag: str


class StructuralResponse(BaseModel):
    id: str
    relation: str
    k: int
    flags: List[str]
    items: List[StructuralItem]


class SentenceOut(BaseModel):
    text: str
    evidence: List[str]


class ExplainResponse(BaseModel):
    id: str
    lang: str
    audience: str
    mode: str
    fallback_used: Optional[bool] = None
    sentences: List[SentenceOut]


class ErrorResponse(BaseModel):
    detail: str
