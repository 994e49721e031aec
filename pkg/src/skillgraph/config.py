"""Service configuration, loadable from a single TOML file.

Every field has a default that runs fully offline: hashing embedder, identity
ranker, no generator (template explanations only).
"""

from __future__ import annotations

import sys
from pathlib import Path
from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field

from .hnsw import HnswParams
from .retrieval import FusionConfig, Variant

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class FusionSection(_Section):
    variant: Variant = Variant.HYBRID
    alpha: float = Field(0.5, ge=0.0, le=1.0)
    k: int = Field(5, ge=1)
    pool_lex: int = Field(50, ge=1)
    pool_sem: int = Field(50, ge=1)
    rerank_n: int = Field(20, ge=1)

    def to_config(self) -> FusionConfig:
        return FusionConfig(self.variant, self.alpha, self.k, self.pool_lex, self.pool_sem, self.rerank_n)


class HnswSection(_Section):
    m: int = Field(16, ge=2)
    ef_construction: int = Field(200, ge=1)
    ef_search: int = Field(100, ge=1)
    seed: int = 42

    def to_params(self) -> HnswParams:
        return HnswParams(self.m, self.ef_construction, self.ef_search, self.seed)


class EmbedderSection(_Section):
    mode: Literal["fallback", "external"] = "fallback"
    endpoint: Optional[str] = None
    timeout_s: float = 10.0


class GeneratorSection(_Section):
    mode: Literal["none", "external", "echo"] = "none"
    endpoint: Optional[str] = None
    model: Optional[str] = None
    deadline_s: float = Field(10.0, gt=0)
    max_tokens: int = Field(512, ge=1)


class RankerSection(_Section):
    mode: Literal["identity", "perturb", "external"] = "identity"
    endpoint: Optional[str] = None
    timeout_s: float = 5.0
    seed: int = 0
    # Also let the ranker reorder inferred prerequisite/sub-skill suggestions.
    graph_suggestions: bool = False


class ServiceConfig(_Section):
    snapshot_path: Path = Path("skillgraph.snapshot.json")
    host: str = "127.0.0.1"
    port: int = 8000
    default_language: str = "en"
    languages: list[str] = Field(default_factory=lambda: ["en", "fr"])
    request_deadline_s: float = Field(15.0, gt=0)
    enable_freeform: bool = False
    fusion: FusionSection = Field(default_factory=FusionSection)
    hnsw: HnswSection = Field(default_factory=HnswSection)
    embedder: EmbedderSection = Field(default_factory=EmbedderSection)
    generator: GeneratorSection = Field(default_factory=GeneratorSection)
    ranker: RankerSection = Field(default_factory=RankerSection)

    @classmethod
    def load(cls, path: str | Path) -> "ServiceConfig":
        path = Path(path)
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
        config = cls.model_validate(data)
        if not config.snapshot_path.is_absolute():
            config.snapshot_path = (path.parent / config.snapshot_path).resolve()
        return config
