"""Wires graph, indices and external clients into one query engine.

Indices are persisted next to the graph snapshot in ``<snapshot>.index/``:
a manifest, one lexical JSON file and one HNSW ``.npz`` per language.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np

from .config import ServiceConfig
from .embedding import Embedder, HashingEmbedder, HttpEmbedder, embed_nodes
from .explain import (
    EchoGenerator,
    Explanation,
    Generator,
    HttpGenerator,
    Mode,
    build_context,
    explain_constrained,
    explain_freeform,
    explain_template,
)
from .graph import SkillGraph
from .hnsw import HnswIndex, HnswParams
from .lexical import LanguageIndex, LexicalIndex
from .reasoning import GraphReasoner, StructuralAnswer
from .retrieval import FusionConfig, HttpRanker, IdentityRanker, PerturbationRanker, Ranker, Retriever, SearchResult

logger = logging.getLogger(__name__)

MANIFEST = "manifest.json"


class IndexMismatch(RuntimeError):
    pass


def index_dir(snapshot_path: str | Path) -> Path:
    p = Path(snapshot_path)
    return p.with_name(p.name + ".index")


def snapshot_digest(graph: SkillGraph) -> str:
    return hashlib.sha256(graph.to_json().encode("utf-8")).hexdigest()


def make_embedder(config: ServiceConfig) -> Embedder:
    if config.embedder.mode == "external":
        if not config.embedder.endpoint:
            raise ValueError("embedder.mode = 'external' needs embedder.endpoint")
        return HttpEmbedder(config.embedder.endpoint, timeout=config.embedder.timeout_s)
    return HashingEmbedder()


def make_ranker(config: ServiceConfig) -> Ranker:
    section = config.ranker
    if section.mode == "external":
        if not section.endpoint:
            raise ValueError("ranker.mode = 'external' needs ranker.endpoint")
        return HttpRanker(section.endpoint, timeout=section.timeout_s)
    if section.mode == "perturb":
        return PerturbationRanker(section.seed)
    return IdentityRanker()


def make_generator(config: ServiceConfig) -> Generator | None:
    section = config.generator
    if section.mode == "external":
        if not section.endpoint:
            raise ValueError("generator.mode = 'external' needs generator.endpoint")
        return HttpGenerator(section.endpoint, section.model, section.deadline_s)
    if section.mode == "echo":
        return EchoGenerator()
    return None


@dataclass
class IndexBundle:
    lexical: LexicalIndex
    vectors: dict[str, HnswIndex]

    @classmethod
    def build(
        cls,
        graph: SkillGraph,
        embedder: Embedder,
        languages: Iterable[str] | None = None,
        params: HnswParams | None = None,
    ) -> "IndexBundle":
        nodes = graph.nodes()
        lexical = LexicalIndex.build(nodes, languages)
        vectors = {}
        for lang in lexical.languages:
            embs = embed_nodes(nodes, lang, embedder)
            vectors[lang] = HnswIndex.build([e.node_id for e in embs], _stack(embs, embedder.dimension), params)
        return cls(lexical, vectors)

    def save(self, directory: str | Path, graph: SkillGraph, embedder_name: str) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        for lang, idx in self.lexical.indices.items():
            (directory / f"lexical_{lang}.json").write_text(
                json.dumps(idx.to_dict(), ensure_ascii=False, sort_keys=True), encoding="utf-8"
            )
        for lang, hnsw in self.vectors.items():
            hnsw.save(directory / f"vectors_{lang}.npz")
        manifest = {
            "snapshot_sha256": snapshot_digest(graph),
            "languages": self.lexical.languages,
            "embedder": embedder_name,
            "doc_counts": self.lexical.doc_counts(),
        }
        (directory / MANIFEST).write_text(json.dumps(manifest, indent=2, sort_keys=True), encoding="utf-8")

    @classmethod
    def load(cls, directory: str | Path, graph: SkillGraph | None = None) -> "IndexBundle":
        directory = Path(directory)
        manifest = json.loads((directory / MANIFEST).read_text(encoding="utf-8"))
        if graph is not None and manifest["snapshot_sha256"] != snapshot_digest(graph):
            raise IndexMismatch(f"index in {directory} was built from a different snapshot")
        lexical = LexicalIndex(
            {
                lang: LanguageIndex.from_dict(json.loads((directory / f"lexical_{lang}.json").read_text("utf-8")))
                for lang in manifest["languages"]
            }
        )
        vectors = {lang: HnswIndex.load(directory / f"vectors_{lang}.npz") for lang in manifest["languages"]}
        return cls(lexical, vectors)


def _stack(embs, dimension: int) -> np.ndarray:
    if not embs:
        return np.zeros((0, dimension), dtype=np.float32)
    return np.stack([e.vector for e in embs])


class Engine:
    """Read-only facade over one immutable graph and its indices."""

    def __init__(
        self,
        graph: SkillGraph,
        indices: IndexBundle,
        config: ServiceConfig | None = None,
        embedder: Embedder | None = None,
        ranker: Ranker | None = None,
        generator: Generator | None = None,
    ):
        self.config = config or ServiceConfig()
        self.graph = graph
        self.indices = indices
        self.embedder = embedder or make_embedder(self.config)
        self.ranker = ranker or make_ranker(self.config)
        self.generator = generator if generator is not None else make_generator(self.config)
        self.retriever = Retriever(
            indices.lexical, indices.vectors, self.embedder, self.ranker, self.describe, self.config.hnsw.ef_search
        )
        self._reasoners: dict[str, GraphReasoner] = {}

    @classmethod
    def from_graph(cls, graph: SkillGraph, config: ServiceConfig | None = None, **clients) -> "Engine":
        config = config or ServiceConfig()
        embedder = clients.pop("embedder", None) or make_embedder(config)
        bundle = IndexBundle.build(graph, embedder, config.languages, config.hnsw.to_params())
        return cls(graph, bundle, config, embedder=embedder, **clients)

    @classmethod
    def from_config(cls, config: ServiceConfig, **clients) -> "Engine":
        graph = SkillGraph.load(config.snapshot_path)
        directory = index_dir(config.snapshot_path)
        if (directory / MANIFEST).exists():
            bundle = IndexBundle.load(directory, graph)
            return cls(graph, bundle, config, **clients)
        logger.warning("no index bundle at %s; building in memory", directory)
        return cls.from_graph(graph, config, **clients)

    def describe(self, node_id: str) -> tuple[str, str]:
        node = self.graph.get_node(node_id)
        lang = self.config.default_language
        label = node.label(lang)[0]
        desc = node.descriptions.get(lang) or next(iter(node.descriptions.values()), "")
        return label, desc[:200]

    def reasoner(self, language: str) -> GraphReasoner:
        if language not in self._reasoners:
            ranker = self.ranker if self.config.ranker.graph_suggestions else None
            self._reasoners[language] = GraphReasoner(self.graph, self.embedder, language, ranker=ranker)
        return self._reasoners[language]

    def search(self, query: str, language: str | None = None, fusion: FusionConfig | None = None) -> SearchResult:
        return self.retriever.search(query, language or self.config.default_language, fusion or self.fusion_defaults)

    @property
    def fusion_defaults(self) -> FusionConfig:
        return self.config.fusion.to_config()

    def prerequisites(self, node_id: str, k: int = 5, language: str | None = None) -> StructuralAnswer:
        lang = language or self.config.default_language
        return self.reasoner(lang).prerequisites(node_id, k, lang)

    def subskills(self, node_id: str, k: int = 5, language: str | None = None) -> StructuralAnswer:
        lang = language or self.config.default_language
        return self.reasoner(lang).subskills(node_id, k, lang)

    def explain(
        self, node_id: str, language: str | None = None, audience: str = "teacher", mode: Mode | None = None
    ) -> Explanation:
        """Default mode is C2 when a generator is configured, otherwise C1."""
        lang = language or self.config.default_language
        context = build_context(self.graph, node_id, lang, audience, self.reasoner(lang))
        if mode is None:
            mode = Mode.C2 if self.generator is not None else Mode.C1
        deadline = self.config.generator.deadline_s
        if mode is Mode.C1:
            return explain_template(context)
        if self.generator is None:
            raise ValueError(f"mode {mode.value} needs a configured generator")
        if mode is Mode.C2:
            return explain_constrained(context, self.generator, deadline, self.config.generator.max_tokens)
        return explain_freeform(
            context, self.generator, self.config.enable_freeform, deadline, self.config.generator.max_tokens
        )
