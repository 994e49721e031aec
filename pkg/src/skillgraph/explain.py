"""Evidence-cited skill explanations.

C1 renders fixed per-language templates. C2 asks an external generator for a
strict JSON answer and falls back to C1 whenever the answer fails
validation or the deadline passes. C3 is unconstrained free text kept only
for benchmarking and gated behind a config flag.
"""

from __future__ import annotations

import concurrent.futures
import json
import logging
import re
import time
from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache
from importlib import resources
from typing import Any, Callable, Iterable, Protocol, Sequence

import httpx

from .graph import SkillGraph
from .reasoning import GraphReasoner

logger = logging.getLogger(__name__)

DEFAULT_DEADLINE_S = 10.0
TEMPLATE_LANGUAGES = ("en", "fr")

SYSTEM_PROMPT = (
    "You explain one skill using only the facts provided. "
    "Answer with JSON only, shaped as {\"sentences\": [{\"text\": str, \"evidence\": [id]}]}. "
    "Write exactly three concise sentences. "
    "Attach one or two evidence ids from the facts to every sentence. "
    "Never mention skills or facts that are not listed. "
    "Write in language '{language}' for a {audience} audience."
)
FREEFORM_PROMPT = (
    "Explain the skill described by the facts below in a few sentences. "
    "Write in language '{language}' for a {audience} audience."
)


class Mode(str, Enum):
    C1 = "C1"
    C2 = "C2"
    C3 = "C3"


class Audience(str, Enum):
    TEACHER = "teacher"
    LEARNER = "learner"


class GeneratorError(RuntimeError):
    pass


class FreeformDisabled(RuntimeError):
    pass


class SchemaViolation(ValueError):
    pass


@dataclass(frozen=True)
class Fact:
    evidence_id: str
    snippet: str


@dataclass
class EvidenceContext:
    skill_id: str
    label: str
    facts: list[Fact]
    language: str
    audience: Audience
    flags: list[str] = field(default_factory=list)
    # Template slots that are not facts themselves.
    definition: str = ""
    relation_sentences: list[tuple[str, str]] = field(default_factory=list)
    provenance: str = ""

    @property
    def evidence_ids(self) -> list[str]:
        return [f.evidence_id for f in self.facts]


@dataclass(frozen=True)
class Sentence:
    text: str
    evidence: tuple[str, ...] = ()


@dataclass
class Explanation:
    mode: Mode
    sentences: list[Sentence]
    fallback_used: bool | None = None
    latency_ms: int = 0

    def as_text(self) -> str:
        parts = []
        for s in self.sentences:
            parts.append(f"{s.text} [{', '.join(s.evidence)}]" if s.evidence else s.text)
        return " ".join(parts)


@lru_cache(maxsize=None)
def load_templates(language: str) -> dict[str, Any]:
    lang = language if language in TEMPLATE_LANGUAGES else "en"
    text = resources.files("skillgraph.resources").joinpath(f"templates_{lang}.json").read_text(encoding="utf-8")
    return json.loads(text)


def _strip_terminal(text: str) -> str:
    return text.strip().rstrip(".!?;: ").strip()


def build_context(
    graph: SkillGraph,
    node_id: str,
    language: str = "en",
    audience: Audience | str = Audience.TEACHER,
    reasoner: GraphReasoner | None = None,
) -> EvidenceContext:
    """Definition fact, up to three relation facts ranked by candidate signals, provenance fact."""
    audience = Audience(audience)
    node = graph.get_node(node_id)
    tpl = load_templates(language)
    flags: list[str] = []
    label, _, label_fallback = node.label(language)
    if label_fallback:
        flags.append("label_fallback")

    definition = node.descriptions.get(language, "")
    if not definition:
        definition = label
        flags.append("definition_from_label")
    facts = [Fact(f"def:{node.id}", definition)]

    # One edge per neighbor (first in canonical order), ranked like graph suggestions.
    edges: dict[str, Any] = {}
    for edge, nb in graph.neighbors(node.id, None, "both"):
        edges.setdefault(nb.id, edge)
    reasoner = reasoner or GraphReasoner(graph, language=language)
    ranked = reasoner.signals(node.id, {nid: 1 for nid in edges}, language)[:3]
    relation_sentences = []
    for sig in ranked:
        edge = edges[sig.node_id]
        src = graph.get_node(edge.from_id).label(language)[0]
        dst = graph.get_node(edge.to_id).label(language)[0]
        snippet = f"{src} {tpl['relation_phrases'][edge.relation.value]} {dst}"
        evid = f"rel:{edge.from_id}-{edge.relation.value}-{edge.to_id}"
        facts.append(Fact(evid, snippet))
        relation_sentences.append((evid, snippet))

    prov = node.provenance
    version = prov.source_version or tpl["unknown_version"]
    framework = prov.framework or node.namespace.upper()
    key = "provenance" if prov.source_uri else "provenance_no_uri"
    provenance = tpl[key].format(framework=framework, version=version, uri=prov.source_uri)
    facts.append(Fact(f"prov:{node.id}", provenance))
    return EvidenceContext(
        node.id, label, facts, language, audience, flags, _strip_terminal(definition), relation_sentences, provenance
    )


def explain_template(context: EvidenceContext, fallback_used: bool | None = None) -> Explanation:
    """C1: three sentences, each citing at least one context id."""
    start = time.perf_counter()
    tpl = load_templates(context.language)
    slots = tpl[context.audience.value]
    def_id = f"def:{context.skill_id}"
    first = Sentence(slots["definition"].format(label=context.label, definition=context.definition), (def_id,))
    cited = context.relation_sentences[:2]
    if cited:
        joined = tpl["relation_joiner"].join(snippet for _, snippet in cited)
        second = Sentence(slots["relations"].format(relations=joined), tuple(evid for evid, _ in cited))
    else:
        second = Sentence(slots["no_relations"].format(label=context.label), (def_id,))
    third = Sentence(slots["provenance"].format(provenance=context.provenance), (f"prov:{context.skill_id}",))
    latency = int(round((time.perf_counter() - start) * 1000))
    return Explanation(Mode.C1, [first, second, third], fallback_used, latency)


# -------------------------------------------------------------- generators


class Generator(Protocol):
    def generate(self, system: str, user: str, max_tokens: int) -> str:
        ...


class HttpGenerator:
    """Client for ``POST {system, user, max_tokens}`` -> ``{text}``."""

    def __init__(
        self,
        endpoint: str,
        model: str | None = None,
        deadline: float = DEFAULT_DEADLINE_S,
        client: httpx.Client | None = None,
    ):
        self.endpoint = endpoint
        self.model = model
        self._client = client or httpx.Client(timeout=deadline)

    def generate(self, system: str, user: str, max_tokens: int) -> str:
        headers = {"X-Model": self.model} if self.model else None
        try:
            resp = self._client.post(
                self.endpoint, json={"system": system, "user": user, "max_tokens": max_tokens}, headers=headers
            )
            resp.raise_for_status()
            text = resp.json()["text"]
        except (httpx.HTTPError, KeyError, TypeError, ValueError) as exc:
            raise GeneratorError(str(exc)) from exc
        if not isinstance(text, str):
            raise GeneratorError("generator returned non-string text")
        return text


class ScriptedGenerator:
    """Replays canned responses (or calls a function of the prompt) for tests."""

    def __init__(self, script: Sequence[str] | Callable[[str, str], str]):
        self._script = script
        self._calls = 0
        self.prompts: list[tuple[str, str]] = []

    def generate(self, system: str, user: str, max_tokens: int) -> str:
        self.prompts.append((system, user))
        if callable(self._script):
            return self._script(system, user)
        response = self._script[self._calls % len(self._script)]
        self._calls += 1
        return response


class EchoGenerator:
    """Offline stand-in for C2/C3: restates the prompt facts, citing them correctly."""

    def __init__(self, freeform: bool = False):
        self.freeform = freeform

    def generate(self, system: str, user: str, max_tokens: int) -> str:
        facts = json.loads(user)["facts"]
        if self.freeform or system.startswith(FREEFORM_PROMPT[:24]):
            return " ".join(f"{_strip_terminal(f['snippet'])}." for f in facts)
        picks = [facts[0], facts[1:-1] or [facts[0]], facts[-1]]
        sentences = []
        for pick in picks:
            group = pick if isinstance(pick, list) else [pick]
            group = group[:2]
            text = "; ".join(_strip_terminal(f["snippet"]) for f in group) + "."
            sentences.append({"text": text, "evidence": [f["id"] for f in group]})
        return json.dumps({"sentences": sentences}, ensure_ascii=False)


_EXECUTOR = concurrent.futures.ThreadPoolExecutor(max_workers=4, thread_name_prefix="generator")


def _call_with_deadline(generator: Generator, system: str, user: str, max_tokens: int, deadline: float) -> str:
    future = _EXECUTOR.submit(generator.generate, system, user, max_tokens)
    try:
        return future.result(timeout=deadline)
    except concurrent.futures.TimeoutError:
        future.cancel()
        raise TimeoutError(f"generator exceeded {deadline:.1f}s deadline") from None


# ------------------------------------------------------------------ C2/C3


def build_prompt(context: EvidenceContext, freeform: bool = False) -> tuple[str, str]:
    system = (FREEFORM_PROMPT if freeform else SYSTEM_PROMPT).replace("{language}", context.language)
    system = system.replace("{audience}", context.audience.value)
    user = json.dumps(
        {
            "language": context.language,
            "audience": context.audience.value,
            "facts": [{"id": f.evidence_id, "snippet": f.snippet} for f in context.facts],
        },
        ensure_ascii=False,
        sort_keys=True,
    )
    return system, user


def parse_constrained(raw: str, allowed_ids: Iterable[str]) -> list[Sentence]:
    """Strict validation of a C2 response; any defect raises :class:`SchemaViolation`."""
    allowed = set(allowed_ids)
    try:
        data = json.loads(raw)
    except (TypeError, json.JSONDecodeError) as exc:
        raise SchemaViolation(f"not JSON: {exc}") from None
    if not isinstance(data, dict) or set(data) != {"sentences"}:
        raise SchemaViolation("top level must be an object with only 'sentences'")
    items = data["sentences"]
    if not isinstance(items, list) or len(items) != 3:
        raise SchemaViolation("exactly three sentences are required")
    out = []
    for item in items:
        if not isinstance(item, dict) or set(item) != {"text", "evidence"}:
            raise SchemaViolation("each sentence needs exactly 'text' and 'evidence'")
        text, evidence = item["text"], item["evidence"]
        if not isinstance(text, str) or not text.strip():
            raise SchemaViolation("sentence text must be a non-empty string")
        if not isinstance(evidence, list) or not 1 <= len(evidence) <= 2:
            raise SchemaViolation("each sentence must cite one or two evidence ids")
        if not all(isinstance(e, str) for e in evidence) or len(set(evidence)) != len(evidence):
            raise SchemaViolation("evidence ids must be distinct strings")
        foreign = [e for e in evidence if e not in allowed]
        if foreign:
            raise SchemaViolation(f"evidence ids not in context: {foreign}")
        out.append(Sentence(text.strip(), tuple(evidence)))
    return out


def explain_constrained(
    context: EvidenceContext,
    generator: Generator,
    deadline: float = DEFAULT_DEADLINE_S,
    max_tokens: int = 512,
) -> Explanation:
    """C2. Never raises: invalid output, generator errors and timeouts all yield C1 with ``fallback_used``."""
    start = time.perf_counter()
    system, user = build_prompt(context)
    try:
        raw = _call_with_deadline(generator, system, user, max_tokens, deadline)
        sentences = parse_constrained(raw, context.evidence_ids)
    except Exception as exc:  # noqa: BLE001 - every failure mode falls back
        logger.info("constrained explanation rejected, using template: %s", exc)
        fallback = explain_template(context, fallback_used=True)
        fallback.latency_ms = int(round((time.perf_counter() - start) * 1000))
        return fallback
    return Explanation(Mode.C2, sentences, False, int(round((time.perf_counter() - start) * 1000)))


_SENTENCE_END = re.compile(r"(?<=[.!?])\s+")


def split_sentences(text: str) -> list[str]:
    """Approximate splitter: a terminator followed by whitespace or end of text."""
    return [s.strip() for s in _SENTENCE_END.split(text.strip()) if s.strip()]


def explain_freeform(
    context: EvidenceContext,
    generator: Generator,
    enabled: bool = False,
    deadline: float = DEFAULT_DEADLINE_S,
    max_tokens: int = 512,
) -> Explanation:
    """C3, benchmark only. Generator failures propagate as :class:`GeneratorError`."""
    if not enabled:
        raise FreeformDisabled("free-form explanations are disabled (enable_freeform=false)")
    start = time.perf_counter()
    system, user = build_prompt(context, freeform=True)
    try:
        raw = _call_with_deadline(generator, system, user, max_tokens, deadline)
    except GeneratorError:
        raise
    except Exception as exc:
        raise GeneratorError(str(exc)) from exc
    sentences = [Sentence(s) for s in split_sentences(raw)]
    return Explanation(Mode.C3, sentences, None, int(round((time.perf_counter() - start) * 1000)))

