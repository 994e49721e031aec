"""Per-language BM25 index over label, alt-label and description fields.

Each field is scored with its own BM25 statistics and the field scores are
summed with static weights (label > alt > description). Queries run a phrase
stage, then a prefix stage, and only fall back to a token-OR query when both
are empty or the query contains characters that break strict matching.
"""

from __future__ import annotations

import bisect
import math
import re
import unicodedata
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Any, Iterable, Mapping

from nltk.stem.porter import PorterStemmer

from .graph import SkillNode

K1 = 1.2
B = 0.75
FIELDS = ("label", "alt", "desc")
DEFAULT_FIELD_WEIGHTS = {"label": 3.0, "alt": 2.0, "desc": 1.0}
SUPPORTED_LANGUAGES = ("en", "fr")
BREAKING_CHARS = frozenset("\"'()*:^")

_WORD = re.compile(r"\w+", re.UNICODE)
_stemmer = PorterStemmer(mode=PorterStemmer.ORIGINAL_ALGORITHM)


@lru_cache(maxsize=65536)
def _stem(word: str) -> str:
    return _stemmer.stem(word, to_lowercase=False)


def fold_diacritics(text: str) -> str:
    decomposed = unicodedata.normalize("NFKD", text)
    return "".join(ch for ch in decomposed if not unicodedata.combining(ch))


def analyze(text: str, language: str) -> list[str]:
    """Tokenize ``text`` with the analyzer registered for ``language``.

    en: lowercase, fold diacritics, Porter stem. fr: lowercase, diacritics
    kept, no stemming. Anything else: lowercase word split. Punctuation is
    dropped everywhere.
    """
    if not text:
        return []
    text = unicodedata.normalize("NFC", text).lower()
    if language == "en":
        return [_stem(tok) for tok in _WORD.findall(fold_diacritics(text))]
    return _WORD.findall(text)


def has_breaking_chars(query: str) -> bool:
    return any(ch in BREAKING_CHARS for ch in query)


@dataclass(frozen=True)
class LexicalDoc:
    node_id: str
    language: str
    label_tokens: tuple[str, ...]
    alt_tokens: tuple[str, ...]
    desc_tokens: tuple[str, ...]

    def field(self, name: str) -> tuple[str, ...]:
        return {"label": self.label_tokens, "alt": self.alt_tokens, "desc": self.desc_tokens}[name]

    @classmethod
    def from_node(cls, node: SkillNode, language: str) -> "LexicalDoc | None":
        label = node.labels.get(language, "")
        alts = node.alt_labels.get(language, [])
        desc = node.descriptions.get(language, "")
        if not (label or alts or desc):
            return None
        # A sentinel-free join would let phrases straddle two alt labels; keep them apart.
        alt_tokens: list[str] = []
        for i, alt in enumerate(alts):
            if i:
                alt_tokens.append("\x00")
            alt_tokens.extend(analyze(alt, language))
        return cls(node.id, language, tuple(analyze(label, language)), tuple(alt_tokens), tuple(analyze(desc, language)))


@dataclass(frozen=True)
class LexicalScore:
    node_id: str
    s_lex: float


@dataclass
class LexicalResult:
    hits: list[LexicalScore]
    stage: str  # phrase | prefix | or | none
    analyzer_fallback: bool = False


@dataclass
class _FieldStats:
    postings: dict[str, dict[int, int]] = field(default_factory=lambda: defaultdict(dict))
    lengths: list[int] = field(default_factory=list)
    total_length: int = 0

    @property
    def avgdl(self) -> float:
        return self.total_length / len(self.lengths) if self.lengths else 0.0


class LanguageIndex:
    """Inverted index for one language."""

    def __init__(self, language: str, docs: Iterable[LexicalDoc], weights: Mapping[str, float] | None = None):
        self.language = language
        self.weights = dict(weights or DEFAULT_FIELD_WEIGHTS)
        self.docs: list[LexicalDoc] = sorted(docs, key=lambda d: d.node_id)
        self._fields = {name: _FieldStats() for name in FIELDS}
        for doc_no, doc in enumerate(self.docs):
            for name in FIELDS:
                stats = self._fields[name]
                tokens = [t for t in doc.field(name) if t != "\x00"]
                stats.lengths.append(len(tokens))
                stats.total_length += len(tokens)
                for term, tf in Counter(tokens).items():
                    stats.postings[term][doc_no] = tf
        self.vocabulary: list[str] = sorted({t for s in self._fields.values() for t in s.postings})

    @property
    def doc_count(self) -> int:
        return len(self.docs)

    def stats(self) -> dict[str, Any]:
        return {
            "language": self.language,
            "docs": self.doc_count,
            "terms": len(self.vocabulary),
            "avgdl": {name: self._fields[name].avgdl for name in FIELDS},
        }

    def idf(self, term: str, field_name: str) -> float:
        n = self.doc_count
        df = len(self._fields[field_name].postings.get(term, ()))
        return math.log(1.0 + (n - df + 0.5) / (df + 0.5))

    def _score(self, terms: Iterable[str], candidates: set[int] | None = None) -> dict[int, float]:
        scores: dict[int, float] = defaultdict(float)
        for name in FIELDS:
            stats = self._fields[name]
            weight = self.weights[name]
            avgdl = stats.avgdl or 1.0
            for term in terms:
                posting = stats.postings.get(term)
                if not posting:
                    continue
                idf = self.idf(term, name)
                for doc_no, tf in posting.items():
                    if candidates is not None and doc_no not in candidates:
                        continue
                    norm = K1 * (1.0 - B + B * stats.lengths[doc_no] / avgdl)
                    scores[doc_no] += weight * idf * tf * (K1 + 1.0) / (tf + norm)
        return scores

    def _docs_with(self, term: str) -> set[int]:
        found: set[int] = set()
        for stats in self._fields.values():
            found.update(stats.postings.get(term, ()))
        return found

    def _expand_prefix(self, prefix: str) -> list[str]:
        start = bisect.bisect_left(self.vocabulary, prefix)
        out = []
        for term in self.vocabulary[start:]:
            if not term.startswith(prefix):
                break
            out.append(term)
        return out

    def _phrase_hits(self, tokens: list[str]) -> set[int]:
        if not tokens:
            return set()
        candidates = set.intersection(*(self._docs_with(t) for t in tokens))
        width = len(tokens)
        hits = set()
        for doc_no in candidates:
            doc = self.docs[doc_no]
            for name in FIELDS:
                seq = doc.field(name)
                if any(list(seq[i : i + width]) == tokens for i in range(len(seq) - width + 1)):
                    hits.add(doc_no)
                    break
        return hits

    def _rank(self, scores: Mapping[int, float], limit: int) -> list[LexicalScore]:
        ranked = sorted(scores.items(), key=lambda kv: (-kv[1], self.docs[kv[0]].node_id))
        return [LexicalScore(self.docs[d].node_id, s) for d, s in ranked[:limit]]

    def search_or(self, tokens: list[str], limit: int) -> list[LexicalScore]:
        return self._rank(self._score(dict.fromkeys(tokens)), limit)

    def search(self, query: str, limit: int, analyzer_language: str | None = None) -> LexicalResult:
        tokens = analyze(query, analyzer_language or self.language)
        if not tokens:
            return LexicalResult([], "none")
        if not has_breaking_chars(query):
            phrase = self._phrase_hits(tokens)
            if phrase:
                return LexicalResult(self._rank(self._score(dict.fromkeys(tokens), phrase), limit), "phrase")
            # Prefix stage: every query token must prefix-match some token of the doc.
            expansions = [self._expand_prefix(t) for t in tokens]
            if all(expansions):
                per_token = [set().union(*(self._docs_with(x) for x in exp)) for exp in expansions]
                matched = set.intersection(*per_token)
                if matched:
                    terms = dict.fromkeys(x for exp in expansions for x in exp)
                    return LexicalResult(self._rank(self._score(terms, matched), limit), "prefix")
        return LexicalResult(self.search_or(tokens, limit), "or")

    def to_dict(self) -> dict[str, Any]:
        return {
            "language": self.language,
            "weights": self.weights,
            "docs": [
                {"id": d.node_id, "label": list(d.label_tokens), "alt": list(d.alt_tokens), "desc": list(d.desc_tokens)}
                for d in self.docs
            ],
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "LanguageIndex":
        lang = data["language"]
        docs = [LexicalDoc(d["id"], lang, tuple(d["label"]), tuple(d["alt"]), tuple(d["desc"])) for d in data["docs"]]
        return cls(lang, docs, data.get("weights"))


class LexicalIndex:
    """Collection of per-language sub-indices."""

    def __init__(self, indices: Mapping[str, LanguageIndex]):
        self.indices = dict(sorted(indices.items()))

    @classmethod
    def build(
        cls,
        nodes: Iterable[SkillNode],
        languages: Iterable[str] | None = None,
        weights: Mapping[str, float] | None = None,
    ) -> "LexicalIndex":
        wanted = set(languages) if languages is not None else None
        per_lang: dict[str, list[LexicalDoc]] = defaultdict(list)
        for node in nodes:
            for lang in node.languages:
                if wanted is not None and lang not in wanted:
                    continue
                doc = LexicalDoc.from_node(node, lang)
                if doc is not None:
                    per_lang[lang].append(doc)
        return cls({lang: LanguageIndex(lang, docs, weights) for lang, docs in per_lang.items()})

    @property
    def languages(self) -> list[str]:
        return list(self.indices)

    def doc_counts(self) -> dict[str, int]:
        return {lang: idx.doc_count for lang, idx in self.indices.items()}

    def search_lexical(self, query: str, language: str, limit: int) -> LexicalResult:
        if limit < 1:
            raise ValueError("limit must be >= 1")
        index = self.indices.get(language)
        fallback = language not in SUPPORTED_LANGUAGES
        if index is None:
            return LexicalResult([], "none", analyzer_fallback=True)
        result = index.search(query, limit)
        result.analyzer_fallback = fallback
        return result

    def to_dict(self) -> dict[str, Any]:
        return {"languages": {lang: idx.to_dict() for lang, idx in self.indices.items()}}

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "LexicalIndex":
        return cls({lang: LanguageIndex.from_dict(d) for lang, d in data["languages"].items()})
