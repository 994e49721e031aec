"""In-memory skill graph: node/edge types, JSON-Lines ingest, constraint checks, snapshots.

A graph instance is never mutated after construction. Re-ingesting produces a
new instance, so readers holding the old one keep a consistent view.
"""

from __future__ import annotations

import hashlib
import json
import logging
import unicodedata
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path
from typing import Any, Iterable, Iterator, Mapping

logger = logging.getLogger(__name__)

SNAPSHOT_FORMAT = "skillgraph-snapshot"
SNAPSHOT_VERSION = 1


class NodeKind(str, Enum):
    SKILL = "skill"
    COMPETENCE = "competence"
    LEARNING_OUTCOME = "learning_outcome"
    OCCUPATION = "occupation"


class Relation(str, Enum):
    # Declaration order is the canonical sort order for neighbor listings.
    BROADER = "broader"
    NARROWER = "narrower"
    RELATED = "related"
    HAS_PREREQUISITE = "hasPrerequisite"
    HAS_SUB_SKILL = "hasSubSkill"
    IS_RELEVANT_FOR_OCCUPATION = "isRelevantForOccupation"
    IS_ASSESSED_BY = "isAssessedBy"

    @property
    def rank(self) -> int:
        return _RELATION_RANK[self]

    @classmethod
    def parse(cls, value: str) -> "Relation":
        """Accept camelCase, snake_case or any casing of a relation name."""
        key = value.replace("_", "").replace("-", "").lower()
        try:
            return _RELATION_ALIASES[key]
        except KeyError:
            raise ValueError(f"unknown relation type {value!r}") from None


_RELATION_RANK = {rel: i for i, rel in enumerate(Relation)}
_RELATION_ALIASES = {rel.value.lower(): rel for rel in Relation}
_RELATION_ALIASES.update({"prerequisite": Relation.HAS_PREREQUISITE, "subskill": Relation.HAS_SUB_SKILL})


class MappingKind(str, Enum):
    EXACT = "exact"
    CLOSE = "close"
    RELATED = "related"


class ValidationPolicy(str, Enum):
    STRICT = "strict"
    LENIENT = "lenient"


class NodeNotFound(KeyError):
    """Raised for an id that is not materialized in the graph."""

    def __init__(self, node_id: str):
        super().__init__(node_id)
        self.node_id = node_id

    def __str__(self) -> str:
        return f"node not found: {self.node_id}"


class IngestError(ValueError):
    """A record (or the whole batch) could not be ingested under the active policy."""

    def __init__(self, reason: str, line: int | None = None, node_id: str | None = None):
        self.reason = reason
        self.line = line
        self.node_id = node_id
        where = f"line {line}: " if line is not None else ""
        super().__init__(f"{where}{reason}")

    def to_dict(self) -> dict[str, Any]:
        return {"line": self.line, "id": self.node_id, "reason": self.reason}


@dataclass(frozen=True)
class Provenance:
    framework: str
    source_version: str = ""
    source_uri: str = ""
    ingested_at: str = ""

    def to_dict(self) -> dict[str, str]:
        return {
            "framework": self.framework,
            "version": self.source_version,
            "uri": self.source_uri,
            "ingested_at": self.ingested_at,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "Provenance":
        return cls(
            framework=data.get("framework", ""),
            source_version=data.get("version", ""),
            source_uri=data.get("uri", ""),
            ingested_at=data.get("ingested_at", ""),
        )


@dataclass(frozen=True)
class SkillNode:
    id: str
    kind: NodeKind
    labels: dict[str, str]
    alt_labels: dict[str, list[str]] = field(default_factory=dict)
    descriptions: dict[str, str] = field(default_factory=dict)
    provenance: Provenance = field(default_factory=lambda: Provenance(""))

    @property
    def namespace(self) -> str:
        return self.id.split(":", 1)[0]

    @property
    def framework(self) -> str:
        """Framework of origin, falling back to the id namespace when provenance lacks one."""
        return (self.provenance.framework or self.namespace).lower()

    @property
    def languages(self) -> list[str]:
        langs = set(self.labels) | set(self.alt_labels) | set(self.descriptions)
        return sorted(langs)

    def label(self, language: str) -> tuple[str, str, bool]:
        """Return (label, language used, fell_back)."""
        if language in self.labels:
            return self.labels[language], language, False
        for lang in sorted(self.labels):
            return self.labels[lang], lang, True
        return "", language, True

    def to_dict(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "kind": self.kind.value,
            "labels": dict(sorted(self.labels.items())),
            "alt_labels": {k: list(v) for k, v in sorted(self.alt_labels.items())},
            "descriptions": dict(sorted(self.descriptions.items())),
            "provenance": self.provenance.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "SkillNode":
        return cls(
            id=data["id"],
            kind=NodeKind(data["kind"]),
            labels=dict(data.get("labels", {})),
            alt_labels={k: list(v) for k, v in data.get("alt_labels", {}).items()},
            descriptions=dict(data.get("descriptions", {})),
            provenance=Provenance.from_dict(data.get("provenance", {})),
        )


@dataclass(frozen=True)
class RelationEdge:
    from_id: str
    to_id: str
    relation: Relation
    provenance: Provenance

    def key(self) -> tuple[str, int, str]:
        return (self.from_id, self.relation.rank, self.to_id)

    def to_dict(self) -> dict[str, Any]:
        return {
            "from": self.from_id,
            "to": self.to_id,
            "relation": self.relation.value,
            "provenance": self.provenance.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "RelationEdge":
        return cls(data["from"], data["to"], Relation(data["relation"]), Provenance.from_dict(data["provenance"]))


@dataclass(frozen=True)
class MappingEdge:
    from_id: str
    to_id: str
    mapping_kind: MappingKind
    provenance: Provenance

    def key(self) -> tuple[str, str, str]:
        return (self.from_id, self.to_id, self.mapping_kind.value)

    def to_dict(self) -> dict[str, Any]:
        return {
            "from": self.from_id,
            "to": self.to_id,
            "kind": self.mapping_kind.value,
            "provenance": self.provenance.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "MappingEdge":
        return cls(data["from"], data["to"], MappingKind(data["kind"]), Provenance.from_dict(data["provenance"]))


@dataclass(frozen=True, order=True)
class ConstraintViolation:
    code: str
    subject: str
    message: str

    def to_dict(self) -> dict[str, str]:
        return {"code": self.code, "subject": self.subject, "message": self.message}


@dataclass
class IngestSummary:
    nodes: int = 0
    edges: int = 0
    mappings: int = 0
    duplicates: int = 0
    unknown_fields: int = 0
    per_kind: dict[str, int] = field(default_factory=dict)
    per_framework: dict[str, int] = field(default_factory=dict)
    rejected: list[dict[str, Any]] = field(default_factory=list)

    def to_dict(self) -> dict[str, Any]:
        return {
            "nodes": self.nodes,
            "edges": self.edges,
            "mappings": self.mappings,
            "duplicates": self.duplicates,
            "unknown_fields": self.unknown_fields,
            "per_kind": dict(sorted(self.per_kind.items())),
            "per_framework": dict(sorted(self.per_framework.items())),
            "rejected": self.rejected,
        }


class SkillGraph:
    """Immutable node/edge store with deterministic adjacency listings."""

    def __init__(
        self,
        nodes: Iterable[SkillNode] = (),
        edges: Iterable[RelationEdge] = (),
        mappings: Iterable[MappingEdge] = (),
        record_hashes: Mapping[str, str] | None = None,
    ):
        self._nodes: dict[str, SkillNode] = {n.id: n for n in sorted(nodes, key=lambda n: n.id)}
        self._edges: tuple[RelationEdge, ...] = tuple(sorted(set(edges), key=RelationEdge.key))
        self._mappings: tuple[MappingEdge, ...] = tuple(sorted(set(mappings), key=MappingEdge.key))
        self._hashes = dict(record_hashes or {})
        self._out: dict[str, list[RelationEdge]] = defaultdict(list)
        self._in: dict[str, list[RelationEdge]] = defaultdict(list)
        for e in self._edges:
            self._out[e.from_id].append(e)
            self._in[e.to_id].append(e)

    def __len__(self) -> int:
        return len(self._nodes)

    def __contains__(self, node_id: object) -> bool:
        return node_id in self._nodes

    def __iter__(self) -> Iterator[SkillNode]:
        return iter(self._nodes.values())

    @property
    def edges(self) -> tuple[RelationEdge, ...]:
        return self._edges

    @property
    def mappings(self) -> tuple[MappingEdge, ...]:
        return self._mappings

    @property
    def record_hashes(self) -> dict[str, str]:
        return dict(self._hashes)

    def get_node(self, node_id: str) -> SkillNode:
        try:
            return self._nodes[node_id]
        except KeyError:
            raise NodeNotFound(node_id) from None

    def nodes(self, kinds: Iterable[NodeKind] | None = None) -> list[SkillNode]:
        if kinds is None:
            return list(self._nodes.values())
        wanted = set(kinds)
        return [n for n in self._nodes.values() if n.kind in wanted]

    def out_edges(self, node_id: str) -> list[RelationEdge]:
        return list(self._out.get(node_id, ()))

    def in_edges(self, node_id: str) -> list[RelationEdge]:
        return list(self._in.get(node_id, ()))

    def neighbors(
        self,
        node_id: str,
        relations: Iterable[Relation] | None = None,
        direction: str = "out",
    ) -> list[tuple[RelationEdge, SkillNode]]:
        """Edges incident to ``node_id`` with the node at the other end.

        Sorted by relation kind then neighbor id. With ``direction="both"`` a
        neighbor reachable through the same relation in both directions is
        listed once (the outgoing edge wins). Dangling endpoints are skipped.
        """
        if node_id not in self._nodes:
            raise NodeNotFound(node_id)
        if direction not in ("out", "in", "both"):
            raise ValueError(f"direction must be out, in or both, not {direction!r}")
        wanted = set(relations) if relations is not None else set(Relation)
        picked: dict[tuple[int, str], tuple[RelationEdge, SkillNode]] = {}
        if direction in ("out", "both"):
            for e in self._out.get(node_id, ()):
                if e.relation in wanted and e.to_id in self._nodes:
                    picked.setdefault((e.relation.rank, e.to_id), (e, self._nodes[e.to_id]))
        if direction in ("in", "both"):
            for e in self._in.get(node_id, ()):
                if e.relation in wanted and e.from_id in self._nodes:
                    picked.setdefault((e.relation.rank, e.from_id), (e, self._nodes[e.from_id]))
        return [picked[key] for key in sorted(picked)]

    def occupations_of(self, node_id: str) -> set[str]:
        """Occupation ids linked to a node through isRelevantForOccupation in either direction."""
        rel = Relation.IS_RELEVANT_FOR_OCCUPATION
        out = {e.to_id for e in self._out.get(node_id, ()) if e.relation is rel}
        inc = {e.from_id for e in self._in.get(node_id, ()) if e.relation is rel}
        return out | inc

    def validate(self) -> list[ConstraintViolation]:
        found: list[ConstraintViolation] = []
        for node in self._nodes.values():
            if not any(v.strip() for v in node.labels.values()):
                found.append(ConstraintViolation("missing-label", node.id, "node has no label in any language"))
            if node.kind is NodeKind.SKILL and not node.provenance.framework and not self.occupations_of(node.id):
                found.append(
                    ConstraintViolation(
                        "framework-or-occupation", node.id, "skill is linked to neither a framework nor an occupation"
                    )
                )
        for e in self._edges:
            subject = f"{e.from_id} -{e.relation.value}-> {e.to_id}"
            if e.from_id == e.to_id:
                found.append(ConstraintViolation("self-loop", subject, "edge connects a node to itself"))
            missing = [x for x in (e.from_id, e.to_id) if x not in self._nodes]
            if missing:
                found.append(ConstraintViolation("dangling-edge", subject, f"unresolved endpoint(s): {', '.join(missing)}"))
        for m in self._mappings:
            subject = f"{m.from_id} ~{m.mapping_kind.value}~ {m.to_id}"
            if m.from_id == m.to_id:
                found.append(ConstraintViolation("self-loop", subject, "mapping connects a node to itself"))
            missing = [x for x in (m.from_id, m.to_id) if x not in self._nodes]
            if missing:
                found.append(ConstraintViolation("dangling-edge", subject, f"unresolved endpoint(s): {', '.join(missing)}"))
        return sorted(found)

    def without_mappings(self) -> "SkillGraph":
        return SkillGraph(self._nodes.values(), self._edges, (), self._hashes)

    def restricted_to(self, framework: str) -> "SkillGraph":
        """Nodes of one framework with the relation edges among them; mappings dropped."""
        fw = framework.lower()
        keep = {n.id for n in self._nodes.values() if n.framework == fw}
        return SkillGraph(
            (self._nodes[i] for i in keep),
            (e for e in self._edges if e.from_id in keep and e.to_id in keep),
            (),
            {k: v for k, v in self._hashes.items() if k in keep},
        )

    def to_dict(self) -> dict[str, Any]:
        return {
            "format": SNAPSHOT_FORMAT,
            "version": SNAPSHOT_VERSION,
            "nodes": [n.to_dict() for n in self._nodes.values()],
            "edges": [e.to_dict() for e in self._edges],
            "mappings": [m.to_dict() for m in self._mappings],
            "record_hashes": dict(sorted(self._hashes.items())),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, ensure_ascii=False, separators=(",", ":"))

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "SkillGraph":
        if data.get("format") != SNAPSHOT_FORMAT:
            raise ValueError("not a skill graph snapshot")
        if data.get("version") != SNAPSHOT_VERSION:
            raise ValueError(f"unsupported snapshot version {data.get('version')!r}")
        return cls(
            (SkillNode.from_dict(n) for n in data["nodes"]),
            (RelationEdge.from_dict(e) for e in data["edges"]),
            (MappingEdge.from_dict(m) for m in data["mappings"]),
            data.get("record_hashes", {}),
        )

    def save(self, path: str | Path) -> None:
        target = Path(path)
        tmp = target.with_name(target.name + ".tmp")
        tmp.write_text(self.to_json(), encoding="utf-8")
        tmp.replace(target)

    @classmethod
    def load(cls, path: str | Path) -> "SkillGraph":
        """Load a snapshot as-is. No constraint checks run; call ``validate`` for those."""
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


# --------------------------------------------------------------------------- ingest

_KNOWN_FIELDS = {
    "id", "kind", "labels", "alt_labels", "descriptions", "relations", "mappings", "provenance",
    "framework", "version", "uri",
}  # fmt: skip


def nfc(text: str) -> str:
    return unicodedata.normalize("NFC", text)


@dataclass
class _Parsed:
    line: int
    node: SkillNode
    relations: list[tuple[Relation, str]]
    mappings: list[tuple[MappingKind, str]]
    content_hash: str


def _text_map(value: Any, what: str) -> dict[str, str]:
    if value is None:
        return {}
    if not isinstance(value, dict) or not all(isinstance(k, str) and isinstance(v, str) for k, v in value.items()):
        raise ValueError(f"{what} must map language tags to strings")
    return {nfc(k.strip()): nfc(v.strip()) for k, v in value.items() if v.strip()}


def _parse_record(raw: Any, line: int, now: str) -> tuple[_Parsed, int]:
    if not isinstance(raw, dict):
        raise ValueError("record is not a JSON object")
    unknown = len(set(raw) - _KNOWN_FIELDS)
    node_id = raw.get("id")
    if not isinstance(node_id, str) or ":" not in node_id or not all(node_id.split(":", 1)):
        raise ValueError("id must be a namespaced string '<framework>:<local-id>'")
    node_id = nfc(node_id.strip())
    try:
        kind = NodeKind(str(raw.get("kind", "")).lower())
    except ValueError:
        raise ValueError(f"unknown kind {raw.get('kind')!r}") from None
    labels = _text_map(raw.get("labels"), "labels")
    if not labels:
        raise ValueError("at least one label is required")
    alt_raw = raw.get("alt_labels") or {}
    if not isinstance(alt_raw, dict):
        raise ValueError("alt_labels must map language tags to lists of strings")
    alt_labels: dict[str, list[str]] = {}
    for lang, values in alt_raw.items():
        if not isinstance(values, list) or not all(isinstance(v, str) for v in values):
            raise ValueError("alt_labels must map language tags to lists of strings")
        cleaned = [nfc(v.strip()) for v in values if v.strip()]
        if cleaned:
            alt_labels[nfc(lang.strip())] = cleaned
    descriptions = _text_map(raw.get("descriptions"), "descriptions")

    prov_raw = raw.get("provenance") or {}
    if not isinstance(prov_raw, dict):
        raise ValueError("provenance must be an object")
    provenance = Provenance(
        framework=str(prov_raw.get("framework", raw.get("framework", "")) or "").strip(),
        source_version=str(prov_raw.get("version", raw.get("version", "")) or "").strip(),
        source_uri=str(prov_raw.get("uri", raw.get("uri", "")) or "").strip(),
        ingested_at=str(prov_raw.get("ingested_at") or now),
    )

    relations: list[tuple[Relation, str]] = []
    for rel in raw.get("relations") or []:
        if not isinstance(rel, dict) or not isinstance(rel.get("target"), str) or not isinstance(rel.get("type"), str):
            raise ValueError("each relation needs string 'type' and 'target'")
        relations.append((Relation.parse(rel["type"]), nfc(rel["target"].strip())))
    mappings: list[tuple[MappingKind, str]] = []
    for m in raw.get("mappings") or []:
        if not isinstance(m, dict) or not isinstance(m.get("target"), str):
            raise ValueError("each mapping needs a string 'target'")
        try:
            mkind = MappingKind(str(m.get("kind", "")).lower().removesuffix("match").removesuffix("_"))
        except ValueError:
            raise ValueError(f"unknown mapping kind {m.get('kind')!r}") from None
        mappings.append((mkind, nfc(m["target"].strip())))

    node = SkillNode(node_id, kind, labels, alt_labels, descriptions, provenance)
    content = node.to_dict()
    content["provenance"].pop("ingested_at")
    content["relations"] = sorted((r.value, t) for r, t in set(relations))
    content["mappings"] = sorted((k.value, t) for k, t in set(mappings))
    digest = hashlib.sha256(json.dumps(content, sort_keys=True, ensure_ascii=False).encode()).hexdigest()
    return _Parsed(line, node, relations, mappings, digest), unknown


def ingest(
    stream: Iterable[str | Mapping[str, Any]],
    policy: ValidationPolicy | str = ValidationPolicy.STRICT,
    graph: SkillGraph | None = None,
    now: str | None = None,
) -> tuple[SkillGraph, IngestSummary]:
    """Materialize JSON-Lines records into a new graph (optionally on top of ``graph``).

    Under ``STRICT`` a malformed record, a conflicting duplicate or a dangling
    edge raises :class:`IngestError` and nothing is materialized. Under
    ``LENIENT`` such records/edges are quarantined and listed in the summary.
    Skills with neither a framework nor an occupation link are rejected under
    both policies.
    """
    policy = ValidationPolicy(policy)
    strict = policy is ValidationPolicy.STRICT
    base = graph or SkillGraph()
    now = now or datetime.now(timezone.utc).isoformat(timespec="seconds")
    summary = IngestSummary()

    def reject(reason: str, line: int | None, node_id: str | None = None) -> None:
        if strict:
            raise IngestError(reason, line, node_id)
        summary.rejected.append({"line": line, "id": node_id, "reason": reason})

    hashes = base.record_hashes
    accepted: dict[str, _Parsed] = {}
    for line_no, item in enumerate(stream, start=1):
        if isinstance(item, str):
            if not item.strip():
                continue
            try:
                item = json.loads(item)
            except json.JSONDecodeError as exc:
                reject(f"malformed:json ({exc.msg})", line_no)
                continue
        try:
            parsed, unknown = _parse_record(item, line_no, now)
        except ValueError as exc:
            rid = item.get("id") if isinstance(item, dict) and isinstance(item.get("id"), str) else None
            reject(f"malformed:{exc}", line_no, rid)
            continue
        summary.unknown_fields += unknown
        nid = parsed.node.id
        known_hash = hashes.get(nid) or (accepted[nid].content_hash if nid in accepted else None)
        if known_hash is None and nid in base:
            known_hash = ""  # present without a recorded hash: treat any re-ingest as conflicting
        if known_hash is not None:
            if known_hash == parsed.content_hash:
                summary.duplicates += 1
            else:
                reject("duplicate:conflicting-content", line_no, nid)
            continue
        accepted[nid] = parsed
    if summary.unknown_fields:
        logger.warning("ignored %d unknown field(s) during ingest", summary.unknown_fields)

    # Framework-or-occupation constraint, counting links declared on either side.
    occ = Relation.IS_RELEVANT_FOR_OCCUPATION
    linked = {p.node.id for p in accepted.values() if any(r is occ for r, _ in p.relations)}
    linked |= {t for p in accepted.values() for r, t in p.relations if r is occ}
    for p in list(accepted.values()):
        n = p.node
        if n.kind is NodeKind.SKILL and not n.provenance.framework and n.id not in linked and not base.occupations_of(n.id):
            summary.rejected.append({"line": p.line, "id": n.id, "reason": "constraint:framework-or-occupation"})
            del accepted[n.id]

    known_ids = set(base._nodes) | set(accepted)
    new_edges: list[RelationEdge] = []
    new_maps: list[MappingEdge] = []
    for p in accepted.values():
        src = p.node
        for rel, target in p.relations:
            if target == src.id:
                summary.rejected.append({"line": p.line, "id": src.id, "reason": f"edge:self-loop ({rel.value})"})
            elif target not in known_ids:
                reject(f"edge:dangling ({rel.value} -> {target})", p.line, src.id)
            else:
                new_edges.append(RelationEdge(src.id, target, rel, src.provenance))
        for mkind, target in p.mappings:
            if target not in known_ids:
                reject(f"mapping:dangling ({mkind.value} -> {target})", p.line, src.id)
                continue
            other = accepted[target].node if target in accepted else base.get_node(target)
            if other.framework == src.framework:
                summary.rejected.append({"line": p.line, "id": src.id, "reason": f"mapping:same-framework ({target})"})
                continue
            new_maps.append(MappingEdge(src.id, target, mkind, src.provenance))

    existing_edges = set(base.edges)
    existing_maps = set(base.mappings)
    summary.nodes = len(accepted)
    summary.edges = len(set(new_edges) - existing_edges)
    summary.mappings = len(set(new_maps) - existing_maps)
    summary.per_kind = dict(Counter(p.node.kind.value for p in accepted.values()))
    summary.per_framework = dict(Counter(p.node.framework for p in accepted.values()))
    hashes.update({nid: p.content_hash for nid, p in accepted.items()})
    merged = SkillGraph(
        [*base, *(p.node for p in accepted.values())],
        [*base.edges, *new_edges],
        [*base.mappings, *new_maps],
        hashes,
    )
    return merged, summary


def ingest_file(
    path: str | Path,
    policy: ValidationPolicy | str = ValidationPolicy.STRICT,
    graph: SkillGraph | None = None,
    now: str | None = None,
) -> tuple[SkillGraph, IngestSummary]:
    with open(path, encoding="utf-8") as fh:
        return ingest(fh, policy, graph, now)
