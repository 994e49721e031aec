import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import FIXED_NOW, FIXTURES, graph_from, jsonl
from skillgraph.graph import (
    IngestError,
    NodeKind,
    NodeNotFound,
    Relation,
    SkillGraph,
    ValidationPolicy,
    ingest,
)

PROV = {"framework": "ESCO", "version": "1.2", "uri": "https://example.org/esco"}


def skill(nid, label="x", **kw):
    rec = {"id": nid, "kind": "skill", "labels": {"en": label}, "provenance": dict(PROV)}
    rec.update(kw)
    return rec


def rels(*pairs):
    return [{"type": t, "target": x} for t, x in pairs]


# ------------------------------------------------------------------ ingest


def test_minimal_record():
    graph, summary = graph_from([{"id": "esco:S1", "kind": "skill", "labels": {"en": "data analysis"}, "framework": "ESCO"}])
    assert (summary.nodes, summary.edges, len(summary.rejected)) == (1, 0, 0)
    node = graph.get_node("esco:S1")
    assert node.labels == {"en": "data analysis"}
    assert node.provenance.framework == "ESCO"


def test_skill_without_framework_or_occupation_is_rejected():
    rec = {"id": "x:S1", "kind": "skill", "labels": {"en": "orphan"}}
    for policy in ValidationPolicy:
        graph, summary = graph_from([rec], policy=policy)
        assert [r["reason"] for r in summary.rejected] == ["constraint:framework-or-occupation"]
        with pytest.raises(NodeNotFound):
            graph.get_node("x:S1")


def test_skill_without_framework_but_with_occupation_is_kept():
    recs = [
        {"id": "x:S1", "kind": "skill", "labels": {"en": "welding"}, "relations": rels(("isRelevantForOccupation", "x:O1"))},
        {"id": "x:O1", "kind": "occupation", "labels": {"en": "welder"}},
    ]
    graph, summary = graph_from(recs)
    assert summary.nodes == 2 and not summary.rejected
    assert graph.occupations_of("x:S1") == {"x:O1"}


def test_cross_framework_mapping_keeps_both_nodes():
    recs = [
        skill("esco:S1", "data analysis", mappings=[{"target": "rome:S1", "kind": "close"}]),
        {"id": "rome:S1", "kind": "skill", "labels": {"fr": "analyse de données"}, "provenance": {"framework": "ROME", "version": "4"}},
    ]
    graph, summary = graph_from(recs)
    assert summary.nodes == 2 and summary.mappings == 1
    assert graph.get_node("esco:S1").labels == {"en": "data analysis"}
    assert graph.get_node("rome:S1").labels == {"fr": "analyse de données"}


def test_same_framework_mapping_is_quarantined():
    recs = [skill("esco:S1", mappings=[{"target": "esco:S2", "kind": "exact"}]), skill("esco:S2")]
    graph, summary = graph_from(recs)
    assert not graph.mappings
    assert summary.rejected[0]["reason"].startswith("mapping:same-framework")


def test_get_node_missing():
    graph, _ = graph_from([skill("esco:S1")])
    with pytest.raises(NodeNotFound):
        graph.get_node("esco:MISSING")


def test_malformed_record_reports_line():
    stream = jsonl([skill("esco:S1")]).getvalue() + "{not json\n"
    with pytest.raises(IngestError) as err:
        ingest(stream.splitlines(), ValidationPolicy.STRICT, now=FIXED_NOW)
    assert err.value.line == 2
    graph, summary = ingest(stream.splitlines(), ValidationPolicy.LENIENT, now=FIXED_NOW)
    assert len(graph) == 1 and summary.rejected[0]["line"] == 2


@pytest.mark.parametrize(
    "bad",
    [
        {"id": "noprefix", "kind": "skill", "labels": {"en": "x"}},
        {"id": "esco:S9", "kind": "robot", "labels": {"en": "x"}},
        {"id": "esco:S9", "kind": "skill", "labels": {}},
        {"id": "esco:S9", "kind": "skill", "labels": {"en": "x"}, "relations": [{"type": "friendOf", "target": "esco:S1"}]},
    ],
)
def test_malformed_variants(bad):
    _, summary = graph_from([skill("esco:S1"), bad], policy="lenient")
    assert summary.rejected and summary.rejected[0]["reason"].startswith("malformed:")


def test_quarantined_record_not_found():
    recs = [skill("esco:S1"), {"id": "esco:S2", "kind": "skill", "labels": {}}]
    graph, _ = graph_from(recs, policy="lenient")
    with pytest.raises(NodeNotFound):
        graph.get_node("esco:S2")


def test_duplicates():
    same = [skill("esco:S1", "a"), skill("esco:S1", "a")]
    _, summary = graph_from(same)
    assert summary.nodes == 1 and summary.duplicates == 1
    conflict = [skill("esco:S1", "a"), skill("esco:S1", "b")]
    with pytest.raises(IngestError, match="duplicate:conflicting-content"):
        graph_from(conflict)
    graph, summary = graph_from(conflict, policy="lenient")
    assert graph.get_node("esco:S1").labels["en"] == "a"
    assert summary.rejected[0]["reason"] == "duplicate:conflicting-content"


def test_dangling_edge_strict_vs_lenient():
    recs = [skill("esco:S1", relations=rels(("related", "esco:GONE")))]
    with pytest.raises(IngestError, match="dangling"):
        graph_from(recs, policy="strict")
    graph, summary = graph_from(recs, policy="lenient")
    assert len(graph) == 1 and not graph.edges
    assert summary.rejected[0]["reason"].startswith("edge:dangling")


def test_self_loop_quarantined():
    graph, summary = graph_from([skill("esco:S1", relations=rels(("related", "esco:S1")))])
    assert not graph.edges and summary.rejected[0]["reason"].startswith("edge:self-loop")


def test_nfc_normalization():
    decomposed = "compe\u0301tence"
    graph, _ = graph_from([skill("esco:S1", labels={"fr": decomposed})])
    assert graph.get_node("esco:S1").labels["fr"] == "compétence"


def test_unknown_fields_counted():
    _, summary = graph_from([skill("esco:S1", colour="blue", weight=3)])
    assert summary.unknown_fields == 2


def test_summary_counts(fixture_graph):
    kinds = {k.value: len(fixture_graph.nodes([k])) for k in NodeKind}
    assert kinds == {"skill": 15, "competence": 1, "learning_outcome": 1, "occupation": 3}


def test_ingest_is_idempotent(tmp_path):
    recs = [skill("esco:S1", relations=rels(("related", "esco:S2"))), skill("esco:S2")]
    first, _ = graph_from(recs)
    second, summary = ingest(jsonl(recs), graph=first, now="2030-01-01T00:00:00+00:00")
    assert summary.nodes == 0 and summary.duplicates == 2
    assert first.to_json() == second.to_json()


def test_provenance_round_trip(tmp_path, fixture_graph):
    path = tmp_path / "snap.json"
    fixture_graph.save(path)
    loaded = SkillGraph.load(path)
    assert loaded.to_json() == fixture_graph.to_json()
    node = loaded.get_node("rome:R1")
    assert (node.provenance.framework, node.provenance.source_version, node.provenance.source_uri) == (
        "ROME",
        "4.0",
        "https://example.org/rome",
    )
    for edge in loaded.edges:
        assert edge.provenance == loaded.get_node(edge.from_id).provenance


def test_reversibility(fixture_graph):
    stripped = fixture_graph.without_mappings()
    assert not stripped.mappings
    for fw in ("esco", "rome"):
        part = stripped.restricted_to(fw)
        lines = [l for l in fixture_lines() if json.loads(l)["id"].startswith(fw + ":")]
        alone, _ = ingest([_drop_mappings(l) for l in lines], now=FIXED_NOW)
        assert part.to_dict()["nodes"] == alone.to_dict()["nodes"]
        assert part.to_dict()["edges"] == alone.to_dict()["edges"]


def fixture_lines():
    return (FIXTURES / "skills.jsonl").read_text(encoding="utf-8").splitlines()


def _drop_mappings(line):
    rec = json.loads(line)
    rec.pop("mappings", None)
    return rec


# --------------------------------------------------------------- neighbors


def test_neighbors_projection():
    recs = [
        skill("esco:S1", relations=rels(("hasPrerequisite", "esco:S3"), ("hasPrerequisite", "esco:S2"), ("related", "esco:S4"))),
        skill("esco:S2"),
        skill("esco:S3"),
        skill("esco:S4", relations=rels(("related", "esco:S1"))),
        skill("esco:S5", relations=rels(("related", "esco:S1"))),
    ]
    graph, _ = graph_from(recs)
    pre = graph.neighbors("esco:S1", [Relation.HAS_PREREQUISITE], "out")
    assert [nb.id for _, nb in pre] == ["esco:S2", "esco:S3"]
    both = graph.neighbors("esco:S1", [Relation.RELATED], "both")
    assert [nb.id for _, nb in both] == ["esco:S4", "esco:S5"]
    with pytest.raises(NodeNotFound):
        graph.neighbors("esco:NOPE")


def brute_neighbors(graph, node_id, relations, direction):
    wanted = set(relations) if relations is not None else set(Relation)
    found = {}
    order = list(Relation)
    for edge in sorted(graph.edges, key=lambda e: (e.from_id != node_id,)):
        if edge.relation not in wanted:
            continue
        if direction in ("out", "both") and edge.from_id == node_id:
            found.setdefault((edge.relation, edge.to_id), edge)
    for edge in graph.edges:
        if edge.relation in wanted and direction in ("in", "both") and edge.to_id == node_id:
            found.setdefault((edge.relation, edge.from_id), edge)
    keys = sorted(found, key=lambda k: (order.index(k[0]), k[1]))
    return [(found[k].relation, k[1]) for k in keys]


@st.composite
def random_graphs(draw):
    n = draw(st.integers(2, 8))
    ids = [f"esco:N{i}" for i in range(n)]
    edge_list = draw(
        st.lists(
            st.tuples(st.sampled_from(ids), st.sampled_from(list(Relation)), st.sampled_from(ids)).filter(
                lambda t: t[0] != t[2]
            ),
            max_size=30,
        )
    )
    recs = []
    for nid in ids:
        mine = [(r.value, t) for s, r, t in edge_list if s == nid]
        recs.append(skill(nid, relations=rels(*mine)))
    return graph_from(recs)[0], ids


@settings(max_examples=60, deadline=None)
@given(random_graphs(), st.sampled_from(["out", "in", "both"]), st.none() | st.sets(st.sampled_from(list(Relation)), min_size=1))
def test_neighbors_equal_edge_scan(graph_ids, direction, relations):
    graph, ids = graph_ids
    for nid in ids:
        got = [(e.relation, nb.id) for e, nb in graph.neighbors(nid, relations, direction)]
        assert got == brute_neighbors(graph, nid, relations, direction)


# ---------------------------------------------------------------- validate


def test_validate_clean(fixture_graph):
    assert fixture_graph.validate() == []


def test_validate_planted(tmp_path, fixture_graph):
    data = fixture_graph.to_dict()
    # (a) skill with only a label: no framework, no occupation link
    data["nodes"].append(
        {"id": "x:LONE", "kind": "skill", "labels": {"en": "lonely"}, "alt_labels": {}, "descriptions": {},
         "provenance": {"framework": "", "version": "", "uri": "", "ingested_at": FIXED_NOW}}
    )  # fmt: skip
    # (b) edge to a node removed after ingest
    data["nodes"] = [n for n in data["nodes"] if n["id"] != "esco:S11"]
    # (c) self-loop
    loop = dict(data["edges"][0], to=data["edges"][0]["from"])
    data["edges"].append(loop)
    # (d) label-less node
    data["nodes"].append(
        {"id": "esco:BLANK", "kind": "competence", "labels": {}, "alt_labels": {}, "descriptions": {},
         "provenance": {"framework": "ESCO", "version": "1", "uri": "", "ingested_at": FIXED_NOW}}
    )  # fmt: skip
    path = tmp_path / "corrupt.json"
    path.write_text(json.dumps(data), encoding="utf-8")
    violations = SkillGraph.load(path).validate()
    got = sorted((v.code, v.subject) for v in violations)
    assert got == sorted(
        [
            ("framework-or-occupation", "x:LONE"),
            ("dangling-edge", "esco:S10 -narrower-> esco:S11"),
            ("self-loop", f"{loop['from']} -{loop['relation']}-> {loop['from']}"),
            ("missing-label", "esco:BLANK"),
        ]
    )
