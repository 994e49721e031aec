import csv
import io
import json

import pytest
from click.testing import CliRunner
from fastapi.testclient import TestClient

from conftest import FIXTURES
from oracles import ref_ndcg5, ref_precision
from skillgraph import cli
from skillgraph.graph import SkillGraph
from skillgraph.service.app import create_app


@pytest.fixture
def runner():
    return CliRunner()


@pytest.fixture
def snapshot(tmp_path, runner):
    snap = tmp_path / "graph.json"
    res = runner.invoke(cli.main, ["ingest", str(FIXTURES / "skills.jsonl"), "--snapshot", str(snap)])
    assert res.exit_code == 0, res.stderr
    res = runner.invoke(cli.main, ["index", "--snapshot", str(snap)])
    assert res.exit_code == 0, res.stderr
    return snap


def error_report(result):
    assert result.exit_code != 0
    return json.loads(result.stderr.strip().splitlines()[-1])


def test_ingest_writes_snapshot(tmp_path, runner):
    snap = tmp_path / "g.json"
    res = runner.invoke(cli.main, ["ingest", str(FIXTURES / "skills.jsonl"), "--snapshot", str(snap)])
    assert res.exit_code == 0
    out = json.loads(res.stdout)
    assert out["violations"] == [] and out["summary"]["nodes"] == 20
    assert len(SkillGraph.load(snap)) == 20


def test_ingest_strict_failure_is_machine_readable(tmp_path, runner):
    bad = tmp_path / "bad.jsonl"
    bad.write_text('{"id": "esco:A", "kind": "skill", "labels": {"en": "a"}}\n{not json}\n')
    res = runner.invoke(cli.main, ["ingest", str(bad), "--snapshot", str(tmp_path / "s.json"), "--strict"])
    report = error_report(res)
    assert report["error"] == "ingest-failed" and report["record"]["line"] == 2
    assert not (tmp_path / "s.json").exists()


def test_ingest_append(tmp_path, runner, snapshot):
    extra = tmp_path / "extra.jsonl"
    extra.write_text('{"id": "esco:S99", "kind": "skill", "labels": {"en": "welding"}, "framework": "ESCO"}\n')
    res = runner.invoke(cli.main, ["ingest", str(extra), "--snapshot", str(snapshot), "--append"])
    assert res.exit_code == 0
    assert len(SkillGraph.load(snapshot)) == 21


def test_index_reports_languages(runner, snapshot):
    res = runner.invoke(cli.main, ["index", "--snapshot", str(snapshot), "--langs", "fr"])
    out = json.loads(res.stdout)
    assert out["languages"] == ["fr"] and out["doc_counts"]["fr"] > 0
    assert (snapshot.parent / "graph.json.index").is_dir()


def test_stale_index_rejected(tmp_path, runner, snapshot):
    extra = tmp_path / "extra.jsonl"
    extra.write_text('{"id": "esco:S99", "kind": "skill", "labels": {"en": "welding"}, "framework": "ESCO"}\n')
    runner.invoke(cli.main, ["ingest", str(extra), "--snapshot", str(snapshot), "--append"])
    res = runner.invoke(
        cli.main, ["eval", "--snapshot", str(snapshot), "--queries", str(FIXTURES / "queries.jsonl"), "--qrels", str(FIXTURES / "qrels.tsv")]
    )
    assert error_report(res)["error"] == "stale-index"


def test_missing_snapshot(tmp_path, runner):
    res = runner.invoke(
        cli.main,
        ["eval", "--snapshot", str(tmp_path / "none.json"), "--queries", str(FIXTURES / "queries.jsonl"), "--qrels", str(FIXTURES / "qrels.tsv")],
    )
    assert error_report(res)["error"] == "missing-snapshot"


def test_eval_report_matches_metric_oracle(tmp_path, runner, snapshot):
    out = tmp_path / "report"
    res = runner.invoke(
        cli.main,
        [
            "eval", "--snapshot", str(snapshot), "--queries", str(FIXTURES / "queries.jsonl"),
            "--qrels", str(FIXTURES / "qrels.tsv"), "--variants", "bm25,hybrid", "--modes", "C1",
            "--out", str(out), "--deterministic",
        ],
    )  # fmt: skip
    assert res.exit_code == 0, res.stderr
    assert {p.name for p in out.iterdir()} == {"per_query.csv", "report.json", "report.txt"}
    qrels = {}
    for line in (FIXTURES / "qrels.tsv").read_text().splitlines():
        qid, nid = line.split("\t")[:2]
        qrels.setdefault(qid, set()).add(nid)
    rows = list(csv.DictReader(io.StringIO((out / "per_query.csv").read_text())))
    assert len(rows) == 20
    for row in rows:
        ranked = row["results"].split()
        assert float(row["p_at_5"]) == pytest.approx(ref_precision(ranked, qrels[row["query_id"]], 5), abs=5e-5)
        assert float(row["ndcg_at_5"]) == pytest.approx(ref_ndcg5(ranked, qrels[row["query_id"]]), abs=5e-5)
    report = json.loads((out / "report.json").read_text())
    assert [r["mode"] for r in report["explanation"]] == ["C1"] and report["explanation"][0]["coverage"] == 1.0
    assert "hybrid" in res.stdout and "C1" in res.stdout


def test_eval_unresolved_qrel(tmp_path, runner, snapshot):
    qrels = tmp_path / "q.tsv"
    qrels.write_text("q1\tesco:ghost\n")
    res = runner.invoke(
        cli.main, ["eval", "--snapshot", str(snapshot), "--queries", str(FIXTURES / "queries.jsonl"), "--qrels", str(qrels)]
    )
    report = error_report(res)
    assert report["error"] == "eval-failed" and "esco:ghost" in json.dumps(report)


def test_bad_config(tmp_path, runner):
    cfg = tmp_path / "c.toml"
    cfg.write_text("[fusion]\nalpha = 9\n")
    res = runner.invoke(cli.main, ["serve", "--config", str(cfg)])
    assert error_report(res)["error"] == "bad-config"


# ----------------------------------------------------------------- client


@pytest.fixture
def served(monkeypatch, fixture_engine):
    api = TestClient(create_app(fixture_engine))

    def fake_get(url, params=None, timeout=None):
        return api.get(url.replace("http://api", ""), params=params)

    monkeypatch.setattr(cli.httpx, "get", fake_get)
    return ["client", "--url", "http://api"]


def test_client_commands(runner, served):
    res = runner.invoke(cli.main, served + ["search", "SQL", "-k", "3"])
    assert res.exit_code == 0 and json.loads(res.stdout)["results"][0]["id"] == "esco:S1"
    res = runner.invoke(cli.main, served + ["skill", "esco:O1"])
    assert json.loads(res.stdout)["kind"] == "occupation"
    res = runner.invoke(cli.main, served + ["prerequisites", "esco:S1"])
    assert json.loads(res.stdout)["items"][0]["id"] == "esco:S2"
    res = runner.invoke(cli.main, served + ["subskills", "esco:S1"])
    assert [i["id"] for i in json.loads(res.stdout)["items"]] == ["esco:S3", "esco:S4"]
    res = runner.invoke(cli.main, served + ["explain", "esco:S1"])
    assert res.exit_code == 0 and "[def:esco:S1]" in res.stdout
    res = runner.invoke(cli.main, served + ["explain", "esco:S1", "--format", "json"])
    assert len(json.loads(res.stdout)["sentences"]) == 3


def test_client_errors(runner, served):
    report = error_report(runner.invoke(cli.main, served + ["skill", "esco:none"]))
    assert report == {"error": "http-error", "message": "HTTP 404", "status": 404, "detail": report["detail"]}
    assert error_report(runner.invoke(cli.main, served + ["search", "SQL", "-k", "0"]))["status"] == 422


def test_client_unreachable(runner):
    res = runner.invoke(cli.main, ["client", "--url", "http://127.0.0.1:9", "--timeout", "0.5", "skill", "esco:S1"])
    assert error_report(res)["error"] == "unreachable"
