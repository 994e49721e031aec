"""Command-line entry point.

``ingest``, ``index`` and ``eval`` work on local files (the REST API is
read-only). ``serve`` runs the API; ``client`` talks to a running server.
Failures print a JSON error report on stderr and exit nonzero.
"""

from __future__ import annotations

import json
import sys
import time
from pathlib import Path

import click
import httpx

from .config import ServiceConfig
from .engine import Engine, IndexBundle, IndexMismatch, index_dir, make_embedder
from .evaluation.harness import EvalError, StepClock, load_qrels, load_queries, run_eval
from .graph import IngestError, SkillGraph, ValidationPolicy, ingest_file


class CliFailure(click.ClickException):
    """Reported as one JSON object on stderr."""

    def __init__(self, error: str, message: str, **details):
        super().__init__(message)
        self.report = {"error": error, "message": message, **details}

    def show(self, file=None) -> None:
        click.echo(json.dumps(self.report, ensure_ascii=False, sort_keys=True), err=True)


def _split(value: str | None) -> list[str] | None:
    if not value:
        return None
    return [v.strip() for v in value.split(",") if v.strip()]


def _emit(data) -> None:
    click.echo(json.dumps(data, ensure_ascii=False, indent=2, sort_keys=True))


def _config(config_path: str | None, snapshot: str | None) -> ServiceConfig:
    try:
        config = ServiceConfig.load(config_path) if config_path else ServiceConfig()
    except (OSError, ValueError) as exc:
        raise CliFailure("bad-config", str(exc), path=config_path) from None
    if snapshot:
        config.snapshot_path = Path(snapshot)
    return config


def _engine(config: ServiceConfig) -> Engine:
    if not Path(config.snapshot_path).exists():
        raise CliFailure("missing-snapshot", f"no snapshot at {config.snapshot_path}")
    try:
        return Engine.from_config(config)
    except IndexMismatch as exc:
        raise CliFailure("stale-index", f"{exc}; rerun 'skillgraph index'") from None


@click.group()
@click.version_option(package_name="artifact")
def main() -> None:
    """Multilingual skills knowledge graph: ingest, index, serve, evaluate."""


@main.command("ingest")
@click.argument("jsonl", type=click.Path(exists=True, dir_okay=False))
@click.option("--snapshot", required=True, type=click.Path(dir_okay=False), help="Snapshot file to write.")
@click.option("--strict", is_flag=True, help="Abort on the first malformed record, conflict or dangling edge.")
@click.option("--append", is_flag=True, help="Ingest on top of an existing snapshot instead of replacing it.")
def ingest_cmd(jsonl: str, snapshot: str, strict: bool, append: bool) -> None:
    """Validate JSON-Lines records and write a graph snapshot."""
    base = SkillGraph.load(snapshot) if append and Path(snapshot).exists() else None
    policy = ValidationPolicy.STRICT if strict else ValidationPolicy.LENIENT
    try:
        graph, summary = ingest_file(jsonl, policy, base)
    except IngestError as exc:
        raise CliFailure("ingest-failed", str(exc), record=exc.to_dict()) from None
    violations = graph.validate()
    graph.save(snapshot)
    _emit({"snapshot": str(snapshot), "summary": summary.to_dict(), "violations": [v.to_dict() for v in violations]})


@main.command("index")
@click.option("--snapshot", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--langs", default="en,fr", show_default=True, help="Comma-separated languages to index.")
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False), help="TOML config (HNSW params, embedder).")
def index_cmd(snapshot: str, langs: str, config_path: str | None) -> None:
    """Build the lexical and vector indices next to the snapshot."""
    config = _config(config_path, snapshot)
    graph = SkillGraph.load(snapshot)
    embedder = make_embedder(config)
    bundle = IndexBundle.build(graph, embedder, _split(langs), config.hnsw.to_params())
    target = index_dir(snapshot)
    bundle.save(target, graph, type(embedder).__name__)
    _emit({"index": str(target), "languages": bundle.lexical.languages, "doc_counts": bundle.lexical.doc_counts()})


@main.command("serve")
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False), help="TOML config file.")
@click.option("--snapshot", type=click.Path(dir_okay=False), help="Override snapshot_path from the config.")
@click.option("--host", default=None, help="Override the listen address.")
@click.option("--port", default=None, type=int, help="Override the listen port.")
def serve_cmd(config_path: str | None, snapshot: str | None, host: str | None, port: int | None) -> None:
    """Run the REST API."""
    import uvicorn

    from .service.app import create_app

    config = _config(config_path, snapshot)
    app = create_app(_engine(config))
    uvicorn.run(app, host=host or config.host, port=port or config.port, log_level="info")


@main.command("eval")
@click.option("--queries", required=True, type=click.Path(exists=True, dir_okay=False), help="JSONL {query_id, text, lang}.")
@click.option("--qrels", required=True, type=click.Path(exists=True, dir_okay=False), help="TSV query_id<TAB>node_id.")
@click.option("--variants", default="bm25,dense,hybrid,rerank", show_default=True)
@click.option("--modes", default="", help="Explanation modes to benchmark, e.g. C1,C2,C3.")
@click.option("--out", "out_dir", default="eval_out", show_default=True, type=click.Path(file_okay=False))
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--snapshot", type=click.Path(dir_okay=False))
@click.option("--deterministic", is_flag=True, help="Use a step clock so reruns give byte-identical reports.")
def eval_cmd(
    queries: str, qrels: str, variants: str, modes: str, out_dir: str,
    config_path: str | None, snapshot: str | None, deterministic: bool,
) -> None:  # fmt: skip
    """Run queries through retrieval variants and explanation modes; write CSV, JSON and text reports."""
    engine = _engine(_config(config_path, snapshot))
    try:
        report = run_eval(
            engine,
            load_queries(queries),
            load_qrels(qrels),
            _split(variants) or [],
            _split(modes) or [],
            out_dir,
            clock=StepClock() if deterministic else time.perf_counter,
        )
    except EvalError as exc:
        raise CliFailure("eval-failed", str(exc), report=exc.report) from None
    except ValueError as exc:
        raise CliFailure("eval-failed", str(exc)) from None
    click.echo(report.table(), nl=False)


# ----------------------------------------------------------------- client


@main.group("client")
@click.option("--url", default="http://127.0.0.1:8000", show_default=True, envvar="SKILLGRAPH_URL")
@click.option("--timeout", default=30.0, show_default=True)
@click.pass_context
def client(ctx: click.Context, url: str, timeout: float) -> None:
    """Query a running server."""
    ctx.obj = {"url": url.rstrip("/"), "timeout": timeout}


def _get(ctx: click.Context, path: str, params: dict | None = None) -> httpx.Response:
    params = {k: v for k, v in (params or {}).items() if v is not None}
    try:
        resp = httpx.get(ctx.obj["url"] + path, params=params, timeout=ctx.obj["timeout"])
    except httpx.HTTPError as exc:
        raise CliFailure("unreachable", str(exc), url=ctx.obj["url"]) from None
    if resp.status_code >= 400:
        try:
            detail = resp.json().get("detail")
        except ValueError:
            detail = resp.text
        raise CliFailure("http-error", f"HTTP {resp.status_code}", status=resp.status_code, detail=detail)
    return resp


@client.command("search")
@click.argument("query")
@click.option("--lang")
@click.option("-k", "k", default=5, show_default=True)
@click.option("--variant", type=click.Choice(["bm25", "dense", "hybrid", "rerank"]))
@click.option("--alpha", type=float)
@click.pass_context
def client_search(ctx, query, lang, k, variant, alpha) -> None:
    _emit(_get(ctx, "/search", {"q": query, "lang": lang, "k": k, "variant": variant, "alpha": alpha}).json())


@client.command("skill")
@click.argument("node_id")
@click.pass_context
def client_skill(ctx, node_id) -> None:
    _emit(_get(ctx, f"/skill/{node_id}").json())


@client.command("prerequisites")
@click.argument("node_id")
@click.option("-k", "k", default=5, show_default=True)
@click.option("--lang")
@click.pass_context
def client_prerequisites(ctx, node_id, k, lang) -> None:
    _emit(_get(ctx, "/prerequisites", {"id": node_id, "k": k, "lang": lang}).json())


@client.command("subskills")
@click.argument("node_id")
@click.option("-k", "k", default=5, show_default=True)
@click.option("--lang")
@click.pass_context
def client_subskills(ctx, node_id, k, lang) -> None:
    _emit(_get(ctx, "/subskills", {"id": node_id, "k": k, "lang": lang}).json())


@client.command("explain")
@click.argument("node_id")
@click.option("--lang")
@click.option("--audience", type=click.Choice(["teacher", "learner"]), default="teacher", show_default=True)
@click.option("--format", "fmt", type=click.Choice(["text", "json"]), default="text", show_default=True)
@click.option("--mode", type=click.Choice(["C1", "C2", "C3"]))
@click.pass_context
def client_explain(ctx, node_id, lang, audience, fmt, mode) -> None:
    resp = _get(ctx, "/explain", {"id": node_id, "lang": lang, "audience": audience, "format": fmt, "mode": mode})
    if fmt == "json":
        _emit(resp.json())
    else:
        click.echo(resp.text)


if __name__ == "__main__":
    sys.exit(main())
