"""Command line: corpus stats, database management, questions, benchmarks, serving."""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from .coding import bundled_ontology_paths, load_ontology
from .config import AppConfig, ConfigError, load_config
from .dataset import bundled_corpus_path, compute_stats, load_dataset
from .embeddings import HashEmbedder
from .evaluation import render_report, run_benchmark
from .executor import Database, DbError, execute_sql, generate_synthetic_data, init_database
from .gateway import HttpChatProvider, LlmGateway, ScriptedProvider, TranscriptStore
from .pipeline import MODE_LABELS, PipelineRuntime, RunStore, answer_question, config_for_mode
from .retrieval import build_index
from .service import create_app

_config_option = click.option(
    "--config",
    "config_path",
    type=click.Path(),
    default=None,
    help="INI configuration file (falls back to $EPIQUERY_CONFIG, then defaults).",
)
_record_option = click.option(
    "--record",
    "record_dir",
    type=click.Path(),
    default=None,
    help="Record model transcripts into DIR for later replay.",
)
_replay_option = click.option(
    "--replay",
    "replay_dir",
    type=click.Path(),
    default=None,
    help="Serve model completions from recorded transcripts in DIR; misses fail.",
)


def _load_app_config(path: str | None) -> AppConfig:
    try:
        return load_config(path)
    except ConfigError as err:
        raise click.UsageError(str(err)) from err


def _build_gateway(cfg: AppConfig, record_dir: str | None, replay_dir: str | None) -> LlmGateway:
    if record_dir and replay_dir:
        raise click.UsageError("--record and --replay are mutually exclusive")
    if replay_dir:
        return LlmGateway(ScriptedProvider([]), mode="replay", store=TranscriptStore(replay_dir))
    provider = HttpChatProvider(
        url=cfg.llm.url, api_key_env=cfg.llm.api_key_env, name=cfg.llm.provider
    )
    if record_dir:
        return LlmGateway(provider, mode="record", store=TranscriptStore(record_dir))
    return LlmGateway(provider)


def _open_database(cfg: AppConfig, target: str | None) -> Database:
    chosen = target or cfg.database.target
    db = init_database(chosen)
    if chosen == ":memory:":
        generate_synthetic_data(db, seed=cfg.database.seed, scale=cfg.database.scale)
    elif db.table_counts().get("person", 0) == 0:
        raise click.UsageError(
            f"database {chosen!r} has no data; create one with: epiquery db init --target {chosen}"
        )
    return db


def _build_runtime(
    cfg: AppConfig,
    gateway: LlmGateway,
    *,
    target: str | None = None,
    runs_dir: str | None = None,
) -> PipelineRuntime:
    pairs = load_dataset(bundled_corpus_path())
    embed = HashEmbedder()
    return PipelineRuntime(
        pairs=pairs,
        index=build_index(pairs, embed),
        store=load_ontology(*bundled_ontology_paths()),
        db=_open_database(cfg, target),
        gateway=gateway,
        embed_query=embed,
        embed_concepts=embed,
        run_store=RunStore(runs_dir or cfg.paths.runs_dir),
    )


@click.group()
def main() -> None:
    """Ask natural-language questions of an OMOP-style claims database."""


@main.command()
@click.option("--corpus", type=click.Path(exists=True), default=None, help="Question corpus (default: bundled).")
def stats(corpus: str | None) -> None:
    """Print corpus statistics as JSON."""
    pairs = load_dataset(corpus or bundled_corpus_path())
    click.echo(json.dumps(compute_stats(pairs).to_dict(), indent=2, sort_keys=True))


@main.group()
def db() -> None:
    """Synthetic claims database management."""


@db.command("init")
@click.option("--target", default="claims.db", show_default=True, help="Database file to create.")
@click.option("--seed", default=1, show_default=True, type=int, help="RNG seed for the synthetic cohort.")
@click.option("--scale", default=1000, show_default=True, type=int, help="Number of persons to generate.")
@click.option("--force", is_flag=True, help="Recreate the file if it already exists.")
def db_init(target: str, seed: int, scale: int, force: bool) -> None:
    """Create and seed a synthetic claims database."""
    path = Path(target)
    if target != ":memory:" and path.exists():
        if not force:
            raise click.UsageError(f"{target} already exists; pass --force to recreate it")
        path.unlink()
    database = init_database(target)
    counts = generate_synthetic_data(database, seed=seed, scale=scale)
    click.echo(json.dumps(counts, indent=2, sort_keys=True))


@db.command("query")
@click.argument("sql")
@click.option("--target", default="claims.db", show_default=True, help="Database file to query.")
def db_query(sql: str, target: str) -> None:
    """Run one read-only SQL statement and print the result as JSON."""
    if target != ":memory:" and not Path(target).exists():
        raise click.UsageError(f"no such database: {target}")
    outcome = execute_sql(Database(target), sql)
    if isinstance(outcome, DbError):
        click.echo(json.dumps(outcome.to_dict(), indent=2, sort_keys=True), err=True)
        sys.exit(1)
    click.echo(json.dumps(outcome.to_dict(), indent=2, sort_keys=True))


@main.command()
@click.argument("question")
@click.option("--mode", default="advanced", show_default=True, help=f"One of: {', '.join(MODE_LABELS)}.")
@_config_option
@click.option("--target", default=None, help="Database file (default: from config).")
@click.option("--runs", "runs_dir", type=click.Path(), default=None, help="Trace directory (default: from config).")
@_record_option
@_replay_option
@click.option("--trace", "as_json", is_flag=True, help="Print the full run trace as JSON.")
def ask(
    question: str,
    mode: str,
    config_path: str | None,
    target: str | None,
    runs_dir: str | None,
    record_dir: str | None,
    replay_dir: str | None,
    as_json: bool,
) -> None:
    """Answer one question end to end and print the outcome."""
    cfg = _load_app_config(config_path)
    try:
        pipeline_config = config_for_mode(mode, cfg.pipeline)
    except ValueError as err:
        raise click.UsageError(str(err)) from err
    gateway = _build_gateway(cfg, record_dir, replay_dir)
    runtime = _build_runtime(cfg, gateway, target=target, runs_dir=runs_dir)
    run = answer_question(question, pipeline_config, runtime)
    if as_json:
        click.echo(json.dumps(run.to_dict(), indent=2, sort_keys=True, ensure_ascii=False))
    else:
        click.echo(f"run id:   {run.run_id}")
        click.echo(f"mode:     {pipeline_config.mode_label}")
        if run.sql_template:
            click.echo(f"template: {run.sql_template}")
        if run.final_sql:
            click.echo(f"sql:      {run.final_sql}")
        if run.answer is not None:
            click.echo(f"answer:   {run.answer}")
    if run.failed_stage is not None:
        click.echo(f"failed at {run.failed_stage}: {run.failure}", err=True)
        sys.exit(1)


@main.command()
@click.option("--modes", default="advanced", show_default=True, help="Comma-separated mode labels.")
@_config_option
@click.option("--target", default=None, help="Database file (default: from config).")
@click.option("--runs", "runs_dir", type=click.Path(), default=None, help="Trace directory (default: from config).")
@click.option("--out", type=click.Path(), default="report.md", show_default=True, help="Markdown report path; a .csv twin is written beside it.")
@click.option("--verdicts", "verdicts_dir", type=click.Path(), default=None, help="Directory for per-case verdict JSON files.")
@click.option("--limit", type=int, default=None, help="Evaluate only the first N corpus questions.")
@click.option("--parallelism", type=int, default=1, show_default=True, help="Concurrent cases per mode (file databases only).")
@_record_option
@_replay_option
def bench(
    modes: str,
    config_path: str | None,
    target: str | None,
    runs_dir: str | None,
    out: str,
    verdicts_dir: str | None,
    limit: int | None,
    parallelism: int,
    record_dir: str | None,
    replay_dir: str | None,
) -> None:
    """Benchmark one or more modes over the corpus and write Acc/Exec tables."""
    cfg = _load_app_config(config_path)
    labels = [label.strip() for label in modes.split(",") if label.strip()]
    if not labels:
        raise click.UsageError("--modes must name at least one mode")
    try:
        configs = [config_for_mode(label, cfg.pipeline) for label in labels]
    except ValueError as err:
        raise click.UsageError(str(err)) from err
    gateway = _build_gateway(cfg, record_dir, replay_dir)
    runtime = _build_runtime(cfg, gateway, target=target, runs_dir=runs_dir)
    pairs = runtime.pairs[:limit] if limit is not None else runtime.pairs
    report = run_benchmark(pairs, configs, runtime, verdicts_dir=verdicts_dir, parallelism=parallelism)
    markdown, csv_text = render_report(report)
    out_path = Path(out)
    out_path.write_text(markdown, encoding="utf-8")
    out_path.with_suffix(".csv").write_text(csv_text, encoding="utf-8")
    click.echo(markdown, nl=False)
    click.echo(f"wrote {out_path} and {out_path.with_suffix('.csv')}", err=True)


@main.command()
@_config_option
@click.option("--host", default=None, help="Bind address (default: from config).")
@click.option("--port", type=int, default=None, help="Port (default: from config).")
@click.option("--target", default=None, help="Database file (default: from config).")
@click.option("--runs", "runs_dir", type=click.Path(), default=None, help="Trace directory (default: from config).")
@click.option("--auto-approve", is_flag=True, help="Collapse both human checkpoints (unattended mode).")
@click.option("--static-dir", type=click.Path(), default=None, help="Directory of review-UI assets to serve at /.")
@_record_option
@_replay_option
def serve(
    config_path: str | None,
    host: str | None,
    port: int | None,
    target: str | None,
    runs_dir: str | None,
    auto_approve: bool,
    static_dir: str | None,
    record_dir: str | None,
    replay_dir: str | None,
) -> None:
    """Run the HTTP service (OpenAPI description at /spec)."""
    import uvicorn

    cfg = _load_app_config(config_path)
    gateway = _build_gateway(cfg, record_dir, replay_dir)
    runtime = _build_runtime(cfg, gateway, target=target, runs_dir=runs_dir)
    app = create_app(
        runtime,
        cfg.pipeline,
        auto_approve=auto_approve or cfg.service.auto_approve,
        api_token=cfg.service.api_token,
        static_dir=static_dir,
    )
    uvicorn.run(app, host=host or cfg.service.host, port=port or cfg.service.port)


if __name__ == "__main__":
    main()
