"""End-to-end question answering over the claims database.

One run walks the stages in a fixed order: entity extraction, question
masking, exemplar retrieval, SQL generation with self-repair, concept
resolution, rendering, execution, and answer articulation. Everything a
run does is written into a single JSON trace document keyed by run id, so
a reviewer can audit every prompt, completion, candidate code, and error
after the fact.

Two cost-control choices are deliberate. During the repair loop,
placeholders are resolved with their rank-1 candidate code only (no
verifier calls) because the loop merely probes executability; the full
verification pass runs once, on the final template. And a run is split
into :func:`prepare_run` (through concept resolution) and
:func:`finish_run` (rendering onward) so a human checkpoint can sit
between them; :func:`answer_question` chains both for unattended use.
"""

from __future__ import annotations

import copy
import hashlib
import json
import random
import re
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

from . import prompting
from .coding import CodingError, OntologyStore, candidate_concepts, resolve_placeholders
from .dataset import EntityMention, QuestionSqlPair
from .embeddings import EmbeddingProvider
from .executor import Database, DbError, ExecutionLimits, QueryResult, execute_sql
from .gateway import (
    GatewayError,
    LlmGateway,
    ModelConfig,
    SqlExtractionError,
    extract_sql,
)
from .grammar import (
    DomainTag,
    PlaceholderGrammarError,
    RenderError,
    SqlTemplate,
    extract_placeholders,
    render_sql,
)
from .prompting import (
    build_answer_prompt,
    build_extraction_prompt,
    build_generation_prompt,
    build_repair_prompt,
    template_version,
)
from .retrieval import RetrievalError, RetrievalIndex, mask_question, top_k

__all__ = [
    "PROMPT_MODES",
    "RAG_MODES",
    "MODE_LABELS",
    "PipelineError",
    "PipelineConfig",
    "config_for_mode",
    "ExtractionResult",
    "RepairAttempt",
    "GenerationResult",
    "PipelineRun",
    "RunStore",
    "PipelineRuntime",
    "schema_summary",
    "derive_run_id",
    "extract_entities",
    "generate_sql_with_repair",
    "rank1_resolution",
    "prepare_run",
    "finish_run",
    "answer_question",
]

PROMPT_MODES = ("simple", "advanced")
RAG_MODES = ("none", "random1", "topk", "oracle")

# Benchmark row labels, in the order reports print them.
MODE_LABELS = (
    "simple",
    "advanced",
    "rag-top1",
    "rag-top2",
    "rag-top5",
    "rag-random1",
    "oracle",
)

_RUN_ID_RE = re.compile(r"^[A-Za-z0-9_-]{1,64}$")
_TOPK_LABEL_RE = re.compile(r"^rag-top(\d+)$")


class PipelineError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# configuration


@dataclass(frozen=True)
class PipelineConfig:
    """Everything that shapes a run, minus the shared services.

    ``rag`` selects how exemplars are chosen: "none" (zero-shot),
    "random1" (one uniform pick, seeded), "topk" (k nearest masked
    questions), or "oracle" (the evaluated question's own reference SQL).
    """

    prompt_mode: str = "advanced"
    rag: str = "none"
    k: int = 1
    max_repair_attempts: int = 3
    tolerance: float = 0.10
    coding_n: int = 50
    seed: int = 0
    generator: ModelConfig = field(default_factory=ModelConfig)
    verifier: ModelConfig = field(default_factory=ModelConfig)

    def __post_init__(self) -> None:
        if self.prompt_mode not in PROMPT_MODES:
            raise ValueError(f"unknown prompt mode: {self.prompt_mode!r}")
        if self.rag not in RAG_MODES:
            raise ValueError(f"unknown rag mode: {self.rag!r}")
        if self.rag == "topk" and self.k < 1:
            raise ValueError("k must be >= 1 when rag mode is topk")
        if self.tolerance < 0:
            raise ValueError("tolerance must be >= 0")
        if self.max_repair_attempts < 0:
            raise ValueError("max_repair_attempts must be >= 0")
        if self.coding_n < 1:
            raise ValueError("coding_n must be >= 1")

    @property
    def mode_label(self) -> str:
        """Report row label; round-trips with :func:`config_for_mode`."""
        if self.rag == "none":
            return self.prompt_mode
        if self.rag == "topk":
            return f"rag-top{self.k}"
        if self.rag == "random1":
            return "rag-random1"
        return "oracle"

    def to_dict(self) -> dict:
        return {
            "prompt_mode": self.prompt_mode,
            "rag": self.rag,
            "k": self.k,
            "max_repair_attempts": self.max_repair_attempts,
            "tolerance": self.tolerance,
            "coding_n": self.coding_n,
            "seed": self.seed,
            "generator": _model_dict(self.generator),
            "verifier": _model_dict(self.verifier),
            "mode_label": self.mode_label,
        }


def _model_dict(config: ModelConfig) -> dict:
    return {
        "provider": config.provider,
        "model": config.model,
        "temperature": config.temperature,
        "max_output_tokens": config.max_output_tokens,
        "request_timeout": config.request_timeout,
        "max_retries": config.max_retries,
    }


def config_for_mode(label: str, base: PipelineConfig | None = None) -> PipelineConfig:
    """Translate a benchmark row label into a config.

    "simple" and "advanced" are zero-shot prompt tiers; every retrieval
    variant uses the advanced prompt. Unrecognized labels raise.
    """
    base = base if base is not None else PipelineConfig()
    common = {
        "max_repair_attempts": base.max_repair_attempts,
        "tolerance": base.tolerance,
        "coding_n": base.coding_n,
        "seed": base.seed,
        "generator": base.generator,
        "verifier": base.verifier,
    }
    if label in ("simple", "advanced"):
        return PipelineConfig(prompt_mode=label, rag="none", **common)
    if label == "rag-random1":
        return PipelineConfig(prompt_mode="advanced", rag="random1", **common)
    if label in ("oracle", "rag-top1-oracle"):
        return PipelineConfig(prompt_mode="advanced", rag="oracle", **common)
    match = _TOPK_LABEL_RE.match(label)
    if match and int(match.group(1)) >= 1:
        return PipelineConfig(
            prompt_mode="advanced", rag="topk", k=int(match.group(1)), **common
        )
    raise ValueError(f"unknown mode label: {label!r}")


# ---------------------------------------------------------------------------
# run trace

_STAGE_ORDER = (
    "extract_entities",
    "mask_question",
    "retrieve",
    "generate_sql",
    "resolve_codes",
    "render_sql",
    "execute",
    "answer",
)

# Fields dropped before hashing: wall-clock noise, never substance.
_VOLATILE_FIELDS = ("timings",)


@dataclass
class PipelineRun:
    """The full audit trace of one run; serialized as a JSON document.

    Stage fields are append-only: a later stage never rewrites what an
    earlier one recorded (code overrides, for example, live in their own
    ``overrides`` field rather than editing ``resolutions``).
    """

    run_id: str
    question: str
    config: dict
    template_version: str
    entities: list[dict] = field(default_factory=list)
    extraction_failed: bool = False
    masked_question: str | None = None
    retrieval_hits: list[dict] = field(default_factory=list)
    exemplars: list[list[str]] = field(default_factory=list)
    exchanges: list[dict] = field(default_factory=list)
    sql_template: str | None = None
    repair_attempts: list[dict] = field(default_factory=list)
    repairs_used: int = 0
    resolutions: list[dict] = field(default_factory=list)
    overrides: dict[str, list[int]] = field(default_factory=dict)
    final_sql: str | None = None
    result: dict | None = None
    db_error: dict | None = None
    answer: str | None = None
    stages: list[str] = field(default_factory=list)
    failed_stage: str | None = None
    failure_kind: str | None = None
    failure: str | None = None
    timings: dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "run_id": self.run_id,
            "question": self.question,
            "config": self.config,
            "template_version": self.template_version,
            "entities": self.entities,
            "extraction_failed": self.extraction_failed,
            "masked_question": self.masked_question,
            "retrieval_hits": self.retrieval_hits,
            "exemplars": self.exemplars,
            "exchanges": self.exchanges,
            "sql_template": self.sql_template,
            "repair_attempts": self.repair_attempts,
            "repairs_used": self.repairs_used,
            "resolutions": self.resolutions,
            "overrides": self.overrides,
            "final_sql": self.final_sql,
            "result": self.result,
            "db_error": self.db_error,
            "answer": self.answer,
            "stages": self.stages,
            "failed_stage": self.failed_stage,
            "failure_kind": self.failure_kind,
            "failure": self.failure,
            "timings": self.timings,
        }

    @classmethod
    def from_dict(cls, doc: Mapping) -> "PipelineRun":
        known = {f for f in cls.__dataclass_fields__}
        kwargs = {k: copy.deepcopy(v) for k, v in doc.items() if k in known}
        missing = {"run_id", "question", "config", "template_version"} - set(kwargs)
        if missing:
            raise PipelineError(f"trace document missing fields: {sorted(missing)}")
        return cls(**kwargs)

    def trace_hash(self) -> str:
        """Content fingerprint, stable across replays of the same run."""
        doc = self.to_dict()
        for volatile in _VOLATILE_FIELDS:
            doc.pop(volatile, None)
        if doc.get("result") is not None:
            doc["result"] = {
                k: v for k, v in doc["result"].items() if k != "elapsed"
            }
        canonical = json.dumps(
            doc, sort_keys=True, separators=(",", ":"), ensure_ascii=False
        )
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()

    def query_result(self) -> QueryResult | None:
        if self.result is None:
            return None
        return QueryResult(
            columns=tuple(self.result["columns"]),
            rows=tuple(tuple(row) for row in self.result["rows"]),
            row_count=self.result["row_count"],
            elapsed=self.result.get("elapsed", 0.0),
            truncated=self.result.get("truncated", False),
        )

    def effective_resolution(self) -> dict[tuple[str, str], tuple[int, ...]]:
        """Accepted ids per placeholder key, with overrides applied."""
        mapping: dict[tuple[str, str], tuple[int, ...]] = {}
        for record in self.resolutions:
            key = (record["domain"], record["mention"])
            ids = self.overrides.get(record["placeholder"], record["accepted_ids"])
            mapping[key] = tuple(int(i) for i in ids)
        return mapping

    def _mark_stage(self, name: str, started: float) -> None:
        if name not in self.stages:
            self.stages.append(name)
        self.timings[name] = round(time.monotonic() - started, 6)

    def _fail(self, stage: str, kind: str, message: str, started: float) -> None:
        # timing is recorded, but only completed stages enter `stages`
        self.timings[stage] = round(time.monotonic() - started, 6)
        self.failed_stage = stage
        self.failure_kind = kind
        self.failure = message


def derive_run_id(question: str, config: PipelineConfig) -> str:
    """Deterministic id: same question, config, and templates → same run."""
    payload = json.dumps(
        {"question": question, "config": config.to_dict(), "templates": template_version()},
        sort_keys=True,
        separators=(",", ":"),
        ensure_ascii=False,
    )
    return "r" + hashlib.sha256(payload.encode("utf-8")).hexdigest()[:16]


class RunStore:
    """Directory of trace documents, one ``<run_id>.json`` file per run."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    def path(self, run_id: str) -> Path:
        if not _RUN_ID_RE.match(run_id):
            raise PipelineError(f"invalid run id: {run_id!r}")
        return self.root / f"{run_id}.json"

    def save(self, run: PipelineRun) -> Path:
        target = self.path(run.run_id)
        tmp = target.with_suffix(".json.tmp")
        tmp.write_text(
            json.dumps(run.to_dict(), indent=2, sort_keys=True, ensure_ascii=False)
            + "\n",
            encoding="utf-8",
        )
        tmp.replace(target)
        return target

    def load(self, run_id: str) -> PipelineRun:
        target = self.path(run_id)
        if not target.exists():
            raise KeyError(run_id)
        return PipelineRun.from_dict(json.loads(target.read_text(encoding="utf-8")))

    def ids(self) -> list[str]:
        return sorted(p.stem for p in self.root.glob("*.json"))


# ---------------------------------------------------------------------------
# shared services


def schema_summary(db: Database) -> str:
    """One line per table: ``name(col, col, ...)``, in schema order."""
    lines = []
    for table in db.table_names():
        rows = db._conn.execute(f"PRAGMA table_info({table})").fetchall()
        columns = ", ".join(r[1] for r in rows)
        lines.append(f"{table}({columns})")
    return "\n".join(lines)


@dataclass
class PipelineRuntime:
    """The long-lived services every run shares.

    ``embed_query`` must be the provider the retrieval index was built
    with; ``embed_concepts`` must match the ontology store's vectors.
    """

    pairs: tuple[QuestionSqlPair, ...]
    index: RetrievalIndex
    store: OntologyStore
    db: Database
    gateway: LlmGateway
    embed_query: EmbeddingProvider
    embed_concepts: EmbeddingProvider
    run_store: RunStore | None = None
    limits: ExecutionLimits = field(default_factory=ExecutionLimits)
    schema: str = ""

    def __post_init__(self) -> None:
        if not self.schema:
            self.schema = schema_summary(self.db)
        self._by_id = {p.id: p for p in self.pairs}
        self._by_question = {p.question: p for p in self.pairs}

    def pair_by_id(self, pair_id: str) -> QuestionSqlPair:
        return self._by_id[pair_id]

    def pair_for_question(self, question: str) -> QuestionSqlPair | None:
        return self._by_question.get(question)


class _TracingGateway:
    """Wraps the gateway so every exchange lands in the run trace."""

    def __init__(self, inner: LlmGateway, run: PipelineRun, stage: str):
        self._inner = inner
        self._run = run
        self.stage = stage

    def complete(self, prompt, config):
        completion = self._inner.complete(prompt, config)
        self._run.exchanges.append(
            {
                "stage": self.stage,
                "prompt": prompt.rendered(),
                "completion": completion.text,
            }
        )
        return completion


# ---------------------------------------------------------------------------
# stage operations


@dataclass(frozen=True)
class ExtractionResult:
    """Entities pulled from a question, or the flag saying parsing failed."""

    entities: tuple[tuple[str, DomainTag], ...]
    unparseable: bool
    raw: str


def _parse_extraction(raw: str) -> tuple[tuple[str, DomainTag], ...] | None:
    """Strict-JSON entity list, or None when the answer has no usable array."""
    start, end = raw.find("["), raw.rfind("]")
    if start < 0 or end <= start:
        return None
    try:
        decoded = json.loads(raw[start : end + 1])
    except json.JSONDecodeError:
        return None
    if not isinstance(decoded, list):
        return None
    entities: list[tuple[str, DomainTag]] = []
    seen: set[tuple[str, str]] = set()
    for item in decoded:
        if not isinstance(item, dict):
            return None
        mention = item.get("mention")
        domain_text = item.get("domain")
        if not isinstance(mention, str) or not mention.strip():
            return None
        if not isinstance(domain_text, str):
            return None
        try:
            domain = DomainTag.parse(domain_text.strip())
        except ValueError:
            return None
        mention = mention.strip()
        key = (mention.lower(), domain.value)
        if key in seen:
            continue
        seen.add(key)
        entities.append((mention, domain))
    return tuple(entities)


def extract_entities(
    question: str,
    gateway: LlmGateway,
    config: ModelConfig | None = None,
) -> ExtractionResult:
    """Ask the model which medical entities the question mentions.

    Duplicates are collapsed case-insensitively. An unparseable answer
    yields an empty list with ``unparseable`` set; the pipeline then
    proceeds on the unmasked question. Gateway errors propagate.
    """
    config = config if config is not None else ModelConfig()
    prompt = build_extraction_prompt(question)
    completion = gateway.complete(prompt, config)
    parsed = _parse_extraction(completion.text)
    if parsed is None:
        return ExtractionResult(entities=(), unparseable=True, raw=completion.text)
    return ExtractionResult(entities=parsed, unparseable=False, raw=completion.text)


@dataclass(frozen=True)
class RepairAttempt:
    sql: str
    error: DbError


@dataclass(frozen=True)
class GenerationResult:
    """Outcome of the generate-probe-repair loop; never an exception.

    ``repairs_used`` counts repair prompts actually issued. A first-shot
    success is 0 repairs; a run that exhausts the budget reports
    ``executable=False`` with the last probe's error.
    """

    template: SqlTemplate | None
    sql_text: str
    repairs_used: int
    executable: bool
    error: DbError | None
    attempts: tuple[RepairAttempt, ...]


def rank1_resolution(
    template: SqlTemplate,
    store: OntologyStore,
    embed: EmbeddingProvider,
) -> dict[tuple[str, str], tuple[int, ...]]:
    """Rank-1 code per placeholder: no verifier calls, one id each.

    Used for executability probing and for resolving reference templates,
    whose mentions equal concept preferred terms exactly.
    """
    resolution: dict[tuple[str, str], tuple[int, ...]] = {}
    for placeholder in template.placeholders:
        if placeholder.key in resolution:
            continue
        ranked = candidate_concepts(
            placeholder.mention, placeholder.domain, store, 1, embed=embed
        )
        resolution[placeholder.key] = (ranked[0][0].concept_id,)
    return resolution


def _probe(
    sql_text: str,
    db: Database,
    store: OntologyStore,
    embed: EmbeddingProvider,
    limits: ExecutionLimits,
) -> tuple[SqlTemplate | None, DbError | None]:
    """Parse, rank-1 resolve, render, and execute one candidate query."""
    try:
        template = extract_placeholders(sql_text)
    except PlaceholderGrammarError as err:
        return None, DbError(category="other", message=f"placeholder grammar: {err}")
    try:
        resolution = rank1_resolution(template, store, embed)
        probe_sql = render_sql(template, resolution)
    except (CodingError, RenderError, ValueError) as err:
        return template, DbError(category="other", message=str(err))
    outcome = execute_sql(db, probe_sql, limits)
    if isinstance(outcome, DbError):
        return template, outcome
    return template, None


def generate_sql_with_repair(
    question: str,
    exemplars: Sequence[tuple[str, str]],
    config: PipelineConfig,
    gateway: LlmGateway,
    db: Database,
    store: OntologyStore,
    embed_concepts: EmbeddingProvider,
    schema: str,
    limits: ExecutionLimits | None = None,
) -> GenerationResult:
    """Generate SQL, probing executability and repairing on error.

    Each failed probe feeds the engine's error text back through a repair
    prompt, up to ``config.max_repair_attempts`` times. Gateway failures
    propagate (they abort the run); a persistently broken query does not.
    """
    limits = limits if limits is not None else ExecutionLimits()
    prompt = build_generation_prompt(question, config.prompt_mode, exemplars, schema)
    completion = gateway.complete(prompt, config.generator)
    attempts: list[RepairAttempt] = []
    repairs = 0
    while True:
        try:
            sql_text, _how = extract_sql(completion.text)
            parse_error = None
        except SqlExtractionError as err:
            sql_text = completion.text
            parse_error = DbError(category="other", message=str(err))
        if parse_error is None:
            template, error = _probe(sql_text, db, store, embed_concepts, limits)
        else:
            template, error = None, parse_error
        if error is None:
            assert template is not None
            return GenerationResult(
                template=template,
                sql_text=sql_text,
                repairs_used=repairs,
                executable=True,
                error=None,
                attempts=tuple(attempts),
            )
        attempts.append(RepairAttempt(sql=sql_text, error=error))
        if repairs >= config.max_repair_attempts:
            return GenerationResult(
                template=template,
                sql_text=sql_text,
                repairs_used=repairs,
                executable=False,
                error=error,
                attempts=tuple(attempts),
            )
        repairs += 1
        repair_prompt = build_repair_prompt(
            question,
            sql_text,
            error.message,
            min(repairs, prompting.MAX_REPAIR_ATTEMPTS),
        )
        completion = gateway.complete(repair_prompt, config.generator)


# ---------------------------------------------------------------------------
# the run itself


def _select_exemplars(
    run: PipelineRun,
    config: PipelineConfig,
    runtime: PipelineRuntime,
    exclude_groups: frozenset[str],
) -> list[tuple[str, str]]:
    """Fill the run's retrieval fields and return (question, sql) exemplars."""
    if config.rag == "none":
        return []
    if config.rag == "oracle":
        pair = runtime.pair_for_question(run.question)
        if pair is None:
            raise RetrievalError(
                "oracle retrieval needs the evaluated question in the dataset"
            )
        run.retrieval_hits.append({"pair_id": pair.id, "score": None})
        return [(pair.question, pair.sql_template)]
    if config.rag == "random1":
        eligible = [
            p for p in runtime.pairs if p.paraphrase_group not in exclude_groups
        ]
        if not eligible:
            raise RetrievalError("no exemplars left after paraphrase-group exclusion")
        rng = random.Random(f"{config.seed}\x00{run.question}")
        pair = eligible[rng.randrange(len(eligible))]
        run.retrieval_hits.append({"pair_id": pair.id, "score": None})
        return [(pair.question, pair.sql_template)]
    hits = top_k(
        runtime.index,
        run.masked_question if run.masked_question is not None else run.question,
        config.k,
        runtime.embed_query,
        exclude_groups=exclude_groups,
    )
    exemplars = []
    for hit in hits:
        pair = runtime.pair_by_id(hit.pair_id)
        run.retrieval_hits.append(
            {"pair_id": hit.pair_id, "score": round(hit.score, 8)}
        )
        exemplars.append((pair.question, pair.sql_template))
    return exemplars


def _persist(run: PipelineRun, runtime: PipelineRuntime) -> None:
    if runtime.run_store is not None:
        runtime.run_store.save(run)


def prepare_run(
    question: str,
    config: PipelineConfig,
    runtime: PipelineRuntime,
    *,
    run_id: str | None = None,
    exclude_groups: frozenset[str] = frozenset(),
) -> PipelineRun:
    """Run every stage up to and including full concept resolution.

    Failures do not raise: the returned trace carries ``failed_stage``,
    ``failure_kind``, and the message, with everything before the failure
    intact. The trace is persisted before returning either way.
    """
    run = PipelineRun(
        run_id=run_id if run_id is not None else derive_run_id(question, config),
        question=question,
        config=config.to_dict(),
        template_version=template_version(),
    )

    # extract_entities
    started = time.monotonic()
    tracing = _TracingGateway(runtime.gateway, run, "extract_entities")
    try:
        extraction = extract_entities(question, tracing, config.generator)
    except GatewayError as err:
        run._fail("extract_entities", "gateway", str(err), started)
        _persist(run, runtime)
        return run
    run.entities = [
        {"mention": mention, "domain": domain.value}
        for mention, domain in extraction.entities
    ]
    run.extraction_failed = extraction.unparseable
    run._mark_stage("extract_entities", started)

    # mask_question
    started = time.monotonic()
    mentions = [
        EntityMention(mention=e["mention"], domain=DomainTag.parse(e["domain"]))
        for e in run.entities
    ]
    run.masked_question = mask_question(question, mentions) if mentions else question
    run._mark_stage("mask_question", started)

    # retrieve
    started = time.monotonic()
    try:
        exemplars = _select_exemplars(run, config, runtime, exclude_groups)
    except RetrievalError as err:
        run._fail("retrieve", "retrieval", str(err), started)
        _persist(run, runtime)
        return run
    run.exemplars = [[q, s] for q, s in exemplars]
    run._mark_stage("retrieve", started)

    # generate_sql (with executability probing and repair)
    started = time.monotonic()
    tracing.stage = "generate_sql"
    try:
        generation = generate_sql_with_repair(
            question,
            exemplars,
            config,
            tracing,
            runtime.db,
            runtime.store,
            runtime.embed_concepts,
            runtime.schema,
            runtime.limits,
        )
    except GatewayError as err:
        run._fail("generate_sql", "gateway", str(err), started)
        _persist(run, runtime)
        return run
    run.sql_template = generation.sql_text
    run.repairs_used = generation.repairs_used
    run.repair_attempts = [
        {
            "sql": attempt.sql,
            "error_category": attempt.error.category,
            "error_message": attempt.error.message,
        }
        for attempt in generation.attempts
    ]
    if not generation.executable:
        assert generation.error is not None
        run.db_error = generation.error.to_dict()
        run._fail("generate_sql", "sql", generation.error.message, started)
        _persist(run, runtime)
        return run
    run._mark_stage("generate_sql", started)

    # resolve_codes (full verification, one pass over the final template)
    started = time.monotonic()
    tracing.stage = "resolve_codes"
    assert generation.template is not None
    try:
        resolved = resolve_placeholders(
            generation.template,
            runtime.store,
            tracing,
            config.verifier,
            embed=runtime.embed_concepts,
            n=config.coding_n,
        )
    except GatewayError as err:
        run._fail("resolve_codes", "gateway", str(err), started)
        _persist(run, runtime)
        return run
    except CodingError as err:
        run._fail("resolve_codes", "coding", str(err), started)
        _persist(run, runtime)
        return run
    for key in sorted(resolved):
        concept_set = resolved[key]
        record = {"domain": key[0], "mention": key[1]}
        record.update(concept_set.to_dict())
        run.resolutions.append(record)
    run._mark_stage("resolve_codes", started)

    _persist(run, runtime)
    return run


def finish_run(run: PipelineRun, runtime: PipelineRuntime) -> PipelineRun:
    """Render, execute, and articulate the answer for a prepared run.

    Respects ``run.overrides`` when mapping placeholders to ids. A
    terminal DbError leaves the run with no answer text, per the trace
    contract. The trace is persisted before returning.
    """
    if run.failed_stage is not None:
        return run
    if run.sql_template is None:
        raise PipelineError("run has no SQL template; call prepare_run first")

    # render_sql
    started = time.monotonic()
    try:
        template = extract_placeholders(run.sql_template)
        run.final_sql = render_sql(template, run.effective_resolution())
    except (PlaceholderGrammarError, RenderError) as err:
        run._fail("render_sql", "render", str(err), started)
        _persist(run, runtime)
        return run
    run._mark_stage("render_sql", started)

    # execute
    started = time.monotonic()
    outcome = execute_sql(runtime.db, run.final_sql, runtime.limits)
    if isinstance(outcome, DbError):
        run.db_error = outcome.to_dict()
        run._fail("execute", "db", outcome.message, started)
        _persist(run, runtime)
        return run
    run.result = outcome.to_dict()
    run._mark_stage("execute", started)

    # answer
    started = time.monotonic()
    tracing = _TracingGateway(runtime.gateway, run, "answer")
    prompt = build_answer_prompt(run.question, outcome)
    generator = ModelConfig(**run.config["generator"])
    try:
        completion = tracing.complete(prompt, generator)
    except GatewayError as err:
        run._fail("answer", "gateway", str(err), started)
        _persist(run, runtime)
        return run
    run.answer = completion.text
    run._mark_stage("answer", started)

    _persist(run, runtime)
    return run


def answer_question(
    question: str,
    config: PipelineConfig,
    runtime: PipelineRuntime,
    *,
    run_id: str | None = None,
    exclude_groups: frozenset[str] = frozenset(),
) -> PipelineRun:
    """One unattended run, end to end; returns the persisted trace."""
    run = prepare_run(
        question, config, runtime, run_id=run_id, exclude_groups=exclude_groups
    )
    if run.failed_stage is not None:
        return run
    return finish_run(run, runtime)
