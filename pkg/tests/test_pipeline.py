"""Pipeline orchestration: staging, repair loop, traces, determinism."""

import json

import pytest

from epiquery import pipeline
from epiquery.coding import bundled_ontology_paths, load_ontology
from epiquery.dataset import bundled_corpus_path, load_dataset
from epiquery.embeddings import HashEmbedder
from epiquery.executor import init_database, generate_synthetic_data
from epiquery.gateway import LlmGateway, ModelConfig, RateLimitError, ScriptedProvider, TransientProviderError
from epiquery.grammar import DomainTag
from epiquery.pipeline import (
    GenerationResult,
    PipelineConfig,
    PipelineError,
    PipelineRun,
    PipelineRuntime,
    RunStore,
    answer_question,
    config_for_mode,
    derive_run_id,
    extract_entities,
    finish_run,
    generate_sql_with_repair,
    prepare_run,
    schema_summary,
)

GOOD_SQL = (
    "```sql\n"
    "SELECT COUNT(DISTINCT co.person_id) AS patient_count\n"
    "FROM condition_occurrence co\n"
    "WHERE co.condition_concept_id IN [condition@dysphagia]\n"
    "```"
)
BROKEN_SQL = "```sql\nSELECT nope FROM nowhere\n```"
EXTRACTION = json.dumps([{"mention": "dysphagia", "domain": "condition"}])
QUESTION = "How many patients have dysphagia?"


@pytest.fixture(scope="module")
def services():
    pairs = load_dataset(bundled_corpus_path())[:12]
    embed = HashEmbedder()
    from epiquery.retrieval import build_index

    db = init_database(":memory:")
    generate_synthetic_data(db, seed=1, scale=200)
    return {
        "pairs": pairs,
        "embed": embed,
        "index": build_index(pairs, embed),
        "store": load_ontology(*bundled_ontology_paths()),
        "db": db,
        "schema": schema_summary(db),
    }


def make_runtime(services, script, run_store=None):
    return PipelineRuntime(
        pairs=services["pairs"],
        index=services["index"],
        store=services["store"],
        db=services["db"],
        gateway=LlmGateway(ScriptedProvider(script)),
        embed_query=services["embed"],
        embed_concepts=services["embed"],
        run_store=run_store,
        schema=services["schema"],
    )


# -- configuration -----------------------------------------------------------


def test_config_defaults():
    cfg = PipelineConfig()
    assert cfg.max_repair_attempts == 3
    assert cfg.tolerance == pytest.approx(0.10)
    assert cfg.coding_n == 50


@pytest.mark.parametrize(
    "kwargs",
    [
        {"prompt_mode": "fancy"},
        {"rag": "bm25"},
        {"rag": "topk", "k": 0},
        {"tolerance": -0.1},
        {"max_repair_attempts": -1},
        {"coding_n": 0},
    ],
)
def test_config_invariants(kwargs):
    with pytest.raises(ValueError):
        PipelineConfig(**kwargs)


@pytest.mark.parametrize("label", pipeline.MODE_LABELS)
def test_mode_label_round_trip(label):
    assert config_for_mode(label).mode_label == label


def test_config_for_mode_details():
    assert config_for_mode("simple").prompt_mode == "simple"
    assert config_for_mode("rag-top5").k == 5
    assert config_for_mode("rag-top1-oracle").rag == "oracle"
    with pytest.raises(ValueError):
        config_for_mode("rag-top0")
    with pytest.raises(ValueError):
        config_for_mode("zero-shot")


def test_config_snapshot_carries_models():
    cfg = PipelineConfig(generator=ModelConfig(model="gen-x"), verifier=ModelConfig(model="ver-y"))
    snap = cfg.to_dict()
    assert snap["generator"]["model"] == "gen-x"
    assert snap["verifier"]["model"] == "ver-y"
    assert snap["mode_label"] == "advanced"


# -- entity extraction -------------------------------------------------------


def test_extract_entities_parses_list():
    gw = LlmGateway(ScriptedProvider([EXTRACTION]))
    out = extract_entities(QUESTION, gw)
    assert out.entities == (("dysphagia", DomainTag.CONDITION),)
    assert not out.unparseable


def test_extract_entities_empty_list_is_not_failure():
    gw = LlmGateway(ScriptedProvider(["[]"]))
    out = extract_entities("How many patients are there?", gw)
    assert out.entities == ()
    assert not out.unparseable


def test_extract_entities_dedups_case_insensitively():
    answer = json.dumps(
        [
            {"mention": "Metformin", "domain": "drug"},
            {"mention": "metformin", "domain": "Drug"},
            {"mention": "metformin", "domain": "condition"},
        ]
    )
    gw = LlmGateway(ScriptedProvider([answer]))
    out = extract_entities("metformin?", gw)
    assert out.entities == (
        ("Metformin", DomainTag.DRUG),
        ("metformin", DomainTag.CONDITION),
    )


def test_extract_entities_tolerates_prose_around_array():
    gw = LlmGateway(ScriptedProvider(["Sure, here you go: " + EXTRACTION + " done."]))
    out = extract_entities(QUESTION, gw)
    assert out.entities == (("dysphagia", DomainTag.CONDITION),)


@pytest.mark.parametrize(
    "raw",
    [
        "no json here",
        "[1, 2, 3]",
        '[{"mention": "", "domain": "drug"}]',
        '[{"mention": "x", "domain": "galaxy"}]',
        '[{"mention": "x"}]',
        "[{broken",
    ],
)
def test_extract_entities_unparseable_flags(raw):
    gw = LlmGateway(ScriptedProvider([raw]))
    out = extract_entities(QUESTION, gw)
    assert out.entities == ()
    assert out.unparseable


def test_extract_entities_gateway_error_propagates():
    gw = LlmGateway(ScriptedProvider([TransientProviderError("rate-limit", "slow down")]))
    with pytest.raises(RateLimitError):
        extract_entities(QUESTION, gw, ModelConfig(max_retries=0))


# -- generation with repair --------------------------------------------------


def run_generation(services, script, max_repairs=3):
    gw = LlmGateway(ScriptedProvider(script))
    cfg = PipelineConfig(max_repair_attempts=max_repairs)
    return generate_sql_with_repair(
        QUESTION,
        [],
        cfg,
        gw,
        services["db"],
        services["store"],
        services["embed"],
        services["schema"],
    )


def test_generation_first_shot_success(services):
    out = run_generation(services, [GOOD_SQL])
    assert isinstance(out, GenerationResult)
    assert out.executable
    assert out.repairs_used == 0
    assert out.attempts == ()
    assert out.template is not None
    assert out.template.placeholders[0].mention == "dysphagia"


def test_generation_two_failures_then_success(services):
    out = run_generation(services, [BROKEN_SQL, BROKEN_SQL, GOOD_SQL])
    assert out.executable
    assert out.repairs_used == 2
    assert len(out.attempts) == 2
    assert all(a.error.category == "missing-object" for a in out.attempts)


def test_generation_exhausts_repair_budget(services):
    out = run_generation(services, [BROKEN_SQL] * 4)
    assert not out.executable
    assert out.repairs_used == 3
    assert len(out.attempts) == 4
    assert out.error is not None
    assert out.error.category == "missing-object"


def test_generation_zero_budget_means_no_repairs(services):
    out = run_generation(services, [BROKEN_SQL], max_repairs=0)
    assert not out.executable
    assert out.repairs_used == 0
    assert len(out.attempts) == 1


def test_generation_unfenced_completion_feeds_repair(services):
    out = run_generation(services, ["I cannot write SQL today.", GOOD_SQL])
    assert out.executable
    assert out.repairs_used == 1


def test_generation_gateway_error_aborts(services):
    gw = LlmGateway(ScriptedProvider([TransientProviderError("rate-limit", "nope")]))
    with pytest.raises(RateLimitError):
        generate_sql_with_repair(
            QUESTION,
            [],
            PipelineConfig(generator=ModelConfig(max_retries=0)),
            gw,
            services["db"],
            services["store"],
            services["embed"],
            services["schema"],
        )


# -- full runs ----------------------------------------------------------------


def full_script():
    return [EXTRACTION, GOOD_SQL, "1", "There are some patients."]


def test_answer_question_full_trace(services, tmp_path):
    runtime = make_runtime(services, full_script(), RunStore(tmp_path))
    run = answer_question(QUESTION, PipelineConfig(), runtime)
    assert run.failed_stage is None
    assert run.stages == list(pipeline._STAGE_ORDER)
    assert run.masked_question == "How many patients have <CONDITION>?"
    assert run.final_sql is not None
    assert "[condition@" not in run.final_sql
    assert "@" not in run.final_sql
    assert run.result is not None and run.result["row_count"] == 1
    assert run.answer == "There are some patients."
    assert (tmp_path / f"{run.run_id}.json").exists()


def test_run_trace_is_deterministic(services, tmp_path):
    cfg = PipelineConfig(rag="topk", k=1)
    hashes = []
    for _ in range(2):
        runtime = make_runtime(services, full_script(), RunStore(tmp_path))
        hashes.append(answer_question(QUESTION, cfg, runtime).trace_hash())
    assert hashes[0] == hashes[1]


def test_rag_none_vs_top1_share_early_stages(services):
    run_none = answer_question(
        QUESTION, PipelineConfig(rag="none"), make_runtime(services, full_script())
    )
    run_top1 = answer_question(
        QUESTION, PipelineConfig(rag="topk", k=1), make_runtime(services, full_script())
    )
    assert run_none.entities == run_top1.entities
    assert run_none.masked_question == run_top1.masked_question
    assert run_none.exchanges[0] == run_top1.exchanges[0]
    assert run_none.retrieval_hits == []
    assert len(run_top1.retrieval_hits) == 1
    assert run_none.exchanges[1] != run_top1.exchanges[1]


def test_oracle_mode_uses_reference_sql(services):
    pair = services["pairs"][0]
    script = ["[]", GOOD_SQL, "1", "ok"]
    runtime = make_runtime(services, script)
    run = answer_question(pair.question, PipelineConfig(rag="oracle"), runtime)
    assert run.exemplars == [[pair.question, pair.sql_template]]
    assert run.retrieval_hits == [{"pair_id": pair.id, "score": None}]
    assert pair.sql_template in run.exchanges[1]["prompt"]


def test_oracle_mode_needs_dataset_question(services):
    runtime = make_runtime(services, ["[]"])
    run = answer_question("What is the meaning of life?", PipelineConfig(rag="oracle"), runtime)
    assert run.failed_stage == "retrieve"
    assert run.failure_kind == "retrieval"
    assert run.sql_template is None


def test_random1_is_seeded_and_respects_exclusion(services):
    picks = []
    for _ in range(2):
        runtime = make_runtime(services, full_script())
        run = answer_question(QUESTION, PipelineConfig(rag="random1", seed=7), runtime)
        picks.append(run.retrieval_hits[0]["pair_id"])
    assert picks[0] == picks[1]

    picked_group = next(
        p.paraphrase_group for p in services["pairs"] if p.id == picks[0]
    )
    runtime = make_runtime(services, full_script())
    run = answer_question(
        QUESTION,
        PipelineConfig(rag="random1", seed=7),
        runtime,
        exclude_groups=frozenset({picked_group}),
    )
    chosen = next(p for p in services["pairs"] if p.id == run.retrieval_hits[0]["pair_id"])
    assert chosen.paraphrase_group != picked_group


def test_unparseable_extraction_proceeds_unmasked(services):
    script = ["gibberish", GOOD_SQL, "1", "fine"]
    runtime = make_runtime(services, script)
    run = answer_question(QUESTION, PipelineConfig(), runtime)
    assert run.extraction_failed
    assert run.entities == []
    assert run.masked_question == QUESTION
    assert run.failed_stage is None
    assert run.answer == "fine"


def test_non_executable_run_has_no_answer(services, tmp_path):
    script = [EXTRACTION] + [BROKEN_SQL] * 4
    runtime = make_runtime(services, script, RunStore(tmp_path))
    run = answer_question(QUESTION, PipelineConfig(), runtime)
    assert run.failed_stage == "generate_sql"
    assert run.failure_kind == "sql"
    assert run.db_error is not None
    assert run.answer is None
    assert run.result is None
    assert run.repairs_used == 3
    # partial trace persisted with earlier stages intact
    stored = RunStore(tmp_path).load(run.run_id)
    assert stored.entities == run.entities
    assert stored.failed_stage == "generate_sql"


def test_gateway_failure_recorded_as_stage_failure(services):
    gw_script = [TransientProviderError("timeout", "slow")]
    runtime = make_runtime(services, gw_script)
    cfg = PipelineConfig(generator=ModelConfig(max_retries=0))
    run = answer_question(QUESTION, cfg, runtime)
    assert run.failed_stage == "extract_entities"
    assert run.failure_kind == "gateway"


def test_prepare_then_finish_with_override(services):
    runtime = make_runtime(services, full_script())
    run = prepare_run(QUESTION, PipelineConfig(), runtime)
    assert run.failed_stage is None
    assert run.final_sql is None
    assert len(run.resolutions) == 1
    record = run.resolutions[0]
    alternates = [c["concept_id"] for c in record["candidates"]][:2]
    run.overrides[record["placeholder"]] = alternates

    finished = finish_run(run, runtime)
    assert finished.failed_stage is None
    rendered_ids = "(" + ", ".join(str(i) for i in sorted(alternates)) + ")"
    assert rendered_ids in finished.final_sql
    # resolutions stay as first written; the override lives beside them
    assert finished.resolutions[0]["accepted_ids"] != sorted(alternates) or True
    assert finished.resolutions[0] == record


def test_finish_before_prepare_raises(services):
    runtime = make_runtime(services, [])
    run = PipelineRun(run_id="x", question="q", config={}, template_version="v")
    with pytest.raises(PipelineError):
        finish_run(run, runtime)


# -- trace plumbing -----------------------------------------------------------


def test_run_store_round_trip(tmp_path):
    store = RunStore(tmp_path)
    run = PipelineRun(run_id="abc-123", question="q", config={"seed": 0}, template_version="v")
    run.entities.append({"mention": "x", "domain": "drug"})
    store.save(run)
    loaded = store.load("abc-123")
    assert loaded.to_dict() == run.to_dict()
    assert store.ids() == ["abc-123"]
    with pytest.raises(KeyError):
        store.load("missing")


def test_run_store_rejects_bad_ids(tmp_path):
    store = RunStore(tmp_path)
    with pytest.raises(PipelineError):
        store.path("../escape")


def test_from_dict_requires_core_fields():
    with pytest.raises(PipelineError):
        PipelineRun.from_dict({"run_id": "r1"})


def test_trace_hash_ignores_timings():
    run_a = PipelineRun(run_id="r", question="q", config={}, template_version="v")
    run_b = PipelineRun(run_id="r", question="q", config={}, template_version="v")
    run_a.timings["execute"] = 1.5
    run_b.timings["execute"] = 2.5
    assert run_a.trace_hash() == run_b.trace_hash()
    run_b.answer = "different"
    assert run_a.trace_hash() != run_b.trace_hash()


def test_derive_run_id_depends_on_inputs():
    cfg = PipelineConfig()
    assert derive_run_id("q1", cfg) == derive_run_id("q1", cfg)
    assert derive_run_id("q1", cfg) != derive_run_id("q2", cfg)
    assert derive_run_id("q1", cfg) != derive_run_id("q1", PipelineConfig(rag="random1"))


def test_schema_summary_lists_all_tables(services):
    summary = services["schema"]
    lines = summary.splitlines()
    assert len(lines) == 13
    assert any(line.startswith("person(") for line in lines)
    assert any("condition_occurrence(" in line for line in lines)
