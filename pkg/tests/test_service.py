"""HTTP service: approval checkpoints, phase audit, persistence, recovery."""

import json
import time

import pytest
from fastapi.testclient import TestClient

from epiquery import pipeline
from epiquery.coding import bundled_ontology_paths, load_ontology
from epiquery.dataset import bundled_corpus_path, load_dataset
from epiquery.embeddings import HashEmbedder
from epiquery.executor import generate_synthetic_data, init_database
from epiquery.gateway import LlmGateway, ScriptedProvider
from epiquery.pipeline import PipelineConfig, PipelineRun, PipelineRuntime, RunStore, schema_summary
from epiquery.retrieval import build_index
from epiquery.service import PHASES, RunRegistry, ServiceError, create_app

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
ANSWER = "There are some patients."


def full_script():
    return [EXTRACTION, GOOD_SQL, "1", ANSWER]


@pytest.fixture(scope="module")
def services():
    pairs = load_dataset(bundled_corpus_path())[:12]
    embed = HashEmbedder()
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


def make_runtime(services, script, run_store, gateway=None):
    return PipelineRuntime(
        pairs=services["pairs"],
        index=services["index"],
        store=services["store"],
        db=services["db"],
        gateway=gateway if gateway is not None else LlmGateway(ScriptedProvider(script)),
        embed_query=services["embed"],
        embed_concepts=services["embed"],
        run_store=run_store,
        schema=services["schema"],
    )


def make_client(services, script, tmp_path, **app_kwargs):
    runtime = make_runtime(services, script, RunStore(tmp_path / "runs"))
    app = create_app(runtime, **app_kwargs)
    return TestClient(app), runtime


def wait_phase(client, run_id, *phases, timeout=10.0, headers=None):
    deadline = time.time() + timeout
    doc = None
    while time.time() < deadline:
        doc = client.get(f"/runs/{run_id}", headers=headers or {}).json()
        if doc["status"]["phase"] in phases:
            return doc
        time.sleep(0.02)
    raise AssertionError(f"run {run_id} never reached {phases}; last status: {doc and doc['status']}")


def submit(client, question=QUESTION, config=None):
    body = {"question": question}
    if config is not None:
        body["config"] = config
    resp = client.post("/questions", json=body)
    assert resp.status_code == 202, resp.text
    return resp.json()["run_id"]


def phases_of(status):
    return [t["phase"] for t in status["transitions"]]


# -- submission ---------------------------------------------------------------


def test_submission_parks_at_code_review(services, tmp_path):
    client, _ = make_client(services, full_script(), tmp_path)
    run_id = submit(client)
    doc = wait_phase(client, run_id, "awaiting_code_review")
    trace = doc["trace"]
    assert trace["sql_template"] is not None
    assert trace["resolutions"] and trace["resolutions"][0]["candidates"]
    assert trace["final_sql"] is None
    assert trace["result"] is None
    assert trace["answer"] is None
    assert phases_of(doc["status"]) == ["generating", "awaiting_code_review"]
    for transition in doc["status"]["transitions"]:
        assert "T" in transition["at"]  # ISO timestamps


def test_empty_question_rejected(services, tmp_path):
    client, _ = make_client(services, [], tmp_path)
    resp = client.post("/questions", json={"question": "   "})
    assert resp.status_code == 400


def test_unknown_config_override_rejected(services, tmp_path):
    client, _ = make_client(services, [], tmp_path)
    resp = client.post("/questions", json={"question": QUESTION, "config": {"nope": 1}})
    assert resp.status_code == 400
    resp = client.post("/questions", json={"question": QUESTION, "config": {"rag": "topk", "k": 0}})
    assert resp.status_code == 400


def test_config_overrides_applied(services, tmp_path):
    client, _ = make_client(services, full_script(), tmp_path)
    run_id = submit(client, config={"mode": "simple", "tolerance": 0.05})
    doc = wait_phase(client, run_id, "awaiting_code_review")
    assert doc["trace"]["config"]["prompt_mode"] == "simple"
    assert doc["trace"]["config"]["rag"] == "none"
    assert doc["trace"]["config"]["tolerance"] == pytest.approx(0.05)


def test_missing_gateway_means_unavailable(services, tmp_path):
    runtime = make_runtime(services, [], RunStore(tmp_path / "runs"))
    object.__setattr__(runtime, "gateway", None)
    client = TestClient(create_app(runtime))
    resp = client.post("/questions", json={"question": QUESTION})
    assert resp.status_code == 503


def test_unknown_run_is_404(services, tmp_path):
    client, _ = make_client(services, [], tmp_path)
    assert client.get("/runs/deadbeef").status_code == 404
    assert client.post("/runs/deadbeef/codes", json={}).status_code == 404
    assert client.post("/runs/deadbeef/execute").status_code == 404


# -- the two checkpoints ------------------------------------------------------


def test_full_approval_flow(services, tmp_path):
    client, _ = make_client(services, full_script(), tmp_path)
    run_id = submit(client)
    wait_phase(client, run_id, "awaiting_code_review")

    # executing before code review is a phase violation
    assert client.post(f"/runs/{run_id}/execute").status_code == 409

    # empty body keeps the automatic resolution
    resp = client.post(f"/runs/{run_id}/codes", json={})
    assert resp.status_code == 200
    assert resp.json()["phase"] == "awaiting_sql_approval"

    # a second review is a phase violation
    assert client.post(f"/runs/{run_id}/codes", json={}).status_code == 409

    resp = client.post(f"/runs/{run_id}/execute")
    assert resp.status_code == 200
    assert resp.json()["status"]["phase"] == "answered"
    assert resp.json()["answer"] == ANSWER

    doc = client.get(f"/runs/{run_id}").json()
    assert phases_of(doc["status"]) == [
        "generating",
        "awaiting_code_review",
        "awaiting_sql_approval",
        "executing",
        "answered",
    ]
    trace = doc["trace"]
    assert trace["answer"] == ANSWER
    assert trace["result"]["row_count"] == 1
    assert "@" not in trace["final_sql"]

    # no transitions out of a terminal phase
    assert client.post(f"/runs/{run_id}/execute").status_code == 409
    assert client.post(f"/runs/{run_id}/codes", json={}).status_code == 409


def test_code_review_validation(services, tmp_path):
    client, _ = make_client(services, full_script(), tmp_path)
    run_id = submit(client)
    doc = wait_phase(client, run_id, "awaiting_code_review")
    record = doc["trace"]["resolutions"][0]
    placeholder = record["placeholder"]
    candidate_ids = [c["concept_id"] for c in record["candidates"]]

    resp = client.post(f"/runs/{run_id}/codes", json={"[condition@bogus]": [candidate_ids[0]]})
    assert resp.status_code == 422
    resp = client.post(f"/runs/{run_id}/codes", json={placeholder: []})
    assert resp.status_code == 422
    resp = client.post(f"/runs/{run_id}/codes", json={placeholder: [max(candidate_ids) + 1]})
    assert resp.status_code == 422

    # rejections must not advance the phase
    assert client.get(f"/runs/{run_id}").json()["status"]["phase"] == "awaiting_code_review"

    resp = client.post(f"/runs/{run_id}/codes", json={placeholder: candidate_ids[:2]})
    assert resp.status_code == 200


def test_code_override_reaches_final_sql(services, tmp_path):
    client, _ = make_client(services, full_script(), tmp_path)
    run_id = submit(client)
    doc = wait_phase(client, run_id, "awaiting_code_review")
    record = doc["trace"]["resolutions"][0]
    alternates = [c["concept_id"] for c in record["candidates"]][:2]

    client.post(f"/runs/{run_id}/codes", json={record["placeholder"]: alternates})
    client.post(f"/runs/{run_id}/execute")

    trace = client.get(f"/runs/{run_id}").json()["trace"]
    rendered = "(" + ", ".join(str(i) for i in sorted(alternates)) + ")"
    assert rendered in trace["final_sql"]
    assert trace["overrides"] == {record["placeholder"]: sorted(alternates)}
    # the automatic resolution record is preserved alongside the override
    assert trace["resolutions"][0] == record


def test_failed_generation_is_terminal(services, tmp_path):
    client, _ = make_client(services, [EXTRACTION] + [BROKEN_SQL] * 4, tmp_path)
    run_id = submit(client)
    doc = wait_phase(client, run_id, "failed")
    assert doc["trace"]["db_error"]["category"] == "missing-object"
    assert doc["trace"]["repairs_used"] == 3
    assert client.post(f"/runs/{run_id}/codes", json={}).status_code == 409
    assert client.post(f"/runs/{run_id}/execute").status_code == 409


def test_auto_approve_collapses_checkpoints(services, tmp_path):
    client, _ = make_client(services, full_script(), tmp_path, auto_approve=True)
    run_id = submit(client)
    doc = wait_phase(client, run_id, "answered")
    assert doc["trace"]["answer"] == ANSWER
    # the run still walks through every phase in order
    assert phases_of(doc["status"]) == list(PHASES[:-1])


def test_no_execution_without_sql_approval(services, tmp_path, monkeypatch):
    """Phase audit: the database is only touched while generating (probes)
    or executing (the approved SQL) — never while a run is parked."""
    client, runtime = make_client(services, full_script(), tmp_path)
    registry = client.app.state.registry
    real_execute = pipeline.execute_sql
    calls = []

    def audited(db, sql, limits):
        phases = {state.run_id: state.phase for state in registry._runs.values()}
        calls.append(phases)
        return real_execute(db, sql, limits)

    monkeypatch.setattr(pipeline, "execute_sql", audited)

    run_id = submit(client)
    wait_phase(client, run_id, "awaiting_code_review")
    for snapshot in calls:
        assert snapshot[run_id] == "generating"  # probe executions only

    calls.clear()
    client.post(f"/runs/{run_id}/codes", json={})
    assert calls == []  # parked runs never touch the database

    client.post(f"/runs/{run_id}/execute")
    assert len(calls) == 1
    assert calls[0][run_id] == "executing"
    assert client.get(f"/runs/{run_id}").json()["status"]["phase"] == "answered"


def test_trace_documents_are_append_consistent(services, tmp_path):
    client, _ = make_client(services, full_script(), tmp_path)
    run_id = submit(client)
    early = wait_phase(client, run_id, "awaiting_code_review")["trace"]
    client.post(f"/runs/{run_id}/codes", json={})
    client.post(f"/runs/{run_id}/execute")
    late = client.get(f"/runs/{run_id}").json()["trace"]

    for field in ("run_id", "question", "config", "entities", "masked_question",
                  "retrieval_hits", "exemplars", "sql_template", "resolutions"):
        assert late[field] == early[field], field
    assert late["exchanges"][: len(early["exchanges"])] == early["exchanges"]
    assert late["stages"][: len(early["stages"])] == early["stages"]


# -- persistence and recovery -------------------------------------------------


def test_restart_recovers_paused_run(services, tmp_path):
    store_dir = tmp_path / "runs"
    runtime = make_runtime(services, full_script(), RunStore(store_dir))
    client = TestClient(create_app(runtime))
    run_id = submit(client)
    wait_phase(client, run_id, "awaiting_code_review")

    # a fresh app over the same stores picks the run up where it paused
    revived = TestClient(create_app(runtime))
    doc = revived.get(f"/runs/{run_id}").json()
    assert doc["status"]["phase"] == "awaiting_code_review"
    assert doc["trace"]["sql_template"] is not None

    assert revived.post(f"/runs/{run_id}/codes", json={}).status_code == 200
    resp = revived.post(f"/runs/{run_id}/execute")
    assert resp.status_code == 200
    assert resp.json()["answer"] == ANSWER


def test_restart_fails_interrupted_run(services, tmp_path):
    store_dir = tmp_path / "runs"
    store = RunStore(store_dir)
    run = PipelineRun(run_id="stuck0001", question="q", config={}, template_version="v")
    store.save(run)
    status_dir = store_dir / "status"
    status_dir.mkdir(parents=True, exist_ok=True)
    (status_dir / "stuck0001.json").write_text(json.dumps({
        "run_id": "stuck0001",
        "phase": "generating",
        "transitions": [{"phase": "generating", "at": "2026-01-01T00:00:00+00:00"}],
    }))

    runtime = make_runtime(services, [], store)
    client = TestClient(create_app(runtime))
    doc = client.get("/runs/stuck0001").json()
    assert doc["status"]["phase"] == "failed"
    assert doc["status"]["transitions"][-1]["note"] == "interrupted by restart"
    # the verdict is persisted, not recomputed on every restart
    persisted = json.loads((status_dir / "stuck0001.json").read_text())
    assert persisted["phase"] == "failed"


def test_registry_requires_run_store(services):
    runtime = make_runtime(services, [], RunStore.__new__(RunStore))
    object.__setattr__(runtime, "run_store", None)
    with pytest.raises(ServiceError):
        RunRegistry(runtime)


# -- transport details ----------------------------------------------------------


def test_api_token_guard(services, tmp_path):
    client, _ = make_client(services, [], tmp_path, api_token="sekret")
    assert client.get("/runs/x").status_code == 401
    assert client.get("/runs/x", headers={"x-api-token": "wrong"}).status_code == 401
    assert client.get("/runs/x", headers={"x-api-token": "sekret"}).status_code == 404
    assert client.get("/spec").status_code == 200  # the contract itself stays public


def test_openapi_served_at_spec(services, tmp_path):
    client, _ = make_client(services, [], tmp_path)
    doc = client.get("/spec").json()
    assert set(doc["paths"]) >= {"/questions", "/runs/{run_id}", "/runs/{run_id}/codes", "/runs/{run_id}/execute"}


def test_static_assets_served_alongside_api(services, tmp_path):
    static = tmp_path / "static"
    static.mkdir()
    (static / "index.html").write_text("<html><body>review-ui</body></html>")
    (static / "app.js").write_text("console.log('ui');")
    client, _ = make_client(services, [], tmp_path, static_dir=static)
    assert "review-ui" in client.get("/").text
    assert "console.log" in client.get("/app.js").text
    assert client.get("/runs/missing").status_code == 404  # API routes win over static files
