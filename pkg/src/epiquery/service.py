"""HTTP facade over the pipeline, with human checkpoints before execution.

A submitted question runs through SQL generation and concept resolution,
then parks at ``awaiting_code_review``. A reviewer may override the
accepted codes (``POST /runs/{id}/codes``), which advances the run to
``awaiting_sql_approval``; only an explicit ``POST /runs/{id}/execute``
renders and runs the final SQL. No query touches the database without
passing through that approval phase — the ``--auto-approve`` flag merely
issues both approvals programmatically for unattended benchmark use.

Every phase transition is timestamped and persisted beside the run trace,
so a restarted server recovers paused runs where they stood; runs caught
mid-generation by a crash are marked failed rather than silently resumed.
"""

from __future__ import annotations

import dataclasses
import json
import threading
import uuid
from datetime import datetime, timezone
from pathlib import Path
from typing import Mapping

from fastapi import FastAPI, HTTPException, Request
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel, Field

from .pipeline import (
    PipelineConfig,
    PipelineRun,
    PipelineRuntime,
    config_for_mode,
    finish_run,
    prepare_run,
)

__all__ = [
    "PHASES",
    "ServiceError",
    "UnknownRunError",
    "WrongPhaseError",
    "InvalidCodesError",
    "RunRegistry",
    "create_app",
]

PHASES = (
    "generating",
    "awaiting_code_review",
    "awaiting_sql_approval",
    "executing",
    "answered",
    "failed",
)
_PHASE_INDEX = {phase: i for i, phase in enumerate(PHASES)}
_TERMINAL = ("answered", "failed")

# Config fields a request body may override.
_OVERRIDABLE = (
    "prompt_mode",
    "rag",
    "k",
    "max_repair_attempts",
    "tolerance",
    "coding_n",
    "seed",
)


class ServiceError(RuntimeError):
    pass


class UnknownRunError(KeyError):
    pass


class WrongPhaseError(ServiceError):
    def __init__(self, run_id: str, phase: str, wanted: str):
        super().__init__(f"run {run_id} is in phase {phase!r}, not {wanted!r}")
        self.phase = phase


class InvalidCodesError(ValueError):
    pass


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="milliseconds")


class _RunState:
    """Registry-internal: one run's phase history and lock."""

    def __init__(self, run_id: str):
        self.run_id = run_id
        self.phase: str | None = None
        self.transitions: list[dict] = []
        self.lock = threading.Lock()

    def status(self) -> dict:
        return {
            "run_id": self.run_id,
            "phase": self.phase,
            "transitions": list(self.transitions),
        }


class RunRegistry:
    """Run lifecycle over a persistent store: submit, review, execute.

    One in-flight transition per run is enforced with a per-run lock.
    Statuses live as ``status/<run_id>.json`` under the trace store root
    and are rewritten on every transition.
    """

    def __init__(
        self,
        runtime: PipelineRuntime,
        base_config: PipelineConfig | None = None,
        *,
        auto_approve: bool = False,
    ):
        if runtime.run_store is None:
            raise ServiceError("service requires a runtime with a run store")
        self.runtime = runtime
        self.base_config = base_config if base_config is not None else PipelineConfig()
        self.auto_approve = auto_approve
        self._runs: dict[str, _RunState] = {}
        self._registry_lock = threading.Lock()
        self._status_dir = runtime.run_store.root / "status"
        self._status_dir.mkdir(parents=True, exist_ok=True)
        self._recover()

    # -- persistence ---------------------------------------------------------

    def _status_path(self, run_id: str) -> Path:
        return self._status_dir / f"{run_id}.json"

    def _persist_status(self, state: _RunState) -> None:
        self._status_path(state.run_id).write_text(
            json.dumps(state.status(), indent=2, sort_keys=True) + "\n",
            encoding="utf-8",
        )

    def _recover(self) -> None:
        """Restore paused and finished runs; fail the ones caught mid-flight."""
        assert self.runtime.run_store is not None
        for run_id in self.runtime.run_store.ids():
            state = _RunState(run_id)
            status_path = self._status_path(run_id)
            if status_path.exists():
                doc = json.loads(status_path.read_text(encoding="utf-8"))
                state.phase = doc.get("phase")
                state.transitions = list(doc.get("transitions", []))
            else:
                state.phase = "failed"
                state.transitions = [{"phase": "failed", "at": _now()}]
            if state.phase in ("generating", "executing"):
                state.transitions.append(
                    {"phase": "failed", "at": _now(), "note": "interrupted by restart"}
                )
                state.phase = "failed"
                self._persist_status(state)
            self._runs[run_id] = state

    # -- state machine ---------------------------------------------------------

    def _set_phase(self, state: _RunState, phase: str, note: str | None = None) -> None:
        if phase not in _PHASE_INDEX:
            raise ServiceError(f"unknown phase: {phase!r}")
        if state.phase is not None:
            if state.phase in _TERMINAL:
                raise ServiceError(f"run {state.run_id} already {state.phase}")
            if phase != "failed" and _PHASE_INDEX[phase] <= _PHASE_INDEX[state.phase]:
                raise ServiceError(
                    f"phase may not move {state.phase!r} -> {phase!r}"
                )
        state.phase = phase
        entry = {"phase": phase, "at": _now()}
        if note:
            entry["note"] = note
        state.transitions.append(entry)
        self._persist_status(state)

    def _state(self, run_id: str) -> _RunState:
        with self._registry_lock:
            if run_id not in self._runs:
                raise UnknownRunError(run_id)
            return self._runs[run_id]

    def _load_run(self, run_id: str) -> PipelineRun:
        assert self.runtime.run_store is not None
        try:
            return self.runtime.run_store.load(run_id)
        except KeyError as err:
            raise UnknownRunError(run_id) from err

    # -- operations --------------------------------------------------------------

    def submit(self, question: str, config: PipelineConfig) -> str:
        """Register a run and start generation in the background."""
        run_id = uuid.uuid4().hex[:12]
        state = _RunState(run_id)
        with self._registry_lock:
            self._runs[run_id] = state
        self._set_phase(state, "generating")
        thread = threading.Thread(
            target=self._generate, args=(run_id, question, config), daemon=True
        )
        thread.start()
        return run_id

    def _generate(self, run_id: str, question: str, config: PipelineConfig) -> None:
        state = self._state(run_id)
        try:
            run = prepare_run(question, config, self.runtime, run_id=run_id)
        except Exception as err:  # defensive: pipeline failures are data, not raises
            with state.lock:
                self._set_phase(state, "failed", note=str(err))
            return
        with state.lock:
            if run.failed_stage is not None:
                self._set_phase(state, "failed", note=run.failure)
                return
            self._set_phase(state, "awaiting_code_review")
        if self.auto_approve:
            self.approve_codes(run_id, {})
            self.execute(run_id)

    def status(self, run_id: str) -> dict:
        return self._state(run_id).status()

    def trace(self, run_id: str) -> dict:
        return self._load_run(run_id).to_dict()

    def approve_codes(self, run_id: str, overrides: Mapping[str, list[int]]) -> dict:
        """Record reviewer code decisions; empty mapping keeps the defaults."""
        state = self._state(run_id)
        with state.lock:
            if state.phase != "awaiting_code_review":
                raise WrongPhaseError(run_id, state.phase or "?", "awaiting_code_review")
            run = self._load_run(run_id)
            allowed = {
                record["placeholder"]: {c["concept_id"] for c in record["candidates"]}
                for record in run.resolutions
            }
            cleaned: dict[str, list[int]] = {}
            for placeholder, ids in overrides.items():
                if placeholder not in allowed:
                    raise InvalidCodesError(f"unknown placeholder: {placeholder!r}")
                if not ids:
                    raise InvalidCodesError(f"{placeholder}: accepted set must be non-empty")
                chosen = sorted(int(i) for i in ids)
                outside = set(chosen) - allowed[placeholder]
                if outside:
                    raise InvalidCodesError(
                        f"{placeholder}: ids outside candidate set: {sorted(outside)}"
                    )
                cleaned[placeholder] = chosen
            run.overrides.update(cleaned)
            assert self.runtime.run_store is not None
            self.runtime.run_store.save(run)
            self._set_phase(state, "awaiting_sql_approval")
            return state.status()

    def execute(self, run_id: str) -> dict:
        """Render the approved SQL, run it, and articulate the answer."""
        state = self._state(run_id)
        with state.lock:
            if state.phase != "awaiting_sql_approval":
                raise WrongPhaseError(run_id, state.phase or "?", "awaiting_sql_approval")
            run = self._load_run(run_id)
            self._set_phase(state, "executing")
            finished = finish_run(run, self.runtime)
            if finished.failed_stage is None:
                self._set_phase(state, "answered")
            else:
                self._set_phase(state, "failed", note=finished.failure)
            return state.status()


# ---------------------------------------------------------------------------
# HTTP layer


class QuestionBody(BaseModel):
    question: str
    config: dict = Field(default_factory=dict)


def _config_from_overrides(base: PipelineConfig, overrides: Mapping) -> PipelineConfig:
    config = base
    extra = dict(overrides)
    mode = extra.pop("mode", None)
    if mode is not None:
        config = config_for_mode(str(mode), config)
    unknown = set(extra) - set(_OVERRIDABLE)
    if unknown:
        raise ValueError(f"unknown config overrides: {sorted(unknown)}")
    if extra:
        config = dataclasses.replace(config, **extra)
    return config


def create_app(
    runtime: PipelineRuntime,
    base_config: PipelineConfig | None = None,
    *,
    auto_approve: bool = False,
    api_token: str = "",
    static_dir: str | Path | None = None,
) -> FastAPI:
    """Build the service; the OpenAPI description is served at /spec."""
    app = FastAPI(title="epiquery service", version="0.1.0", openapi_url="/spec")
    registry = RunRegistry(runtime, base_config, auto_approve=auto_approve)
    app.state.registry = registry

    if api_token:

        @app.middleware("http")
        async def check_token(request: Request, call_next):
            if request.url.path != "/spec" and request.headers.get("x-api-token") != api_token:
                return JSONResponse({"detail": "invalid or missing token"}, status_code=401)
            return await call_next(request)

    @app.post("/questions", status_code=202)
    def post_question(body: QuestionBody) -> dict:
        if registry.runtime.gateway is None:
            raise HTTPException(status_code=503, detail="no language-model gateway configured")
        question = body.question.strip()
        if not question:
            raise HTTPException(status_code=400, detail="question must be non-empty")
        try:
            config = _config_from_overrides(registry.base_config, body.config)
        except (ValueError, TypeError) as err:
            raise HTTPException(status_code=400, detail=str(err)) from err
        run_id = registry.submit(question, config)
        return {"run_id": run_id}

    @app.get("/runs/{run_id}")
    def get_run(run_id: str) -> dict:
        try:
            return {"status": registry.status(run_id), "trace": registry.trace(run_id)}
        except UnknownRunError as err:
            raise HTTPException(status_code=404, detail=f"unknown run: {run_id}") from err

    @app.post("/runs/{run_id}/codes")
    def post_codes(run_id: str, overrides: dict[str, list[int]] | None = None) -> dict:
        try:
            return registry.approve_codes(run_id, overrides or {})
        except UnknownRunError as err:
            raise HTTPException(status_code=404, detail=f"unknown run: {run_id}") from err
        except WrongPhaseError as err:
            raise HTTPException(status_code=409, detail=str(err)) from err
        except InvalidCodesError as err:
            raise HTTPException(status_code=422, detail=str(err)) from err

    @app.post("/runs/{run_id}/execute")
    def post_execute(run_id: str) -> dict:
        try:
            status = registry.execute(run_id)
        except UnknownRunError as err:
            raise HTTPException(status_code=404, detail=f"unknown run: {run_id}") from err
        except WrongPhaseError as err:
            raise HTTPException(status_code=409, detail=str(err)) from err
        return {"status": status, "answer": registry.trace(run_id).get("answer")}

    if static_dir is not None and Path(static_dir).is_dir():
        app.mount("/", StaticFiles(directory=str(static_dir), html=True), name="ui")

    return app
