"""INI settings parsing and defaults."""

import pytest

from epiquery.config import (
    AppConfig,
    ConfigError,
    ENV_CONFIG,
    LlmSettings,
    load_config,
)


FULL_INI = """\
[llm]
provider = anthropic
url = https://example.test/v1/chat/completions
model = claude-3-opus
verifier_model = claude-3-haiku
temperature = 0.2
max_output_tokens = 1024
request_timeout = 30
max_retries = 1

[pipeline]
prompt_mode = simple
rag = topk
k = 2
max_repair_attempts = 2
tolerance = 0.05
coding_n = 25
seed = 11

[database]
target = claims.db
seed = 3
scale = 500

[service]
host = 0.0.0.0
port = 9999
auto_approve = true
api_token = sekret

[paths]
runs_dir = /tmp/traces
transcripts_dir = /tmp/transcripts
"""


def test_defaults_without_file(monkeypatch):
    monkeypatch.delenv(ENV_CONFIG, raising=False)
    cfg = load_config()
    assert cfg == AppConfig()
    assert cfg.pipeline.max_repair_attempts == 3
    assert cfg.pipeline.tolerance == pytest.approx(0.10)
    assert cfg.database.seed == 1 and cfg.database.scale == 1000
    assert not cfg.service.auto_approve


def test_full_file_parses(tmp_path):
    path = tmp_path / "epiquery.ini"
    path.write_text(FULL_INI)
    cfg = load_config(path)
    assert cfg.llm.provider == "anthropic"
    assert cfg.llm.model == "claude-3-opus"
    assert cfg.pipeline.prompt_mode == "simple"
    assert cfg.pipeline.rag == "topk" and cfg.pipeline.k == 2
    assert cfg.pipeline.tolerance == pytest.approx(0.05)
    assert cfg.pipeline.generator.model == "claude-3-opus"
    assert cfg.pipeline.verifier.model == "claude-3-haiku"
    assert cfg.database.target == "claims.db"
    assert cfg.service.port == 9999 and cfg.service.auto_approve
    assert cfg.service.api_token == "sekret"
    assert cfg.paths.runs_dir == "/tmp/traces"


def test_partial_file_keeps_defaults(tmp_path):
    path = tmp_path / "partial.ini"
    path.write_text("[llm]\nmodel = gpt-4o\n")
    cfg = load_config(path)
    assert cfg.llm.model == "gpt-4o"
    assert cfg.llm.temperature == 0.0
    assert cfg.pipeline.generator.model == "gpt-4o"
    assert cfg.pipeline.verifier.model == "gpt-4o"  # falls back to generator
    assert cfg.database.target == ":memory:"


def test_env_var_locates_file(tmp_path, monkeypatch):
    path = tmp_path / "env.ini"
    path.write_text("[service]\nport = 4242\n")
    monkeypatch.setenv(ENV_CONFIG, str(path))
    assert load_config().service.port == 4242


def test_missing_explicit_file_raises(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "absent.ini")


def test_malformed_file_raises(tmp_path):
    path = tmp_path / "broken.ini"
    path.write_text("this is not ini at all\n")
    with pytest.raises(ConfigError):
        load_config(path)


def test_bad_value_raises(tmp_path):
    path = tmp_path / "bad.ini"
    path.write_text("[pipeline]\nk = many\n")
    with pytest.raises(ConfigError):
        load_config(path)


def test_invalid_pipeline_combination_raises(tmp_path):
    path = tmp_path / "bad2.ini"
    path.write_text("[pipeline]\nrag = topk\nk = 0\n")
    with pytest.raises((ConfigError, ValueError)):
        load_config(path)


def test_verifier_model_defaults_to_generator():
    settings = LlmSettings(model="m-1")
    assert settings.verifier_config().model == "m-1"
    settings = LlmSettings(model="m-1", verifier_model="m-2")
    assert settings.verifier_config().model == "m-2"
