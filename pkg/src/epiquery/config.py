"""Configuration file loading: INI sections for models, pipeline, and serving.

A config file is optional everywhere; every field has a usable default.
The ``[llm]`` section names the provider endpoint and models, ``[pipeline]``
sets run defaults, ``[database]`` points at the claims database, and
``[service]``/``[paths]`` govern the HTTP facade and where artifacts land.
The ``EPIQUERY_CONFIG`` environment variable supplies a file path when no
explicit one is given.
"""

from __future__ import annotations

import configparser
import os
from dataclasses import dataclass, field
from pathlib import Path

from .gateway import ModelConfig
from .pipeline import PipelineConfig

__all__ = [
    "ConfigError",
    "LlmSettings",
    "DatabaseSettings",
    "ServiceSettings",
    "PathSettings",
    "AppConfig",
    "load_config",
    "ENV_CONFIG",
]

ENV_CONFIG = "EPIQUERY_CONFIG"


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class LlmSettings:
    """Provider wiring; models come from here, credentials from env vars."""

    provider: str = "openai"
    url: str = "https://api.openai.com/v1/chat/completions"
    api_key_env: str = "EPIQUERY_LLM_API_KEY"
    model: str = "gpt-4-turbo"
    verifier_model: str = ""  # empty: use the generator model
    temperature: float = 0.0
    max_output_tokens: int = 2048
    request_timeout: float = 60.0
    max_retries: int = 3

    def generator_config(self) -> ModelConfig:
        return ModelConfig(
            provider=self.provider,
            model=self.model,
            temperature=self.temperature,
            max_output_tokens=self.max_output_tokens,
            request_timeout=self.request_timeout,
            max_retries=self.max_retries,
        )

    def verifier_config(self) -> ModelConfig:
        return ModelConfig(
            provider=self.provider,
            model=self.verifier_model or self.model,
            temperature=self.temperature,
            max_output_tokens=self.max_output_tokens,
            request_timeout=self.request_timeout,
            max_retries=self.max_retries,
        )


@dataclass(frozen=True)
class DatabaseSettings:
    target: str = ":memory:"
    seed: int = 1
    scale: int = 1000


@dataclass(frozen=True)
class ServiceSettings:
    host: str = "127.0.0.1"
    port: int = 8000
    auto_approve: bool = False
    api_token: str = ""  # empty disables token checks


@dataclass(frozen=True)
class PathSettings:
    runs_dir: str = "runs"
    transcripts_dir: str = ""  # empty: no transcript store configured


@dataclass(frozen=True)
class AppConfig:
    llm: LlmSettings = field(default_factory=LlmSettings)
    pipeline: PipelineConfig = field(default_factory=PipelineConfig)
    database: DatabaseSettings = field(default_factory=DatabaseSettings)
    service: ServiceSettings = field(default_factory=ServiceSettings)
    paths: PathSettings = field(default_factory=PathSettings)


def _llm_settings(parser: configparser.ConfigParser) -> LlmSettings:
    section = parser["llm"] if parser.has_section("llm") else {}
    defaults = LlmSettings()
    get = section.get if hasattr(section, "get") else dict(section).get
    return LlmSettings(
        provider=get("provider", defaults.provider),
        url=get("url", defaults.url),
        api_key_env=get("api_key_env", defaults.api_key_env),
        model=get("model", defaults.model),
        verifier_model=get("verifier_model", defaults.verifier_model),
        temperature=float(get("temperature", defaults.temperature)),
        max_output_tokens=int(get("max_output_tokens", defaults.max_output_tokens)),
        request_timeout=float(get("request_timeout", defaults.request_timeout)),
        max_retries=int(get("max_retries", defaults.max_retries)),
    )


def _pipeline_config(parser: configparser.ConfigParser, llm: LlmSettings) -> PipelineConfig:
    defaults = PipelineConfig()
    if parser.has_section("pipeline"):
        section = parser["pipeline"]
        return PipelineConfig(
            prompt_mode=section.get("prompt_mode", defaults.prompt_mode),
            rag=section.get("rag", defaults.rag),
            k=section.getint("k", defaults.k),
            max_repair_attempts=section.getint(
                "max_repair_attempts", defaults.max_repair_attempts
            ),
            tolerance=section.getfloat("tolerance", defaults.tolerance),
            coding_n=section.getint("coding_n", defaults.coding_n),
            seed=section.getint("seed", defaults.seed),
            generator=llm.generator_config(),
            verifier=llm.verifier_config(),
        )
    return PipelineConfig(
        generator=llm.generator_config(), verifier=llm.verifier_config()
    )


def load_config(path: str | Path | None = None) -> AppConfig:
    """Parse an INI file into settings; missing file or sections mean defaults.

    An explicit ``path`` must exist. With no path, ``EPIQUERY_CONFIG`` is
    consulted; if that is unset too, the defaults stand.
    """
    if path is None:
        env = os.environ.get(ENV_CONFIG, "")
        if not env:
            return AppConfig()
        path = env
    target = Path(path)
    if not target.exists():
        raise ConfigError(f"config file not found: {target}")
    parser = configparser.ConfigParser()
    try:
        parser.read_string(target.read_text(encoding="utf-8"))
    except configparser.Error as err:
        raise ConfigError(f"cannot parse {target}: {err}") from err

    try:
        llm = _llm_settings(parser)
        pipeline_config = _pipeline_config(parser, llm)
        database = DatabaseSettings(
            target=parser.get("database", "target", fallback=":memory:"),
            seed=parser.getint("database", "seed", fallback=1),
            scale=parser.getint("database", "scale", fallback=1000),
        )
        service = ServiceSettings(
            host=parser.get("service", "host", fallback="127.0.0.1"),
            port=parser.getint("service", "port", fallback=8000),
            auto_approve=parser.getboolean("service", "auto_approve", fallback=False),
            api_token=parser.get("service", "api_token", fallback=""),
        )
        paths = PathSettings(
            runs_dir=parser.get("paths", "runs_dir", fallback="runs"),
            transcripts_dir=parser.get("paths", "transcripts_dir", fallback=""),
        )
    except (ValueError, configparser.Error) as err:
        raise ConfigError(f"invalid value in {target}: {err}") from err
    return AppConfig(
        llm=llm,
        pipeline=pipeline_config,
        database=database,
        service=service,
        paths=paths,
    )
