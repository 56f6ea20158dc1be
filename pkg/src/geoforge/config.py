"""Run configuration: backend selection, per-stage models, budgets, GRPO knobs.

Config files are JSON; every key is optional and falls back to the defaults
below. The live backend reads its credential from the GEOFORGE_API_KEY
environment variable.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ValidationError
from .gateway import (
    DEFAULT_CONCURRENCY,
    DEFAULT_MAX_OUTPUT,
    Gateway,
    HTTPBackend,
    ReplayBackend,
    RetryPolicy,
    Transcript,
)
from .rewards import GrpoConfig
from .rules import DEFAULT_CHUNK_TOKEN_LIMIT

API_KEY_ENV = "GEOFORGE_API_KEY"


@dataclass
class AppConfig:
    backend: str = "live"  # "live" or "replay"
    endpoint: str | None = None
    models: dict[str, str] = field(default_factory=lambda: {"default": "default"})
    temperatures: dict[str, float | None] = field(default_factory=dict)
    max_output: int = DEFAULT_MAX_OUTPUT
    retry: RetryPolicy = field(default_factory=RetryPolicy)
    concurrency: int = DEFAULT_CONCURRENCY
    transcript: str | None = None
    chunk_token_limit: int = DEFAULT_CHUNK_TOKEN_LIMIT
    grpo: GrpoConfig = field(default_factory=GrpoConfig)
    seed: int = 0
    num_candidates: int = 5

    def transcript_id(self) -> str:
        return self.transcript or "none"


def load_config(path: str | Path | None) -> AppConfig:
    if path is None:
        return AppConfig()
    with open(path, encoding="utf-8") as handle:
        obj = json.load(handle)
    if not isinstance(obj, dict):
        raise ValidationError("config must be a JSON object")
    retry_obj = obj.get("retry", {})
    grpo_obj = obj.get("grpo", {})
    return AppConfig(
        backend=obj.get("backend", "live"),
        endpoint=obj.get("endpoint"),
        models={"default": "default", **obj.get("models", {})},
        temperatures=obj.get("temperatures", {}),
        max_output=obj.get("max_output", DEFAULT_MAX_OUTPUT),
        retry=RetryPolicy(
            max_attempts=retry_obj.get("max_attempts", 4),
            base_delay=retry_obj.get("base_delay", 0.5),
            max_delay=retry_obj.get("max_delay", 8.0),
        ),
        concurrency=obj.get("concurrency", DEFAULT_CONCURRENCY),
        transcript=obj.get("transcript"),
        chunk_token_limit=obj.get("chunk_token_limit", DEFAULT_CHUNK_TOKEN_LIMIT),
        grpo=GrpoConfig(
            epsilon=grpo_obj.get("epsilon", 0.2),
            beta=grpo_obj.get("beta", 0.02),
            group_size=grpo_obj.get("group_size", 8),
            standardize_advantages=grpo_obj.get("standardize_advantages", True),
        ),
        seed=obj.get("seed", 0),
        num_candidates=obj.get("num_candidates", 5),
    )


def build_gateway(config: AppConfig) -> Gateway:
    """Construct the gateway for a config: live records into the transcript
    path, replay reads from it."""
    if config.backend == "replay":
        if not config.transcript:
            raise ValidationError("replay backend requires a transcript path")
        try:
            backend = ReplayBackend(Transcript.load(config.transcript))
        except FileNotFoundError:
            raise ValidationError(f"transcript file not found: {config.transcript}") from None
        transcript = None
    elif config.backend == "live":
        if not config.endpoint:
            raise ValidationError("live backend requires an endpoint URL")
        backend = HTTPBackend(
            endpoint=config.endpoint,
            api_key=os.environ.get(API_KEY_ENV),
            retry=config.retry,
        )
        transcript = Transcript()
    else:
        raise ValidationError(f"unknown backend {config.backend!r} (expected live or replay)")
    return Gateway(
        backend=backend,
        transcript=transcript,
        models=config.models,
        temperatures=config.temperatures,
        max_output=config.max_output,
        concurrency=config.concurrency,
    )
