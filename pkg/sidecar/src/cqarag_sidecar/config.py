"""Sidecar configuration: which model serves each capability.

Sources, in precedence order: explicit kwargs, a JSON config file
(SIDECAR_CONFIG), environment variables, defaults. A capability whose model
id is empty is disabled and its endpoint answers 501.

Model id conventions:
  debug-hash-<dim>   deterministic hash embedding (no dependencies)
  debug-echo         deterministic echo generation
  debug-rules        rule-based triplet extraction / NER
  anything else      loaded via sentence-transformers (embed) or
                     transformers (generate / triplets / ner)
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from pathlib import Path

ENV_PREFIX = "SIDECAR_"

DEFAULT_EMBED_MODEL = "BAAI/bge-large-en"
DEFAULT_GENERATE_MODEL = ""  # heavy; operators opt in
DEFAULT_TRIPLETS_MODEL = "Babelscape/rebel-large"
DEFAULT_NER_MODEL = "Universal-NER/UniNER-7B-all"


@dataclass
class SidecarConfig:
    embed_model: str = DEFAULT_EMBED_MODEL
    generate_model: str = DEFAULT_GENERATE_MODEL
    triplets_model: str = DEFAULT_TRIPLETS_MODEL
    ner_model: str = DEFAULT_NER_MODEL
    host: str = "127.0.0.1"
    port: int = 8470
    max_batch: int = 64
    max_queue: int = 8
    max_new_tokens_cap: int = 1024
    prompt_token_limit: int = 8192

    def enabled(self) -> dict[str, str]:
        caps = {
            "embed": self.embed_model,
            "generate": self.generate_model,
            "triplets": self.triplets_model,
            "ner": self.ner_model,
        }
        return {name: model for name, model in caps.items() if model}


_FIELD_TYPES = {
    "embed_model": str, "generate_model": str, "triplets_model": str,
    "ner_model": str, "host": str, "port": int, "max_batch": int,
    "max_queue": int, "max_new_tokens_cap": int, "prompt_token_limit": int,
}


def load_config(path: str | Path | None = None, env: dict | None = None,
                **overrides) -> SidecarConfig:
    env = env if env is not None else os.environ
    values: dict = {}

    file_path = path or env.get(ENV_PREFIX + "CONFIG")
    if file_path:
        raw = json.loads(Path(file_path).read_text(encoding="utf-8"))
        for key, value in raw.items():
            if key not in _FIELD_TYPES:
                raise ValueError(f"unknown config key: {key!r}")
            values[key] = value

    for key, want in _FIELD_TYPES.items():
        env_name = ENV_PREFIX + key.upper()
        if env_name in env:
            values[key] = want(env[env_name])

    values.update({k: v for k, v in overrides.items() if v is not None})
    for key, value in values.items():
        if not isinstance(value, _FIELD_TYPES[key]):
            raise ValueError(f"config key {key!r}: expected {_FIELD_TYPES[key].__name__}")
    return SidecarConfig(**values)
