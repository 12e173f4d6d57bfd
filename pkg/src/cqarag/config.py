"""Pipeline configuration: a single JSON document with strict validation.

Every default matches the engine's reference parameterization: similarity
threshold 0.8, restart weight 0.85, at most 100 power iterations at
tolerance 1e-6, top-2 retrieval, 1024-dimensional embeddings. Backend URLs
can be overridden through environment variables (CQARAG_EMBED_URL,
CQARAG_GENERATE_URL, CQARAG_TRIPLETS_URL, CQARAG_NER_URL, CQARAG_KG_URL)
so deployments can rewire services without editing the file.
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .errors import ConfigError

RETRIEVAL_MODES = ("graph", "text")
ENHANCEMENT_MODES = ("on", "off")
GENERATION_MODES = ("pretrained", "finetuned")

DEFAULT_SIDECAR = "http://127.0.0.1:8470"

ENV_OVERRIDES = {
    "embed": "CQARAG_EMBED_URL",
    "generate": "CQARAG_GENERATE_URL",
    "triplets": "CQARAG_TRIPLETS_URL",
    "ner": "CQARAG_NER_URL",
    "kg": "CQARAG_KG_URL",
}


@dataclass
class PathsConfig:
    corpus: str = "corpus.jsonl"
    graph: str = "graph.json"
    cache_dir: str = "cache"
    results: str = "results.jsonl"
    report: str = "report.json"
    instructions: str = "instructions.txt"
    runs_dir: str = "runs"
    kg_fixture: str = ""


@dataclass
class BackendsConfig:
    embed: str = DEFAULT_SIDECAR
    generate: str = DEFAULT_SIDECAR
    triplets: str = DEFAULT_SIDECAR
    ner: str = DEFAULT_SIDECAR
    kg: str = "https://www.wikidata.org"
    embed_model: str = "bge-large-en"
    generate_model: str = ""


@dataclass
class ModesConfig:
    retrieval: str = "graph"
    enhancement: str = "on"
    generation: str = "pretrained"


@dataclass
class FilterRulesConfig:
    max_question_tokens: int = 1024
    max_answer_tokens: int = 1024
    min_answer_tokens: int = 10


@dataclass
class LimitsConfig:
    max_entities: int = 25
    max_kg_triplets: int = 200
    max_prompt_tokens: int = 3072
    max_new_tokens: int = 512
    temperature: float = 0.0
    retries: int = 3
    parallelism: int = 4
    filter_mode: str = "tail"  # or "head_and_tail"


@dataclass
class PipelineConfig:
    threshold: float = 0.8
    alpha: float = 0.85
    max_iter: int = 100
    tol: float = 1e-6
    k: int = 2
    dim: int = 1024
    split_boundary: str = "2021-01-01T00:00:00Z"
    paths: PathsConfig = field(default_factory=PathsConfig)
    backends: BackendsConfig = field(default_factory=BackendsConfig)
    modes: ModesConfig = field(default_factory=ModesConfig)
    filter: FilterRulesConfig = field(default_factory=FilterRulesConfig)
    limits: LimitsConfig = field(default_factory=LimitsConfig)

    def to_json(self) -> dict:
        return asdict(self)


_SECTIONS = {
    "paths": PathsConfig,
    "backends": BackendsConfig,
    "modes": ModesConfig,
    "filter": FilterRulesConfig,
    "limits": LimitsConfig,
}

_SCALAR_TYPES = {
    "threshold": float,
    "alpha": float,
    "max_iter": int,
    "tol": float,
    "k": int,
    "dim": int,
    "split_boundary": str,
}


def _coerce(key: str, value, want: type):
    if want is float and isinstance(value, (int, float)) and not isinstance(value, bool):
        return float(value)
    if want is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(key, f"expected integer, got {value!r}")
        return value
    if want is str:
        if not isinstance(value, str):
            raise ConfigError(key, f"expected string, got {value!r}")
        return value
    if not isinstance(value, want):
        raise ConfigError(key, f"expected {want.__name__}, got {value!r}")
    return value


def _build_section(name: str, cls: type, raw: dict):
    defaults = cls()
    known = set(defaults.__dataclass_fields__)
    for key in raw:
        if key not in known:
            raise ConfigError(f"{name}.{key}", "unknown key")
    values = {}
    for key in raw:
        want = type(getattr(defaults, key))
        values[key] = _coerce(f"{name}.{key}", raw[key], want)
    return cls(**{**{k: getattr(defaults, k) for k in known}, **values})


def parse_config(raw: dict) -> PipelineConfig:
    """Validate a raw mapping: unknown keys rejected, ranges checked, env
    overrides applied to backend URLs."""
    if not isinstance(raw, dict):
        raise ConfigError("<root>", "config must be a JSON object")
    known = set(_SCALAR_TYPES) | set(_SECTIONS)
    for key in raw:
        if key not in known:
            raise ConfigError(key, "unknown key")

    cfg = PipelineConfig()
    for key, want in _SCALAR_TYPES.items():
        if key in raw:
            setattr(cfg, key, _coerce(key, raw[key], want))
    for name, cls in _SECTIONS.items():
        if name in raw:
            if not isinstance(raw[name], dict):
                raise ConfigError(name, "expected an object")
            setattr(cfg, name, _build_section(name, cls, raw[name]))

    for field_name, env_name in ENV_OVERRIDES.items():
        value = os.environ.get(env_name)
        if value:
            setattr(cfg.backends, field_name, value)

    _check_ranges(cfg)
    return cfg


def _check_ranges(cfg: PipelineConfig) -> None:
    if not (0.0 < cfg.alpha < 1.0):
        raise ConfigError("alpha", f"must be in (0, 1), got {cfg.alpha}")
    if not (0.0 < cfg.threshold < 1.0):
        raise ConfigError("threshold", f"must be in (0, 1), got {cfg.threshold}")
    if cfg.tol <= 0:
        raise ConfigError("tol", f"must be > 0, got {cfg.tol}")
    if cfg.max_iter < 1:
        raise ConfigError("max_iter", f"must be >= 1, got {cfg.max_iter}")
    if cfg.k < 1:
        raise ConfigError("k", f"must be >= 1, got {cfg.k}")
    if cfg.dim < 1:
        raise ConfigError("dim", f"must be >= 1, got {cfg.dim}")
    if cfg.modes.retrieval not in RETRIEVAL_MODES:
        raise ConfigError("modes.retrieval", f"must be one of {RETRIEVAL_MODES}")
    if cfg.modes.enhancement not in ENHANCEMENT_MODES:
        raise ConfigError("modes.enhancement", f"must be one of {ENHANCEMENT_MODES}")
    if cfg.modes.generation not in GENERATION_MODES:
        raise ConfigError("modes.generation", f"must be one of {GENERATION_MODES}")
    if cfg.limits.filter_mode not in ("tail", "head_and_tail"):
        raise ConfigError("limits.filter_mode", "must be 'tail' or 'head_and_tail'")
    for name in ("max_entities", "max_kg_triplets", "max_prompt_tokens",
                 "max_new_tokens", "parallelism"):
        if getattr(cfg.limits, name) < 1:
            raise ConfigError(f"limits.{name}", "must be >= 1")
    if cfg.limits.retries < 0:
        raise ConfigError("limits.retries", "must be >= 0")
    if cfg.limits.temperature < 0:
        raise ConfigError("limits.temperature", "must be >= 0")


def validate_config(path: str | Path) -> PipelineConfig:
    """Load and validate a JSON config file."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(str(path), "config file not found")
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(str(path), f"not valid JSON: {exc}") from exc
    return parse_config(raw)


__all__ = [
    "PipelineConfig",
    "PathsConfig",
    "BackendsConfig",
    "ModesConfig",
    "FilterRulesConfig",
    "LimitsConfig",
    "parse_config",
    "validate_config",
    "RETRIEVAL_MODES",
    "ENHANCEMENT_MODES",
    "GENERATION_MODES",
]
