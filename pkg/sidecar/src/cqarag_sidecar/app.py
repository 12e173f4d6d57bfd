"""The HTTP service: four model endpoints plus /healthz.

Endpoints conform byte-for-byte to the engine's wire protocol:

    POST /v1/embed     {"texts": [str], "model": str} -> {"vectors": [[num]], "dim": int}
    POST /v1/generate  {"prompt", "max_new_tokens", "temperature", "model"} -> {"text": str}
    POST /v1/triplets  {"text": str} -> {"triplets": [{"head","relation","tail"}]}
    POST /v1/ner       {"text": str} -> {"entities": [str]}

Disabled capabilities answer 501. Per-request failures return structured
JSON ``{"error": {"message", "retryable"}}``; a full inference queue is 429
(retryable), an oversized embed batch is 413.
"""

from __future__ import annotations

import json
import logging
import time
from contextlib import asynccontextmanager
from typing import Any

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .config import SidecarConfig
from .models import FACTORIES, ModelLoadError, QueueFullError, SerializedModel

logger = logging.getLogger("cqarag_sidecar")


class JsonLogFormatter(logging.Formatter):
    def format(self, record: logging.LogRecord) -> str:
        payload = {
            "ts": round(record.created, 3),
            "level": record.levelname,
            "logger": record.name,
            "message": record.getMessage(),
        }
        return json.dumps(payload, ensure_ascii=False)


def setup_logging(level: str = "INFO") -> None:
    handler = logging.StreamHandler()
    handler.setFormatter(JsonLogFormatter())
    root = logging.getLogger()
    root.handlers = [handler]
    root.setLevel(level)


class ModelRegistry:
    """Holds the loaded model per capability; /healthz reports readiness."""

    def __init__(self, config: SidecarConfig):
        self.config = config
        self.models: dict[str, Any] = {}
        self.gates: dict[str, SerializedModel] = {}
        self.loaded = False

    def load_all(self) -> None:
        for capability, model_id in self.config.enabled().items():
            if capability in self.models:
                continue
            logger.info("loading %s model %r", capability, model_id)
            started = time.monotonic()
            self.models[capability] = FACTORIES[capability](model_id)
            self.gates[capability] = SerializedModel(self.config.max_queue)
            logger.info("loaded %s in %.1fs", capability, time.monotonic() - started)
        self.loaded = True

    def get(self, capability: str):
        return self.models.get(capability), self.gates.get(capability)


def _error(status: int, message: str, retryable: bool) -> JSONResponse:
    return JSONResponse(status_code=status,
                        content={"error": {"message": message, "retryable": retryable}})


def create_app(config: SidecarConfig | None = None) -> FastAPI:
    config = config or SidecarConfig()
    registry = ModelRegistry(config)

    @asynccontextmanager
    async def lifespan(_app: FastAPI):
        registry.load_all()
        yield

    app = FastAPI(title="cqarag-sidecar", lifespan=lifespan)
    app.state.registry = registry

    @app.get("/healthz")
    def healthz():
        return {
            "ready": registry.loaded,
            "capabilities": {name: (name in registry.models)
                             for name in ("embed", "generate", "triplets", "ner")},
        }

    def _guarded(capability: str, fn):
        model, gate = registry.get(capability)
        if model is None:
            return _error(501, f"capability {capability!r} is not enabled", False)
        try:
            return gate.run(fn, model)
        except QueueFullError:
            return _error(429, "inference queue full", True)
        except Exception as exc:  # inference failure: structured, retryable
            logger.exception("%s inference failed", capability)
            return _error(500, f"{capability} inference failed: {exc}", True)

    @app.post("/v1/embed")
    async def embed(request: Request):
        payload = await request.json()
        texts = payload.get("texts")
        if not isinstance(texts, list) or not all(isinstance(t, str) for t in texts):
            return _error(400, "texts must be a list of strings", False)
        if len(texts) > config.max_batch:
            return _error(413, f"batch of {len(texts)} exceeds max_batch "
                               f"{config.max_batch}", False)

        def run(model):
            vectors = model.embed(texts)
            return {"vectors": vectors, "dim": model.dim}

        return _guarded("embed", run)

    @app.post("/v1/generate")
    async def generate(request: Request):
        payload = await request.json()
        prompt = payload.get("prompt")
        if not isinstance(prompt, str) or not prompt:
            return _error(400, "prompt must be a non-empty string", False)
        if len(prompt.split()) > config.prompt_token_limit:
            return _error(413, "prompt exceeds the configured token limit", False)
        max_new_tokens = payload.get("max_new_tokens", 512)
        temperature = payload.get("temperature", 0.0)
        if not isinstance(max_new_tokens, int) or max_new_tokens < 1:
            return _error(400, "max_new_tokens must be a positive integer", False)
        max_new_tokens = min(max_new_tokens, config.max_new_tokens_cap)

        def run(model):
            return {"text": model.generate(prompt, max_new_tokens, float(temperature))}

        return _guarded("generate", run)

    @app.post("/v1/triplets")
    async def triplets(request: Request):
        payload = await request.json()
        text = payload.get("text")
        if not isinstance(text, str):
            return _error(400, "text must be a string", False)

        def run(model):
            return {"triplets": model.extract(text)}

        return _guarded("triplets", run)

    @app.post("/v1/ner")
    async def ner(request: Request):
        payload = await request.json()
        text = payload.get("text")
        if not isinstance(text, str):
            return _error(400, "text must be a string", False)

        def run(model):
            return {"entities": model.entities(text)}

        return _guarded("ner", run)

    return app


def serve(config: SidecarConfig) -> None:
    """Load models eagerly, then serve; a model-load failure aborts startup
    naming the model."""
    import uvicorn

    setup_logging()
    app = create_app(config)
    try:
        app.state.registry.load_all()
    except ModelLoadError as exc:
        logger.error("startup aborted: %s", exc)
        raise SystemExit(1) from exc
    uvicorn.run(app, host=config.host, port=config.port, log_config=None)
