"""Prompt assembly and answer generation against a pluggable backend.

Two prompt templates, one per backend flavor: the plain completion cue for a
pretrained model, and the instruction markers for a model tuned on the
exported instruction dataset (so the tuned model sees its training
template). Generation goes over ``POST /v1/generate`` with retries and
exponential backoff on transient failures.
"""

from __future__ import annotations

import hashlib
import logging
import time
from dataclasses import dataclass

import requests

from .corpus import QaRecord
from .errors import BackendError, ContextLengthError
from .kg import EnhancedContext, RetrievedContext, assemble_context

logger = logging.getLogger(__name__)

MODE_PRETRAINED = "pretrained"
MODE_FINETUNED = "finetuned"


@dataclass
class GenerationRequest:
    prompt: str
    max_new_tokens: int = 512
    temperature: float = 0.0
    model_id: str = ""
    mode: str = MODE_PRETRAINED

    def __post_init__(self):
        if not self.prompt:
            raise ValueError("prompt must be non-empty")
        if self.max_new_tokens < 1:
            raise ValueError("max_new_tokens must be >= 1")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.mode not in (MODE_PRETRAINED, MODE_FINETUNED):
            raise ValueError(f"unknown mode: {self.mode!r}")


@dataclass
class GeneratedAnswer:
    query_id: str
    text: str
    model_id: str
    mode: str
    latency_ms: int
    prompt_hash: str
    retries: int = 0

    def to_json(self) -> dict:
        # latency is wall-clock noise; it lives in the run manifest, not in
        # the results file, so identical runs stay byte-identical
        return {
            "type": "answer",
            "query_id": self.query_id,
            "text": self.text,
            "model_id": self.model_id,
            "mode": self.mode,
            "prompt_hash": self.prompt_hash,
            "retries": self.retries,
        }


def prompt_hash(prompt: str) -> str:
    return hashlib.sha256(prompt.encode("utf-8")).hexdigest()


def build_prompt(query: QaRecord, ctx: EnhancedContext | None, mode: str) -> str:
    """Pure function of (query, context, mode); byte-identical across runs."""
    assembled = ctx.assembled if ctx is not None else ""
    prefix = assembled + "\n\n" if assembled else ""
    if mode == MODE_FINETUNED:
        return f"{prefix}[INST] {query.question_text()} [\\INST] Answer:"
    if mode == MODE_PRETRAINED:
        return f"{prefix}Question: {query.question_text()}\nAnswer:"
    raise ValueError(f"unknown mode: {mode!r}")


def _token_estimate(text: str) -> int:
    return len(text.split())


def fit_prompt(query: QaRecord, ctx: EnhancedContext, mode: str,
               max_prompt_tokens: int) -> tuple[EnhancedContext, str]:
    """Deterministic shrink when the prompt exceeds the token budget: drop
    KG sentences from the end first, then the lowest-ranked retrieved pair."""
    current = ctx
    prompt = build_prompt(query, current, mode)
    while _token_estimate(prompt) > max_prompt_tokens:
        if current.sentences:
            current = assemble_context(current.base, current.sentences[:-1])
        elif current.base.pairs:
            trimmed = RetrievedContext(query_id=current.base.query_id,
                                       pairs=current.base.pairs[:-1])
            current = assemble_context(trimmed, [])
        else:
            logger.warning("fit_prompt: bare prompt still exceeds %d tokens",
                           max_prompt_tokens)
            break
        prompt = build_prompt(query, current, mode)
    return current, prompt


class HttpGenerationBackend:
    """Client for the /v1/generate wire protocol."""

    def __init__(self, base_url: str, timeout: float = 120.0,
                 session: requests.Session | None = None):
        self.base_url = base_url.rstrip("/")
        self.timeout = timeout
        self.session = session or requests.Session()
        self.backend_id = f"http-generate:{self.base_url}"

    def complete(self, req: GenerationRequest) -> str:
        try:
            resp = self.session.post(
                f"{self.base_url}/v1/generate",
                json={
                    "prompt": req.prompt,
                    "max_new_tokens": req.max_new_tokens,
                    "temperature": req.temperature,
                    "model": req.model_id,
                },
                timeout=self.timeout,
            )
        except requests.RequestException as exc:
            raise BackendError(f"generation backend unreachable: {exc}",
                               retryable=True) from exc
        if resp.status_code == 413:
            raise ContextLengthError("prompt rejected as too long",
                                     token_estimate=_token_estimate(req.prompt),
                                     status=413)
        if resp.status_code != 200:
            raise BackendError(f"generation backend returned {resp.status_code}",
                               status=resp.status_code,
                               retryable=resp.status_code in (408, 429) or resp.status_code >= 500)
        payload = resp.json()
        if isinstance(payload.get("error"), dict) and \
                payload["error"].get("code") == "context_length":
            raise ContextLengthError(payload["error"].get("message", "prompt too long"),
                                     token_estimate=_token_estimate(req.prompt))
        return payload["text"]


class EchoBackend:
    """Deterministic mock: returns the prompt suffix after the last
    'Answer:' cue (possibly empty)."""

    def __init__(self, max_prompt_tokens: int | None = None):
        self.backend_id = "mock:echo"
        self.max_prompt_tokens = max_prompt_tokens

    def complete(self, req: GenerationRequest) -> str:
        if self.max_prompt_tokens is not None and \
                _token_estimate(req.prompt) > self.max_prompt_tokens:
            raise ContextLengthError("mock prompt limit exceeded",
                                     token_estimate=_token_estimate(req.prompt))
        _, _, suffix = req.prompt.rpartition("Answer:")
        return suffix.strip()


class ContextEchoBackend:
    """Deterministic mock that answers with the last non-empty answer block
    in the prompt, so offline end-to-end runs produce content-bearing text."""

    def __init__(self):
        self.backend_id = "mock:context-echo"

    def complete(self, req: GenerationRequest) -> str:
        segments = req.prompt.split("Answer:")
        for segment in reversed(segments[1:]):
            block = segment.split("\n\nQuestion:")[0].strip()
            if block:
                return block
        return ""


class ScriptedBackend:
    """Test backend that replays a script of status codes / texts."""

    def __init__(self, script: list):
        self.backend_id = "mock:scripted"
        self.script = list(script)
        self.calls = 0

    def complete(self, req: GenerationRequest) -> str:
        self.calls += 1
        step = self.script.pop(0) if self.script else 500
        if isinstance(step, int):
            raise BackendError(f"scripted status {step}", status=step,
                               retryable=step in (408, 429) or step >= 500)
        if isinstance(step, Exception):
            raise step
        return step


def generate(req: GenerationRequest, backend, query_id: str = "",
             max_retries: int = 3, backoff_s: float = 0.25) -> GeneratedAnswer:
    """Run one generation, retrying transient failures with exponential
    backoff; the backend's text is captured verbatim."""
    retries = 0
    start = time.monotonic()
    while True:
        try:
            text = backend.complete(req)
            break
        except ContextLengthError:
            raise
        except BackendError as exc:
            if not exc.retryable or retries >= max_retries:
                raise
            delay = backoff_s * (2 ** retries)
            retries += 1
            logger.info("generate: transient failure (%s), retry %d/%d in %.2fs",
                        exc, retries, max_retries, delay)
            if delay > 0:
                time.sleep(delay)
    latency_ms = int((time.monotonic() - start) * 1000)
    return GeneratedAnswer(
        query_id=query_id,
        text=text,
        model_id=req.model_id,
        mode=req.mode,
        latency_ms=latency_ms,
        prompt_hash=prompt_hash(req.prompt),
        retries=retries,
    )


__all__ = [
    "MODE_PRETRAINED",
    "MODE_FINETUNED",
    "GenerationRequest",
    "GeneratedAnswer",
    "build_prompt",
    "fit_prompt",
    "prompt_hash",
    "HttpGenerationBackend",
    "EchoBackend",
    "ContextEchoBackend",
    "ScriptedBackend",
    "generate",
]
