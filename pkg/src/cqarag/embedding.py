"""Text embeddings: pluggable backends, a persistent cache, cosine similarity.

Backends speak the wire protocol ``POST /v1/embed`` with request
``{"texts": [str], "model": str}`` and response
``{"vectors": [[number]], "dim": int}``. Two deterministic offline backends
ship with the package so everything downstream is testable without a model
server:

* ``HashEmbeddingBackend`` -- a hash-seeded pseudorandom unit vector per
  text. Distinct texts land nearly orthogonal; good for cache and dimension
  plumbing.
* ``TokenHashEmbeddingBackend`` -- a bag-of-tokens vector, each token hashed
  into one of ``dim`` buckets, L2-normalized. Texts sharing vocabulary get
  proportionally high cosine, which gives offline corpora a real similarity
  structure to build graphs from.

Vectors are stored in single precision; similarities are computed in double
precision. The cache file is JSONL of ``{"hash", "dim", "values"}`` with a
one-line versioned header.
"""

from __future__ import annotations

import hashlib
import json
import math
import re
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Protocol

import numpy as np
import requests

from .corpus import QaRecord
from .errors import (
    BackendError,
    DataError,
    DimensionMismatchError,
    EmbedCorpusError,
    ZeroNormError,
)

CACHE_HEADER = {"format": "cqarag-embedding-cache", "version": 1}

_TOKEN_RE = re.compile(r"\w+")


@dataclass(frozen=True)
class EmbeddingVector:
    values: np.ndarray  # float32, shape (dim,)
    dim: int

    @staticmethod
    def of(values: Iterable[float], dim: int | None = None) -> "EmbeddingVector":
        arr = np.asarray(list(values) if not isinstance(values, np.ndarray) else values,
                         dtype=np.float32)
        if arr.ndim != 1:
            raise ValueError("embedding vector must be one-dimensional")
        if dim is not None and arr.shape[0] != dim:
            raise DimensionMismatchError(dim, arr.shape[0])
        if not np.all(np.isfinite(arr)):
            raise ValueError("embedding vector has non-finite entries")
        return EmbeddingVector(values=arr, dim=int(arr.shape[0]))


class EmbeddingBackend(Protocol):
    backend_id: str
    dim: int

    def embed(self, texts: list[str]) -> list[list[float]]: ...


class HttpEmbeddingBackend:
    """Client for the /v1/embed wire protocol."""

    def __init__(self, base_url: str, model: str, dim: int, timeout: float = 30.0,
                 session: requests.Session | None = None):
        self.base_url = base_url.rstrip("/")
        self.model = model
        self.dim = dim
        self.timeout = timeout
        self.session = session or requests.Session()
        self.backend_id = f"http:{model}"

    def embed(self, texts: list[str]) -> list[list[float]]:
        try:
            resp = self.session.post(
                f"{self.base_url}/v1/embed",
                json={"texts": texts, "model": self.model},
                timeout=self.timeout,
            )
        except requests.RequestException as exc:
            raise BackendError(f"embed backend unreachable: {exc}", retryable=True) from exc
        if resp.status_code != 200:
            raise BackendError(
                f"embed backend returned {resp.status_code}",
                status=resp.status_code,
                retryable=resp.status_code in (408, 429) or resp.status_code >= 500,
            )
        payload = resp.json()
        if payload.get("dim") != self.dim:
            raise DimensionMismatchError(self.dim, int(payload.get("dim", -1)))
        return payload["vectors"]


class HashEmbeddingBackend:
    """Deterministic mock: a seeded pseudorandom unit vector per text."""

    def __init__(self, dim: int = 1024):
        self.dim = dim
        self.backend_id = f"mock:hash:{dim}"

    def embed(self, texts: list[str]) -> list[list[float]]:
        out = []
        for text in texts:
            seed = int.from_bytes(hashlib.sha256(text.encode("utf-8")).digest()[:8], "big")
            rng = np.random.default_rng(seed)
            v = rng.standard_normal(self.dim)
            v /= np.linalg.norm(v)
            out.append(v.astype(np.float32).tolist())
        return out


class TokenHashEmbeddingBackend:
    """Deterministic mock: token counts hashed into dim buckets, L2-normalized."""

    def __init__(self, dim: int = 1024):
        self.dim = dim
        self.backend_id = f"mock:token-hash:{dim}"

    def _bucket(self, token: str) -> int:
        digest = hashlib.sha256(token.encode("utf-8")).digest()
        return int.from_bytes(digest[:8], "big") % self.dim

    def embed(self, texts: list[str]) -> list[list[float]]:
        out = []
        for text in texts:
            v = np.zeros(self.dim, dtype=np.float64)
            for token in _TOKEN_RE.findall(text.lower()):
                v[self._bucket(token)] += 1.0
            norm = np.linalg.norm(v)
            if norm > 0:
                v /= norm
            out.append(v.astype(np.float32).tolist())
        return out


def content_hash(text: str, backend_id: str) -> str:
    h = hashlib.sha256()
    h.update(backend_id.encode("utf-8"))
    h.update(b"\x00")
    h.update(text.encode("utf-8"))
    return h.hexdigest()


class EmbeddingCache:
    """File-backed map from content hash to vector.

    Safe for concurrent insertion of distinct keys: the in-memory dict and
    the append-only file are both guarded by a lock. A cache hit returns a
    bit-identical vector to the one originally stored.
    """

    def __init__(self, path: str | Path | None = None):
        self.path = Path(path) if path is not None else None
        self._entries: dict[str, EmbeddingVector] = {}
        self._lock = threading.Lock()
        if self.path is not None and self.path.exists():
            self._load()

    def _load(self) -> None:
        with self.path.open("r", encoding="utf-8") as fh:
            header_line = fh.readline()
            if not header_line.strip():
                return
            try:
                header = json.loads(header_line)
            except json.JSONDecodeError as exc:
                raise DataError(f"corrupt cache header in {self.path}") from exc
            if header.get("format") != CACHE_HEADER["format"]:
                raise DataError(f"not an embedding cache: {self.path}")
            if header.get("version") != CACHE_HEADER["version"]:
                raise DataError(f"unsupported cache version {header.get('version')}")
            for line in fh:
                if not line.strip():
                    continue
                obj = json.loads(line)
                vec = np.asarray(obj["values"], dtype=np.float32)
                self._entries[obj["hash"]] = EmbeddingVector(values=vec, dim=int(obj["dim"]))

    def __len__(self) -> int:
        return len(self._entries)

    def get(self, key: str) -> EmbeddingVector | None:
        with self._lock:
            return self._entries.get(key)

    def put(self, key: str, vector: EmbeddingVector) -> None:
        with self._lock:
            if key in self._entries:
                return
            self._entries[key] = vector
            if self.path is None:
                return
            is_new = not self.path.exists()
            with self.path.open("a", encoding="utf-8") as fh:
                if is_new:
                    fh.write(json.dumps(CACHE_HEADER) + "\n")
                fh.write(json.dumps({
                    "hash": key,
                    "dim": vector.dim,
                    "values": [float(x) for x in vector.values],
                }) + "\n")


def embed_text(text: str, backend: EmbeddingBackend,
               cache: EmbeddingCache | None = None) -> EmbeddingVector:
    key = content_hash(text, backend.backend_id)
    if cache is not None:
        hit = cache.get(key)
        if hit is not None:
            return hit
    raw = backend.embed([text])[0]
    vec = EmbeddingVector.of(raw, dim=backend.dim)
    if cache is not None:
        cache.put(key, vec)
    return vec


def embed_question(record: QaRecord, backend: EmbeddingBackend,
                   cache: EmbeddingCache | None = None) -> EmbeddingVector:
    """Vector for title + "\\n" + body, cached on first computation."""
    return embed_text(record.question_text(), backend, cache)


def embed_corpus(records: list[QaRecord], backend: EmbeddingBackend,
                 cache: EmbeddingCache | None = None,
                 batch_size: int = 32) -> dict[str, EmbeddingVector]:
    """One vector per record; failures are collected per id and raised as an
    aggregate at the end (partial results attached to the error)."""
    out: dict[str, EmbeddingVector] = {}
    failed: list[str] = []
    pending: list[QaRecord] = []

    def flush() -> None:
        if not pending:
            return
        texts = [r.question_text() for r in pending]
        try:
            raw = backend.embed(texts)
            for rec, values in zip(pending, raw):
                vec = EmbeddingVector.of(values, dim=backend.dim)
                if cache is not None:
                    cache.put(content_hash(rec.question_text(), backend.backend_id), vec)
                out[rec.question_id] = vec
        except (BackendError, ValueError):
            # retry singly so one bad record doesn't fail the batch
            for rec in pending:
                try:
                    out[rec.question_id] = embed_text(rec.question_text(), backend, cache)
                except (BackendError, ValueError):
                    failed.append(rec.question_id)
        pending.clear()

    for rec in records:
        if cache is not None:
            hit = cache.get(content_hash(rec.question_text(), backend.backend_id))
            if hit is not None:
                out[rec.question_id] = hit
                continue
        pending.append(rec)
        if len(pending) >= batch_size:
            flush()
    flush()

    if failed:
        raise EmbedCorpusError(failed, partial=out)
    return out


def cosine(a: EmbeddingVector, b: EmbeddingVector) -> float:
    """dot(a,b)/(|a||b|) in double precision; raises ZeroNormError on a
    zero-norm input."""
    if a.dim != b.dim:
        raise ValueError(f"dimension mismatch: {a.dim} vs {b.dim}")
    av = a.values.astype(np.float64)
    bv = b.values.astype(np.float64)
    na = math.sqrt(float(av @ av))
    nb = math.sqrt(float(bv @ bv))
    if na == 0.0 or nb == 0.0:
        raise ZeroNormError("cosine undefined for zero-norm vector")
    return float(av @ bv) / (na * nb)


__all__ = [
    "EmbeddingVector",
    "EmbeddingBackend",
    "HttpEmbeddingBackend",
    "HashEmbeddingBackend",
    "TokenHashEmbeddingBackend",
    "EmbeddingCache",
    "embed_text",
    "embed_question",
    "embed_corpus",
    "cosine",
    "content_hash",
]
