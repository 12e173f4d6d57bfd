"""Answer-quality metrics: lexical overlap, embedding similarity, fact
overlap and entity grounding.

Tokenization for the lexical metrics is fixed so numbers are stable:
lowercase, strip punctuation (Unicode category P), split on whitespace.
Degenerate conventions, chosen so fixtures are well-defined and documented
because public implementations differ: empty vs empty scores 1.0, empty vs
non-empty scores 0.0.
"""

from __future__ import annotations

import re
import unicodedata
from collections import Counter
from typing import Protocol

import numpy as np
import requests

from .embedding import EmbeddingBackend, cosine, embed_text
from .errors import BackendError
from .kernels import lcs_length
from .kg import extract_triplets

_punct_memo: dict[str, bool] = {}


def _is_punct(c: str) -> bool:
    hit = _punct_memo.get(c)
    if hit is None:
        hit = unicodedata.category(c).startswith("P")
        _punct_memo[c] = hit
    return hit


def tokenize(text: str) -> list[str]:
    return "".join(c for c in text.lower() if not _is_punct(c)).split()


def _f1(precision: float, recall: float) -> float:
    if precision + recall == 0.0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def rouge1_f(candidate: str, reference: str) -> float:
    """Unigram-overlap F1 with clipped counts."""
    c_tokens = tokenize(candidate)
    r_tokens = tokenize(reference)
    if not c_tokens and not r_tokens:
        return 1.0
    if not c_tokens or not r_tokens:
        return 0.0
    overlap = sum((Counter(c_tokens) & Counter(r_tokens)).values())
    return _f1(overlap / len(c_tokens), overlap / len(r_tokens))


def rougeL_f(candidate: str, reference: str) -> float:
    """Longest-common-subsequence F1 over the same tokenization."""
    c_tokens = tokenize(candidate)
    r_tokens = tokenize(reference)
    if not c_tokens and not r_tokens:
        return 1.0
    if not c_tokens or not r_tokens:
        return 0.0
    vocab: dict[str, int] = {}
    c_ids = [vocab.setdefault(t, len(vocab)) for t in c_tokens]
    r_ids = [vocab.setdefault(t, len(vocab)) for t in r_tokens]
    lcs = lcs_length(c_ids, r_ids)
    return _f1(lcs / len(c_tokens), lcs / len(r_tokens))


def embed_sim(candidate: str, reference: str, backend: EmbeddingBackend,
              cache=None) -> float:
    """Cosine of the two text embeddings, clamped into [0, 1].

    Zero-norm embeddings (e.g. empty text under a bag-of-tokens backend)
    follow the same degenerate convention as the lexical metrics: both
    zero scores 1.0, exactly one zero scores 0.0.
    """
    cv = embed_text(candidate, backend, cache)
    rv = embed_text(reference, backend, cache)
    c_zero = not np.any(cv.values)
    r_zero = not np.any(rv.values)
    if c_zero or r_zero:
        return 1.0 if (c_zero and r_zero) else 0.0
    return min(1.0, max(0.0, cosine(cv, rv)))


def _triplet_keys(text: str, extractors: list) -> set[tuple[str, str, str]]:
    return {t.key() for t in extract_triplets(text, extractors)}


def fact_f(candidate: str, reference: str, extractors: list) -> float:
    """F1 between the triplet sets extracted from the two texts, under
    normalized exact match on (head, relation, tail)."""
    c_set = _triplet_keys(candidate, extractors)
    r_set = _triplet_keys(reference, extractors)
    if not c_set and not r_set:
        return 1.0
    if not c_set or not r_set:
        return 0.0
    overlap = len(c_set & r_set)
    return _f1(overlap / len(c_set), overlap / len(r_set))


def triplet_overlap_count(candidate: str, reference: str, extractors: list) -> int:
    return len(_triplet_keys(candidate, extractors) & _triplet_keys(reference, extractors))


class NerBackend(Protocol):
    backend_id: str

    def entities(self, text: str) -> list[str]: ...


class HttpNerBackend:
    """Client for the /v1/ner wire protocol."""

    def __init__(self, base_url: str, timeout: float = 60.0,
                 session: requests.Session | None = None):
        self.base_url = base_url.rstrip("/")
        self.timeout = timeout
        self.session = session or requests.Session()
        self.backend_id = f"http-ner:{self.base_url}"

    def entities(self, text: str) -> list[str]:
        try:
            resp = self.session.post(f"{self.base_url}/v1/ner",
                                     json={"text": text}, timeout=self.timeout)
        except requests.RequestException as exc:
            raise BackendError(f"ner backend unreachable: {exc}", retryable=True) from exc
        if resp.status_code != 200:
            raise BackendError(f"ner backend returned {resp.status_code}",
                               status=resp.status_code,
                               retryable=resp.status_code in (408, 429) or resp.status_code >= 500)
        return [str(e) for e in resp.json().get("entities", [])]


class RuleNerBackend:
    """Offline deterministic stand-in: backtick-quoted spans plus
    capitalized words count as entities."""

    _BACKTICK = re.compile(r"`([^`]+)`")
    _CAPWORD = re.compile(r"\b[A-Z][A-Za-z0-9+\-]{1,30}\b")

    def __init__(self):
        self.backend_id = "mock:rule-ner"

    def entities(self, text: str) -> list[str]:
        found = self._BACKTICK.findall(text)
        stripped = self._BACKTICK.sub(" ", text)
        for sentence in re.split(r"[.!?\n]+", stripped):
            words = sentence.split()
            # skip sentence-initial capitalization
            found.extend(w for w in words[1:] if self._CAPWORD.fullmatch(w))
        return found


def _normalize_entities(entities: list[str]) -> set[str]:
    return {" ".join(e.lower().split()) for e in entities if e.strip()}


def entity_jaccard(candidate: str, reference: str, ner: NerBackend) -> float:
    """Intersection-over-union of the normalized entity sets; 1.0 when both
    texts contain no entities."""
    c_set = _normalize_entities(ner.entities(candidate))
    r_set = _normalize_entities(ner.entities(reference))
    if not c_set and not r_set:
        return 1.0
    union = c_set | r_set
    return len(c_set & r_set) / len(union)


DEFAULT_OVERLAP_BINS: list[tuple[int, int | None]] = [(0, 0), (1, 2), (3, 5), (6, None)]


def triplet_overlap_histogram(counts: list[int],
                              bins: list[tuple[int, int | None]] | None = None) -> list[int]:
    """Bin per-query triplet-overlap counts into (lo, hi) ranges, hi=None
    meaning unbounded; every count must land in exactly one bin."""
    bins = bins if bins is not None else DEFAULT_OVERLAP_BINS
    hist = [0] * len(bins)
    for count in counts:
        for i, (lo, hi) in enumerate(bins):
            if count >= lo and (hi is None or count <= hi):
                hist[i] += 1
                break
        else:
            raise ValueError(f"overlap count {count} fits no bin in {bins}")
    return hist


__all__ = [
    "tokenize",
    "rouge1_f",
    "rougeL_f",
    "embed_sim",
    "fact_f",
    "triplet_overlap_count",
    "NerBackend",
    "HttpNerBackend",
    "RuleNerBackend",
    "entity_jaccard",
    "triplet_overlap_histogram",
    "DEFAULT_OVERLAP_BINS",
]
