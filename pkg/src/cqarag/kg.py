"""Context enhancement: triplet extraction, entity-set building, one-hop
knowledge-graph expansion, filtering, verbalization and prompt assembly.

The enhancement pass over a retrieved context is:

1. extract (head, relation, tail) triplets from the retrieved Q&A text with
   every configured extractor (an LLM behind the /v1/generate protocol, a
   relation-extraction service behind /v1/triplets, or the offline rule
   extractor);
2. collect the entity set from those triplets;
3. pull one-hop statements for each entity from the knowledge graph;
4. keep only expansion triplets whose tail is already in the entity set
   (heads are members by construction);
5. union with the initial triplets, verbalize each as
   "{head} {relation} {tail}", and append the sentences to the retrieved
   context under a fixed bridge line.
"""

from __future__ import annotations

import json
import logging
import re
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Protocol

import requests

from .corpus import QaRecord
from .errors import BackendError, ExtractionError, KgExpansionError

logger = logging.getLogger(__name__)

BRIDGE_LINE = "Question: What could be the important context to answer this?\nAnswer:\n"

SOURCE_LLM = "llm"
SOURCE_REBEL = "rebel"
SOURCE_WIKIDATA = "wikidata"


def _norm(text: str) -> str:
    """Trim and collapse internal whitespace."""
    return " ".join(text.split())


@dataclass(frozen=True)
class Triplet:
    head: str
    relation: str
    tail: str
    sources: tuple[str, ...]

    @staticmethod
    def of(head: str, relation: str, tail: str, source: str) -> "Triplet":
        return Triplet(_norm(head), _norm(relation), _norm(tail), (source,))

    @property
    def source(self) -> str:
        return self.sources[0]

    def key(self) -> tuple[str, str, str]:
        return (self.head, self.relation, self.tail)


class EntitySet:
    """Entities from the initial triplets; membership is case-insensitive
    on normalized strings."""

    def __init__(self, entities: Iterable[str] = ()):
        self._entities: dict[str, str] = {}
        for e in entities:
            self.add(e)

    def add(self, entity: str) -> None:
        e = _norm(entity)
        if e:
            self._entities.setdefault(e.casefold(), e)

    def __contains__(self, entity: str) -> bool:
        return _norm(entity).casefold() in self._entities

    def __len__(self) -> int:
        return len(self._entities)

    def __iter__(self):
        return iter(sorted(self._entities.values()))


class ExtractorBackend(Protocol):
    backend_id: str

    def extract(self, text: str) -> list[dict]: ...


class HttpExtractorBackend:
    """Client for the /v1/triplets wire protocol (e.g. a REBEL service)."""

    source = SOURCE_REBEL

    def __init__(self, base_url: str, timeout: float = 60.0,
                 session: requests.Session | None = None):
        self.base_url = base_url.rstrip("/")
        self.timeout = timeout
        self.session = session or requests.Session()
        self.backend_id = f"http-triplets:{self.base_url}"

    def extract(self, text: str) -> list[dict]:
        try:
            resp = self.session.post(f"{self.base_url}/v1/triplets",
                                     json={"text": text}, timeout=self.timeout)
        except requests.RequestException as exc:
            raise BackendError(f"triplet backend unreachable: {exc}", retryable=True) from exc
        if resp.status_code != 200:
            raise BackendError(f"triplet backend returned {resp.status_code}",
                               status=resp.status_code,
                               retryable=resp.status_code in (408, 429) or resp.status_code >= 500)
        return resp.json().get("triplets", [])


LLM_EXTRACTION_PROMPT = (
    "Extract (head, relation, tail) triplets from the following text. "
    "Output one per line as head | relation | tail.\n\n{text}"
)


class LlmTripletExtractor:
    """Triplet extraction by prompting a generation backend and parsing
    'head | relation | tail' lines, tolerant to extra whitespace."""

    source = SOURCE_LLM

    def __init__(self, generate, backend_id: str = "llm-extractor"):
        # ``generate`` is a callable(prompt: str) -> str
        self._generate = generate
        self.backend_id = backend_id

    def extract(self, text: str) -> list[dict]:
        raw = self._generate(LLM_EXTRACTION_PROMPT.format(text=text))
        items = []
        for line in raw.splitlines():
            parts = [p.strip() for p in line.split("|")]
            if len(parts) != 3:
                continue
            items.append({"head": parts[0], "relation": parts[1], "tail": parts[2]})
        return items


class RuleTripletExtractor:
    """Offline deterministic extractor: matches simple copula/usage phrasing
    sentence by sentence. A stand-in for a live model, not a real RE system."""

    source = SOURCE_REBEL

    _PATTERNS = [
        re.compile(r"^(?P<head>.{1,60}?)\s+(?P<rel>is used (?:to|for)\s+\w+)\s+(?P<tail>.{1,80}?)$"),
        re.compile(r"^(?P<head>.{1,60}?)\s+(?P<rel>is|are)\s+(?P<tail>(?:an?|the)\s+.{1,80}?)$"),
        re.compile(r"^(?P<head>.{1,60}?)\s+(?P<rel>runs on|requires|supports|replaces|uses)\s+(?P<tail>.{1,80}?)$"),
    ]

    def __init__(self):
        self.backend_id = "mock:rule-extractor"

    def extract(self, text: str) -> list[dict]:
        items = []
        # colons split off "Question:"/"Answer:" labels in rendered contexts
        for sentence in re.split(r"[.\n;:]+", text):
            sentence = _norm(sentence)
            if not sentence:
                continue
            for pattern in self._PATTERNS:
                m = pattern.match(sentence)
                if m:
                    items.append({"head": m.group("head"), "relation": m.group("rel"),
                                  "tail": m.group("tail")})
                    break
        return items


@dataclass
class ExtractStats:
    dropped_malformed: int = 0
    failed_backends: list[str] = field(default_factory=list)


def extract_triplets(text: str, extractors: list, stats: ExtractStats | None = None) -> list[Triplet]:
    """Union of all extractor outputs, normalized and deduplicated on
    (head, relation, tail) with all contributing sources recorded. Malformed
    items are dropped and counted; a partial backend failure is a warning,
    all backends failing is an error."""
    if not extractors:
        raise ValueError("extract_triplets: no extractors configured")
    stats = stats if stats is not None else ExtractStats()
    if not text.strip():
        return []

    by_key: dict[tuple[str, str, str], Triplet] = {}
    failures = 0
    for extractor in extractors:
        source = getattr(extractor, "source", SOURCE_LLM)
        try:
            items = extractor.extract(text)
        except BackendError as exc:
            failures += 1
            stats.failed_backends.append(extractor.backend_id)
            logger.warning("extractor %s failed: %s", extractor.backend_id, exc)
            continue
        for item in items:
            head = _norm(str(item.get("head", "")))
            relation = _norm(str(item.get("relation", "")))
            tail = _norm(str(item.get("tail", "")))
            if not head or not relation or not tail:
                stats.dropped_malformed += 1
                continue
            key = (head, relation, tail)
            prev = by_key.get(key)
            if prev is None:
                by_key[key] = Triplet(head, relation, tail, (source,))
            elif source not in prev.sources:
                by_key[key] = Triplet(head, relation, tail, prev.sources + (source,))
    if failures == len(extractors):
        raise ExtractionError("all triplet extractors failed", retryable=True)
    return list(by_key.values())


def build_entity_set(triplets: list[Triplet]) -> EntitySet:
    entities = EntitySet()
    for t in triplets:
        entities.add(t.head)
        entities.add(t.tail)
    return entities


class KgBackend(Protocol):
    backend_id: str

    def neighbors(self, entity: str) -> list[tuple[str, str]] | None:
        """One-hop (relation, tail) statements for the entity, or None when
        the entity resolves to nothing."""


class FixtureKgBackend:
    """Knowledge graph read from a local JSON fixture:
    {"entities": {"<label>": {"id": str, "aliases": [str],
                              "statements": [[relation, tail], ...]}}}.
    Resolution: exact label match first, then case-insensitive label/alias.
    """

    def __init__(self, path: str | Path):
        self.path = Path(path)
        data = json.loads(self.path.read_text(encoding="utf-8"))
        self._entities: dict[str, dict] = data.get("entities", {})
        self._by_fold: dict[str, list[str]] = {}
        for label, info in self._entities.items():
            self._by_fold.setdefault(label.casefold(), []).append(label)
            for alias in info.get("aliases", []):
                self._by_fold.setdefault(str(alias).casefold(), []).append(label)
        self.backend_id = f"fixture:{self.path.name}"
        self.ambiguous = 0

    def _resolve(self, entity: str) -> str | None:
        entity = _norm(entity)
        if entity in self._entities:
            return entity
        labels = self._by_fold.get(entity.casefold(), [])
        if not labels:
            return None
        if len(set(labels)) > 1:
            self.ambiguous += 1
        return labels[0]

    def neighbors(self, entity: str) -> list[tuple[str, str]] | None:
        label = self._resolve(entity)
        if label is None:
            return None
        return [(str(r), str(t)) for r, t in self._entities[label].get("statements", [])]


class WikidataHttpBackend:
    """Live Wikidata client: entity search then statement fetch, English
    labels; property labels are used verbatim as relation strings."""

    def __init__(self, base_url: str = "https://www.wikidata.org", timeout: float = 30.0,
                 session: requests.Session | None = None):
        self.base_url = base_url.rstrip("/")
        self.timeout = timeout
        self.session = session or requests.Session()
        self.backend_id = f"wikidata:{self.base_url}"
        self.ambiguous = 0
        self._prop_labels: dict[str, str] = {}

    def _get(self, params: dict) -> dict:
        try:
            resp = self.session.get(f"{self.base_url}/w/api.php", params=params,
                                    timeout=self.timeout)
        except requests.RequestException as exc:
            raise BackendError(f"wikidata unreachable: {exc}", retryable=True) from exc
        if resp.status_code != 200:
            raise BackendError(f"wikidata returned {resp.status_code}",
                               status=resp.status_code, retryable=resp.status_code >= 500)
        return resp.json()

    def _search(self, entity: str) -> str | None:
        payload = self._get({
            "action": "wbsearchentities", "search": entity, "language": "en",
            "type": "item", "limit": 5, "format": "json",
        })
        matches = payload.get("search", [])
        if not matches:
            return None
        fold = entity.casefold()
        exact = [m for m in matches if m.get("label", "") == entity]
        ci = [m for m in matches
              if m.get("label", "").casefold() == fold
              or any(a.casefold() == fold for a in m.get("aliases", []) or [])]
        chosen = (exact or ci or matches)
        if len(chosen) > 1:
            self.ambiguous += 1
        return chosen[0]["id"]

    def _property_label(self, pid: str) -> str:
        if pid not in self._prop_labels:
            payload = self._get({
                "action": "wbgetentities", "ids": pid, "props": "labels",
                "languages": "en", "format": "json",
            })
            label = (payload.get("entities", {}).get(pid, {})
                     .get("labels", {}).get("en", {}).get("value", pid))
            self._prop_labels[pid] = label
        return self._prop_labels[pid]

    def neighbors(self, entity: str) -> list[tuple[str, str]] | None:
        qid = self._search(_norm(entity))
        if qid is None:
            return None
        payload = self._get({
            "action": "wbgetentities", "ids": qid, "props": "claims",
            "languages": "en", "format": "json",
        })
        claims = payload.get("entities", {}).get(qid, {}).get("claims", {})
        item_targets: dict[str, list[str]] = {}
        for pid, statements in claims.items():
            for st in statements:
                value = st.get("mainsnak", {}).get("datavalue", {}).get("value")
                if isinstance(value, dict) and value.get("entity-type") == "item":
                    item_targets.setdefault(pid, []).append(value["id"])
        out: list[tuple[str, str]] = []
        target_ids = sorted({t for ts in item_targets.values() for t in ts})
        labels: dict[str, str] = {}
        for i in range(0, len(target_ids), 50):
            chunk = target_ids[i:i + 50]
            payload = self._get({
                "action": "wbgetentities", "ids": "|".join(chunk), "props": "labels",
                "languages": "en", "format": "json",
            })
            for tid, ent in payload.get("entities", {}).items():
                labels[tid] = ent.get("labels", {}).get("en", {}).get("value", tid)
        for pid in sorted(item_targets):
            rel = self._property_label(pid)
            for tid in item_targets[pid]:
                out.append((rel, labels.get(tid, tid)))
        return out


class KgCache:
    """JSONL cache of one-hop expansions keyed by entity label + backend id."""

    def __init__(self, path: str | Path | None = None):
        self.path = Path(path) if path is not None else None
        self._entries: dict[str, list[tuple[str, str]] | None] = {}
        self._lock = threading.Lock()
        if self.path is not None and self.path.exists():
            with self.path.open("r", encoding="utf-8") as fh:
                for line in fh:
                    if not line.strip():
                        continue
                    obj = json.loads(line)
                    key = f"{obj['backend']}\x00{obj['entity']}"
                    if obj.get("resolved", True):
                        self._entries[key] = [(r, t) for r, t in obj["statements"]]
                    else:
                        self._entries[key] = None

    def get(self, backend_id: str, entity: str, default="missing"):
        with self._lock:
            return self._entries.get(f"{backend_id}\x00{entity}", default)

    def put(self, backend_id: str, entity: str,
            statements: list[tuple[str, str]] | None) -> None:
        key = f"{backend_id}\x00{entity}"
        with self._lock:
            if key in self._entries:
                return
            self._entries[key] = statements
            if self.path is None:
                return
            with self.path.open("a", encoding="utf-8") as fh:
                fh.write(json.dumps({
                    "backend": backend_id,
                    "entity": entity,
                    "resolved": statements is not None,
                    "statements": statements or [],
                }, ensure_ascii=False) + "\n")


@dataclass
class ExpandStats:
    skipped_unresolved: int = 0
    entities_over_budget: int = 0
    triplets_over_budget: int = 0


def expand_via_kg(entities: EntitySet, kg: KgBackend, cache: KgCache | None = None,
                  max_entities: int = 25, max_triplets: int = 200,
                  stats: ExpandStats | None = None) -> list[Triplet]:
    """One-hop expansion for every resolvable entity; unresolvable entities
    are skipped with a counter, budget overflow is logged, and a cold-cache
    backend failure raises with the entities left unexpanded."""
    stats = stats if stats is not None else ExpandStats()
    ordered = list(entities)
    if len(ordered) > max_entities:
        stats.entities_over_budget = len(ordered) - max_entities
        logger.info("expand_via_kg: %d entities over budget (max %d)",
                    stats.entities_over_budget, max_entities)
        ordered = ordered[:max_entities]

    out: list[Triplet] = []
    unexpanded: list[str] = []
    for entity in ordered:
        statements = cache.get(kg.backend_id, entity) if cache is not None else "missing"
        if statements == "missing":
            try:
                statements = kg.neighbors(entity)
            except BackendError:
                unexpanded.append(entity)
                continue
            if cache is not None:
                cache.put(kg.backend_id, entity, statements)
        if statements is None:
            stats.skipped_unresolved += 1
            continue
        for relation, tail in statements:
            if len(out) >= max_triplets:
                stats.triplets_over_budget += 1
                continue
            out.append(Triplet.of(entity, relation, tail, SOURCE_WIKIDATA))
    if unexpanded:
        raise KgExpansionError(unexpanded)
    if stats.triplets_over_budget:
        logger.info("expand_via_kg: %d candidate triplets over budget (max %d)",
                    stats.triplets_over_budget, max_triplets)
    return out


def filter_kg_triplets(candidates: list[Triplet], entities: EntitySet,
                       mode: str = "tail") -> list[Triplet]:
    """Keep an expansion triplet iff its tail is in the entity set
    (mode "tail", the default) or both ends are (mode "head_and_tail").
    Matching is case-insensitive on normalized strings."""
    if mode not in ("tail", "head_and_tail"):
        raise ValueError(f"unknown filter mode: {mode!r}")
    for t in candidates:
        if t.source != SOURCE_WIKIDATA:
            raise ValueError("filter_kg_triplets expects knowledge-graph triplets only")
    if mode == "tail":
        return [t for t in candidates if t.tail in entities]
    return [t for t in candidates if t.tail in entities and t.head in entities]


def merge_triplets(initial: list[Triplet], filtered_kg: list[Triplet]) -> list[Triplet]:
    """Set union on (head, relation, tail): initial first, then expansion,
    first occurrence wins."""
    seen: set[tuple[str, str, str]] = set()
    out: list[Triplet] = []
    for t in list(initial) + list(filtered_kg):
        if t.key() in seen:
            continue
        seen.add(t.key())
        out.append(t)
    return out


def verbalize(triplets: list[Triplet]) -> list[str]:
    """One sentence per distinct triplet: "{head} {relation} {tail}"."""
    seen: set[str] = set()
    out: list[str] = []
    for t in triplets:
        sentence = f"{t.head} {t.relation} {t.tail}"
        if sentence in seen:
            continue
        seen.add(sentence)
        out.append(sentence)
    return out


@dataclass
class RetrievedContext:
    query_id: str
    pairs: list[tuple[QaRecord, str]]  # (record, accepted answer text), retrieval order


@dataclass
class EnhancedContext:
    base: RetrievedContext
    sentences: list[str]
    assembled: str


def render_retrieved(retrieved: RetrievedContext) -> str:
    return "".join(
        f"Question: {rec.question_text()}\n\nAnswer: {answer}\n\n"
        for rec, answer in retrieved.pairs
    )


def assemble_context(retrieved: RetrievedContext, sentences: list[str]) -> EnhancedContext:
    """Retrieved Q&A blocks, the bridge line, then one sentence per line;
    duplicate sentences keep their first occurrence only."""
    deduped: list[str] = []
    seen: set[str] = set()
    for s in sentences:
        if s in seen:
            continue
        seen.add(s)
        deduped.append(s)
    assembled = render_retrieved(retrieved) + BRIDGE_LINE + "\n".join(deduped)
    return EnhancedContext(base=retrieved, sentences=deduped, assembled=assembled)


def enhance(retrieved: RetrievedContext, extractors: list, kg: KgBackend,
            cache: KgCache | None = None, filter_mode: str = "tail",
            max_entities: int = 25, max_triplets: int = 200) -> EnhancedContext:
    """The full enhancement pass over one retrieved context."""
    text = render_retrieved(retrieved)
    initial = extract_triplets(text, extractors)
    entities = build_entity_set(initial)
    candidates = expand_via_kg(entities, kg, cache=cache,
                               max_entities=max_entities, max_triplets=max_triplets)
    kept = filter_kg_triplets(candidates, entities, mode=filter_mode)
    merged = merge_triplets(initial, kept)
    return assemble_context(retrieved, verbalize(merged))


__all__ = [
    "Triplet",
    "EntitySet",
    "ExtractorBackend",
    "HttpExtractorBackend",
    "LlmTripletExtractor",
    "RuleTripletExtractor",
    "LLM_EXTRACTION_PROMPT",
    "ExtractStats",
    "extract_triplets",
    "build_entity_set",
    "KgBackend",
    "FixtureKgBackend",
    "WikidataHttpBackend",
    "KgCache",
    "ExpandStats",
    "expand_via_kg",
    "filter_kg_triplets",
    "merge_triplets",
    "verbalize",
    "RetrievedContext",
    "EnhancedContext",
    "render_retrieved",
    "assemble_context",
    "enhance",
    "BRIDGE_LINE",
    "SOURCE_LLM",
    "SOURCE_REBEL",
    "SOURCE_WIKIDATA",
]
