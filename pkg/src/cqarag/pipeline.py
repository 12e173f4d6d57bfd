"""End-to-end orchestration: ingest, embed, graph, retrieve, enhance,
generate, evaluate.

The run directory keeps a manifest with the config snapshot, content hashes
of the inputs and per-stage durations; stages are skipped when their input
fingerprint is unchanged (force with ``--force-stage``). Results and report
files contain no wall-clock values, so two runs with identical inputs and
deterministic backends are byte-identical.

Mode flags select the pipeline variant: ``retrieval`` is either the
PPR walk over the question graph or a plain cosine ranking; ``enhancement``
toggles the knowledge-graph pass; ``generation`` picks the prompt template.
"""

from __future__ import annotations

import hashlib
import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

from . import corpus as corpus_mod
from . import evaluate as evaluate_mod
from .config import PipelineConfig
from .embedding import (
    EmbeddingCache,
    EmbeddingVector,
    HashEmbeddingBackend,
    HttpEmbeddingBackend,
    TokenHashEmbeddingBackend,
    cosine,
    embed_corpus,
    embed_text,
)
from .errors import CqaragError, DataError, ZeroNormError
from .generation import (
    ContextEchoBackend,
    EchoBackend,
    GenerationRequest,
    HttpGenerationBackend,
    fit_prompt,
    generate,
)
from .graph import QQGraph, build_graph, extend_with_query, load_graph, save_graph
from .kg import (
    FixtureKgBackend,
    HttpExtractorBackend,
    KgCache,
    LlmTripletExtractor,
    RetrievedContext,
    RuleTripletExtractor,
    WikidataHttpBackend,
    assemble_context,
    enhance,
)
from .metrics import HttpNerBackend, RuleNerBackend
from .ppr import RetrievalSet, cosine_top_k, query_aware_pagerank, top_k

logger = logging.getLogger(__name__)

RESULTS_SCHEMA = "cqarag-results/v1"


# ---------------------------------------------------------------- backends

def make_embed_backend(cfg: PipelineConfig):
    url = cfg.backends.embed
    if url.startswith("mock://token-hash"):
        return TokenHashEmbeddingBackend(dim=cfg.dim)
    if url.startswith("mock://hash"):
        return HashEmbeddingBackend(dim=cfg.dim)
    return HttpEmbeddingBackend(url, model=cfg.backends.embed_model, dim=cfg.dim)


def make_generation_backend(cfg: PipelineConfig):
    url = cfg.backends.generate
    if url == "mock://echo":
        return EchoBackend()
    if url == "mock://context-echo":
        return ContextEchoBackend()
    return HttpGenerationBackend(url)


def make_extractors(cfg: PipelineConfig, generation_backend=None) -> list:
    extractors: list = []
    for url in cfg.backends.triplets.split(","):
        url = url.strip()
        if not url:
            continue
        if url == "mock://rule":
            extractors.append(RuleTripletExtractor())
        elif url == "llm://":
            backend = generation_backend or make_generation_backend(cfg)

            def _ask(prompt: str, _backend=backend) -> str:
                req = GenerationRequest(prompt=prompt,
                                        max_new_tokens=cfg.limits.max_new_tokens,
                                        temperature=0.0,
                                        model_id=cfg.backends.generate_model,
                                        mode="pretrained")
                return _backend.complete(req)

            extractors.append(LlmTripletExtractor(_ask))
        else:
            extractors.append(HttpExtractorBackend(url))
    if not extractors:
        raise DataError("no triplet extractors configured")
    return extractors


def make_ner_backend(cfg: PipelineConfig):
    url = cfg.backends.ner
    if url == "mock://rule":
        return RuleNerBackend()
    return HttpNerBackend(url)


def make_kg_backend(cfg: PipelineConfig):
    url = cfg.backends.kg
    if url.startswith("fixture://"):
        return FixtureKgBackend(url[len("fixture://"):])
    if cfg.paths.kg_fixture:
        return FixtureKgBackend(cfg.paths.kg_fixture)
    return WikidataHttpBackend(url)


# ---------------------------------------------------------------- retrieval

def retrieve(query_vec: EmbeddingVector, graph: QQGraph,
             vectors: dict[str, EmbeddingVector], cfg: PipelineConfig,
             query_id: str = "") -> RetrievalSet:
    """Graph-mode retrieval: extend with the query node, walk, take top k.
    A query below threshold to every corpus node retrieves nothing."""
    extended = extend_with_query(graph, query_vec, vectors)
    if not extended.query_edges:
        return RetrievalSet(query_id=query_id, items=[])
    result = query_aware_pagerank(extended, alpha=cfg.alpha,
                                  max_iter=cfg.max_iter, tol=cfg.tol)
    return top_k(result, cfg.k, query_id=query_id)


def retrieve_text(query_vec: EmbeddingVector, vectors: dict[str, EmbeddingVector],
                  cfg: PipelineConfig, query_id: str = "") -> RetrievalSet:
    """Text-mode retrieval: plain cosine ranking over the corpus."""
    sims: dict[str, float] = {}
    for qid, vec in vectors.items():
        try:
            sims[qid] = cosine(query_vec, vec)
        except ZeroNormError:
            continue
    return cosine_top_k(sims, cfg.k, query_id=query_id)


# ---------------------------------------------------------------- helpers

def _sha256_file(path: Path) -> str:
    h = hashlib.sha256()
    with path.open("rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _sha256_text(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def _dump(obj: dict) -> str:
    return json.dumps(obj, sort_keys=True, ensure_ascii=False, separators=(",", ":"))


@dataclass
class RunManifest:
    config: dict
    input_hashes: dict[str, str] = field(default_factory=dict)
    stage_fingerprints: dict[str, str] = field(default_factory=dict)
    stage_durations_s: dict[str, float] = field(default_factory=dict)
    stages_skipped: list[str] = field(default_factory=list)
    started_at: str = ""
    finished_at: str = ""
    generation_latency_ms: dict[str, int] = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "config": self.config,
            "input_hashes": self.input_hashes,
            "stage_fingerprints": self.stage_fingerprints,
            "stage_durations_s": self.stage_durations_s,
            "stages_skipped": self.stages_skipped,
            "started_at": self.started_at,
            "finished_at": self.finished_at,
            "generation_latency_ms": self.generation_latency_ms,
        }


def _load_manifest_fingerprints(path: Path) -> dict[str, str]:
    if not path.exists():
        return {}
    try:
        return json.loads(path.read_text(encoding="utf-8")).get("stage_fingerprints", {})
    except (json.JSONDecodeError, AttributeError):
        return {}


class _Timer:
    def __init__(self, manifest: RunManifest, stage: str):
        self.manifest = manifest
        self.stage = stage

    def __enter__(self):
        self.start = time.monotonic()
        return self

    def __exit__(self, *exc):
        self.manifest.stage_durations_s[self.stage] = round(
            time.monotonic() - self.start, 6)
        return False


# ---------------------------------------------------------------- the run

@dataclass
class QueryOutcome:
    query_id: str
    answer: dict | None = None
    failure: dict | None = None
    latency_ms: int = 0


def process_query(record, graph, vectors, cfg: PipelineConfig, backends: dict,
                  records_by_id: dict) -> QueryOutcome:
    """retrieve -> enhance -> generate for one query, with failure isolation."""
    qid = record.question_id
    try:
        qvec = embed_text(record.question_text(), backends["embed"], backends.get("cache"))
        if cfg.modes.retrieval == "graph":
            retrieval = retrieve(qvec, graph, vectors, cfg, query_id=qid)
        else:
            retrieval = retrieve_text(qvec, vectors, cfg, query_id=qid)

        pairs = []
        for rid, _score in retrieval.items:
            rec = records_by_id[rid]
            accepted = rec.accepted_answer()
            if accepted is not None:
                pairs.append((rec, accepted.body))
        retrieved = RetrievedContext(query_id=qid, pairs=pairs)

        if cfg.modes.enhancement == "on":
            ctx = enhance(retrieved, backends["extractors"], backends["kg"],
                          cache=backends.get("kg_cache"),
                          filter_mode=cfg.limits.filter_mode,
                          max_entities=cfg.limits.max_entities,
                          max_triplets=cfg.limits.max_kg_triplets)
        else:
            ctx = assemble_context(retrieved, [])

        ctx, prompt = fit_prompt(record, ctx, cfg.modes.generation,
                                 cfg.limits.max_prompt_tokens)
        req = GenerationRequest(prompt=prompt,
                                max_new_tokens=cfg.limits.max_new_tokens,
                                temperature=cfg.limits.temperature,
                                model_id=cfg.backends.generate_model,
                                mode=cfg.modes.generation)
        answer = generate(req, backends["generate"], query_id=qid,
                          max_retries=cfg.limits.retries)
        return QueryOutcome(query_id=qid, answer=answer.to_json(),
                            latency_ms=answer.latency_ms)
    except CqaragError as exc:
        logger.warning("query %r failed: %s", qid, exc)
        return QueryOutcome(query_id=qid, failure={
            "type": "failure", "query_id": qid, "error": str(exc),
            "error_type": type(exc).__name__,
        })


def run_batch(queries: list, graph, vectors, cfg: PipelineConfig, backends: dict,
              records_by_id: dict, out_path: str | Path,
              manifest: RunManifest | None = None) -> tuple[list[dict], list[dict]]:
    """Per-query end-to-end execution with bounded concurrency; output is a
    JSONL file with one meta header line, then answer/failure lines in
    query_id order."""
    queries = sorted(queries, key=lambda r: r.question_id)
    outcomes: list[QueryOutcome] = []
    if cfg.limits.parallelism > 1 and len(queries) > 1:
        with ThreadPoolExecutor(max_workers=cfg.limits.parallelism) as pool:
            outcomes = list(pool.map(
                lambda rec: process_query(rec, graph, vectors, cfg, backends, records_by_id),
                queries))
    else:
        outcomes = [process_query(rec, graph, vectors, cfg, backends, records_by_id)
                    for rec in queries]

    answers = [o.answer for o in outcomes if o.answer is not None]
    failures = [o.failure for o in outcomes if o.failure is not None]
    if manifest is not None:
        for o in outcomes:
            if o.answer is not None:
                manifest.generation_latency_ms[o.query_id] = o.latency_ms

    meta = {
        "type": "meta",
        "schema": RESULTS_SCHEMA,
        "retrieval": cfg.modes.retrieval,
        "enhancement": cfg.modes.enhancement,
        "generation": cfg.modes.generation,
        "model_id": cfg.backends.generate_model,
        "k": cfg.k,
        "queries": len(queries),
    }
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    with out_path.open("w", encoding="utf-8") as fh:
        fh.write(_dump(meta) + "\n")
        for outcome in sorted(outcomes, key=lambda o: o.query_id):
            line = outcome.answer if outcome.answer is not None else outcome.failure
            fh.write(_dump(line) + "\n")
    return answers, failures


def run(cfg: PipelineConfig, force_stages: set[str] | None = None) -> tuple[RunManifest, evaluate_mod.ScoreReport]:
    """Execute the full pipeline according to the config's mode flags.

    A stage failure aborts the run but still persists the manifest with the
    completed prefix recorded."""
    force_stages = force_stages or set()
    runs_dir = Path(cfg.paths.runs_dir)
    runs_dir.mkdir(parents=True, exist_ok=True)
    manifest_path = runs_dir / "manifest.json"
    previous = _load_manifest_fingerprints(manifest_path)

    manifest = RunManifest(config=cfg.to_json(),
                           started_at=datetime.now(timezone.utc).isoformat())
    try:
        report = _run_stages(cfg, manifest, previous, force_stages)
    finally:
        manifest.finished_at = datetime.now(timezone.utc).isoformat()
        manifest_path.write_text(
            json.dumps(manifest.to_json(), indent=2, sort_keys=True) + "\n",
            encoding="utf-8")
    return manifest, report


def _run_stages(cfg: PipelineConfig, manifest: RunManifest, previous: dict[str, str],
                force_stages: set[str]) -> evaluate_mod.ScoreReport:

    corpus_path = Path(cfg.paths.corpus)
    if not corpus_path.exists():
        raise DataError(f"corpus file not found: {corpus_path}")
    manifest.input_hashes["corpus"] = _sha256_file(corpus_path)
    manifest.input_hashes["config"] = _sha256_text(_dump(cfg.to_json()))

    with _Timer(manifest, "ingest"):
        records = corpus_mod.ingest(corpus_path)
        filtered = corpus_mod.filter_records(records, rules=corpus_mod.FilterConfig(
            max_question_tokens=cfg.filter.max_question_tokens,
            max_answer_tokens=cfg.filter.max_answer_tokens,
            min_answer_tokens=cfg.filter.min_answer_tokens,
        ))
        boundary = datetime.fromisoformat(cfg.split_boundary.replace("Z", "+00:00"))
        split = corpus_mod.temporal_split(filtered, boundary)

    cache_dir = Path(cfg.paths.cache_dir)
    cache_dir.mkdir(parents=True, exist_ok=True)
    embed_backend = make_embed_backend(cfg)
    cache = EmbeddingCache(cache_dir / "embeddings.jsonl")

    with _Timer(manifest, "embed"):
        vectors = embed_corpus(list(split.train), embed_backend, cache)

    graph = None
    graph_path = Path(cfg.paths.graph)
    graph_fp = _sha256_text(_dump({
        "ids": sorted(vectors),
        "backend": embed_backend.backend_id,
        "threshold": cfg.threshold,
        "dim": cfg.dim,
        "corpus": manifest.input_hashes["corpus"],
    }))
    if cfg.modes.retrieval == "graph":
        with _Timer(manifest, "graph"):
            if (graph_path.exists() and previous.get("graph") == graph_fp
                    and "graph" not in force_stages and "all" not in force_stages):
                graph = load_graph(graph_path)
                manifest.stages_skipped.append("graph")
            else:
                graph = build_graph(vectors, cfg.threshold,
                                    backend_id=embed_backend.backend_id)
                save_graph(graph, graph_path)
        # recorded only after the stage completed, so a failed run can never
        # be mistaken for a skippable one
        manifest.stage_fingerprints["graph"] = graph_fp

    generation_backend = make_generation_backend(cfg)
    backends = {
        "embed": embed_backend,
        "cache": cache,
        "generate": generation_backend,
        "extractors": make_extractors(cfg, generation_backend),
        "ner": make_ner_backend(cfg),
        "kg": make_kg_backend(cfg) if cfg.modes.enhancement == "on" else None,
        "kg_cache": KgCache(cache_dir / "kg.jsonl"),
    }
    records_by_id = {r.question_id: r for r in split.train}

    results_path = Path(cfg.paths.results)
    generate_fp = _sha256_text(_dump({
        "graph": graph_fp,
        "modes": cfg.to_json()["modes"],
        "limits": cfg.to_json()["limits"],
        "queries": sorted(r.question_id for r in split.test),
        "generate_backend": generation_backend.backend_id,
    }))
    failures: list[dict] = []
    with _Timer(manifest, "generate"):
        if (results_path.exists() and previous.get("generate") == generate_fp
                and "generate" not in force_stages and "all" not in force_stages):
            manifest.stages_skipped.append("generate")
        else:
            _, failures = run_batch(list(split.test), graph, vectors, cfg, backends,
                                    records_by_id, results_path, manifest)
    manifest.stage_fingerprints["generate"] = generate_fp
    if failures:
        logger.warning("run: %d quer(ies) failed: %s", len(failures),
                       [f["query_id"] for f in failures])

    with _Timer(manifest, "evaluate"):
        report = evaluate_mod.evaluate_run(
            cfg.paths.results, split,
            embed_backend=embed_backend,
            extractors=backends["extractors"],
            ner_backend=backends["ner"],
            report_path=cfg.paths.report,
            cache=cache,
        )
    return report


__all__ = [
    "RESULTS_SCHEMA",
    "RunManifest",
    "QueryOutcome",
    "make_embed_backend",
    "make_generation_backend",
    "make_extractors",
    "make_ner_backend",
    "make_kg_backend",
    "retrieve",
    "retrieve_text",
    "process_query",
    "run_batch",
    "run",
]
