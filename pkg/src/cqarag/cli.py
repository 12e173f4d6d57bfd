"""Command-line interface.

    cqarag ingest --corpus corpus.jsonl --out filtered.jsonl
    cqarag export-instructions --corpus corpus.jsonl --out instructions.txt
    cqarag build-graph --corpus corpus.jsonl --threshold 0.8 --out graph.json
    cqarag graph-stats --graph graph.json
    cqarag retrieve --graph graph.json --query-file queries.jsonl --k 2 \
        --alpha 0.85 --max-iter 100 --tol 1e-6
    cqarag enhance --query-file queries.jsonl --out contexts.jsonl
    cqarag generate --queries queries.jsonl --mode finetuned --backend-url URL
    cqarag evaluate --results results.jsonl --gold corpus.jsonl --report out.json
    cqarag run

Exit codes: 0 success, 2 validation error, 3 backend error, 4 data error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from datetime import datetime
from pathlib import Path

from . import corpus as corpus_mod
from . import evaluate as evaluate_mod
from . import pipeline as pipeline_mod
from .config import PipelineConfig, parse_config, validate_config
from .errors import BackendError, ConfigError, CqaragError, DataError
from .graph import build_graph, graph_stats, load_graph, save_graph
from .kg import assemble_context, enhance
from .embedding import EmbeddingCache, embed_corpus, embed_text

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_BACKEND = 3
EXIT_DATA = 4


def _load_config(args) -> PipelineConfig:
    if args.config:
        return validate_config(args.config)
    return parse_config({})


def _split_from_config(cfg: PipelineConfig, corpus_path: str):
    records = corpus_mod.ingest(corpus_path)
    filtered = corpus_mod.filter_records(records, rules=corpus_mod.FilterConfig(
        max_question_tokens=cfg.filter.max_question_tokens,
        max_answer_tokens=cfg.filter.max_answer_tokens,
        min_answer_tokens=cfg.filter.min_answer_tokens,
    ))
    boundary = datetime.fromisoformat(cfg.split_boundary.replace("Z", "+00:00"))
    return corpus_mod.temporal_split(filtered, boundary)


def cmd_ingest(args) -> int:
    cfg = _load_config(args)
    report = corpus_mod.IngestReport()
    records = corpus_mod.ingest(args.corpus or cfg.paths.corpus, report=report)
    filtered = corpus_mod.filter_records(records)
    if args.out:
        corpus_mod.write_corpus(filtered, args.out)
    print(json.dumps({"read": len(records), "kept": len(filtered),
                      "problems": len(report.problems)}))
    return EXIT_OK


def cmd_export_instructions(args) -> int:
    cfg = _load_config(args)
    split = _split_from_config(cfg, args.corpus or cfg.paths.corpus)
    count = corpus_mod.export_instructions(split, args.out or cfg.paths.instructions)
    print(json.dumps({"written": count}))
    return EXIT_OK


def cmd_build_graph(args) -> int:
    cfg = _load_config(args)
    if args.threshold is not None:
        cfg.threshold = args.threshold
        if not (0.0 < cfg.threshold < 1.0):
            raise ConfigError("threshold", f"must be in (0, 1), got {cfg.threshold}")
    split = _split_from_config(cfg, args.corpus or cfg.paths.corpus)
    backend = pipeline_mod.make_embed_backend(cfg)
    cache = EmbeddingCache(Path(cfg.paths.cache_dir) / "embeddings.jsonl") \
        if args.use_cache else None
    if cache is not None:
        Path(cfg.paths.cache_dir).mkdir(parents=True, exist_ok=True)
    vectors = embed_corpus(list(split.train), backend, cache)
    graph = build_graph(vectors, cfg.threshold, backend_id=backend.backend_id)
    save_graph(graph, args.out or cfg.paths.graph)
    print(json.dumps({"nodes": graph.n, "edges": len(graph.edges)}))
    return EXIT_OK


def cmd_graph_stats(args) -> int:
    cfg = _load_config(args)
    graph = load_graph(args.graph or cfg.paths.graph)
    print(json.dumps(graph_stats(graph), indent=2, sort_keys=True))
    return EXIT_OK


def _query_records(path: str):
    return corpus_mod.ingest(path)


def cmd_retrieve(args) -> int:
    cfg = _load_config(args)
    for name in ("k", "alpha", "max_iter", "tol"):
        value = getattr(args, name)
        if value is not None:
            setattr(cfg, name, value)
    graph = load_graph(args.graph or cfg.paths.graph)
    split = _split_from_config(cfg, args.corpus or cfg.paths.corpus)
    backend = pipeline_mod.make_embed_backend(cfg)
    vectors = embed_corpus(list(split.train), backend)
    out = {}
    for rec in _query_records(args.query_file):
        qvec = embed_text(rec.question_text(), backend)
        if cfg.modes.retrieval == "text":
            rs = pipeline_mod.retrieve_text(qvec, vectors, cfg, query_id=rec.question_id)
        else:
            rs = pipeline_mod.retrieve(qvec, graph, vectors, cfg, query_id=rec.question_id)
        out[rec.question_id] = [[qid, score] for qid, score in rs.items]
    print(json.dumps(out, indent=2, sort_keys=True))
    return EXIT_OK


def cmd_enhance(args) -> int:
    cfg = _load_config(args)
    graph = load_graph(args.graph or cfg.paths.graph)
    split = _split_from_config(cfg, args.corpus or cfg.paths.corpus)
    embed_backend = pipeline_mod.make_embed_backend(cfg)
    vectors = embed_corpus(list(split.train), embed_backend)
    records_by_id = {r.question_id: r for r in split.train}
    extractors = pipeline_mod.make_extractors(cfg)
    kg = pipeline_mod.make_kg_backend(cfg)
    out_path = Path(args.out) if args.out else None
    lines = []
    for rec in _query_records(args.query_file):
        qvec = embed_text(rec.question_text(), embed_backend)
        rs = pipeline_mod.retrieve(qvec, graph, vectors, cfg, query_id=rec.question_id)
        pairs = []
        for rid, _ in rs.items:
            hit = records_by_id[rid]
            accepted = hit.accepted_answer()
            if accepted is not None:
                pairs.append((hit, accepted.body))
        retrieved = pipeline_mod.RetrievedContext(query_id=rec.question_id, pairs=pairs)
        if cfg.modes.enhancement == "on":
            ctx = enhance(retrieved, extractors, kg,
                          filter_mode=cfg.limits.filter_mode,
                          max_entities=cfg.limits.max_entities,
                          max_triplets=cfg.limits.max_kg_triplets)
        else:
            ctx = assemble_context(retrieved, [])
        lines.append({"query_id": rec.question_id, "assembled": ctx.assembled,
                      "sentences": ctx.sentences})
    blob = "\n".join(json.dumps(line, ensure_ascii=False, sort_keys=True) for line in lines)
    if out_path:
        out_path.write_text(blob + "\n", encoding="utf-8")
    else:
        print(blob)
    return EXIT_OK


def cmd_generate(args) -> int:
    cfg = _load_config(args)
    if args.mode:
        cfg.modes.generation = args.mode
    if args.backend_url:
        cfg.backends.generate = args.backend_url
    if args.queries:
        cfg.paths.corpus = args.queries if not args.corpus else cfg.paths.corpus
    if args.corpus:
        cfg.paths.corpus = args.corpus
    if args.graph:
        cfg.paths.graph = args.graph
    if args.out:
        cfg.paths.results = args.out
    manifest, _report = pipeline_mod.run(cfg, force_stages={"generate"})
    print(json.dumps({"results": cfg.paths.results,
                      "answers": len(manifest.generation_latency_ms)}))
    return EXIT_OK


def cmd_evaluate(args) -> int:
    cfg = _load_config(args)
    split = _split_from_config(cfg, args.gold or cfg.paths.corpus)
    report = evaluate_mod.evaluate_run(
        args.results or cfg.paths.results, split,
        embed_backend=pipeline_mod.make_embed_backend(cfg),
        extractors=pipeline_mod.make_extractors(cfg),
        ner_backend=pipeline_mod.make_ner_backend(cfg),
        report_path=args.report or cfg.paths.report,
    )
    print(json.dumps(report.to_json()["macro"], indent=2, sort_keys=True))
    return EXIT_OK


def cmd_run(args) -> int:
    cfg = _load_config(args)
    force = set(args.force_stage or [])
    manifest, report = pipeline_mod.run(cfg, force_stages=force)
    print(json.dumps({
        "results": cfg.paths.results,
        "report": cfg.paths.report,
        "macro": report.to_json()["macro"],
        "skipped": manifest.stages_skipped,
    }, indent=2, sort_keys=True))
    return EXIT_OK


def cmd_validate_config(args) -> int:
    cfg = _load_config(args)
    print(json.dumps(cfg.to_json(), indent=2, sort_keys=True))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cqarag", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--config", help="path to the JSON config file")
    parser.add_argument("--force-stage", action="append",
                        help="rebuild a stage even if its inputs are unchanged "
                             "(repeatable; 'all' forces everything)")
    parser.add_argument("--log-level", default="WARNING",
                        choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="read, validate and filter a corpus")
    p.add_argument("--corpus")
    p.add_argument("--out")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("export-instructions", help="write the instruction-tuning dataset")
    p.add_argument("--corpus")
    p.add_argument("--out")
    p.set_defaults(func=cmd_export_instructions)

    p = sub.add_parser("build-graph", help="build the question similarity graph")
    p.add_argument("--corpus")
    p.add_argument("--threshold", type=float)
    p.add_argument("--out")
    p.add_argument("--use-cache", action="store_true")
    p.set_defaults(func=cmd_build_graph)

    p = sub.add_parser("graph-stats", help="density / component report for a graph file")
    p.add_argument("--graph")
    p.set_defaults(func=cmd_graph_stats)

    p = sub.add_parser("retrieve", help="rank prior questions for each query")
    p.add_argument("--graph")
    p.add_argument("--corpus")
    p.add_argument("--query-file", required=True)
    p.add_argument("--k", type=int)
    p.add_argument("--alpha", type=float)
    p.add_argument("--max-iter", type=int, dest="max_iter")
    p.add_argument("--tol", type=float)
    p.set_defaults(func=cmd_retrieve)

    p = sub.add_parser("enhance", help="build enhanced contexts for queries")
    p.add_argument("--graph")
    p.add_argument("--corpus")
    p.add_argument("--query-file", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_enhance)

    p = sub.add_parser("generate", help="run retrieval+enhancement+generation")
    p.add_argument("--graph")
    p.add_argument("--corpus")
    p.add_argument("--queries")
    p.add_argument("--mode", choices=["pretrained", "finetuned"])
    p.add_argument("--backend-url")
    p.add_argument("--out")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("evaluate", help="score a results file against gold answers")
    p.add_argument("--results")
    p.add_argument("--gold")
    p.add_argument("--report")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("run", help="execute the full pipeline")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("validate-config", help="check a config file and print the result")
    p.set_defaults(func=cmd_validate_config)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=getattr(logging, args.log_level),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except BackendError as exc:
        print(f"backend error: {exc}", file=sys.stderr)
        return EXIT_BACKEND
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except CqaragError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
