"""Scoring of generated answers against the gold accepted answers.

Produces a ScoreReport: per-query lexical, embedding and fact scores, their
macro averages, and the grounding section (mean entity Jaccard plus the
triplet-overlap histogram). Assembly is a single reduction ordered by
query_id, so reports are deterministic given deterministic backends.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

from .corpus import CorpusSplit
from .errors import DataError
from .metrics import (
    DEFAULT_OVERLAP_BINS,
    embed_sim,
    entity_jaccard,
    fact_f,
    rouge1_f,
    rougeL_f,
    triplet_overlap_count,
    triplet_overlap_histogram,
)

logger = logging.getLogger(__name__)

PER_QUERY_FIELDS = ("rouge1_f", "rougeL_f", "embed_sim", "fact_f")


@dataclass
class ScoreReport:
    per_query: dict[str, dict[str, float]]
    macro: dict[str, float]
    grounding: dict
    excluded: list[dict] = field(default_factory=list)
    # reserved for an external token-level alignment scorer (/v1/score)
    external_scores: dict[str, float] = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "per_query": {qid: dict(scores) for qid, scores in sorted(self.per_query.items())},
            "macro": dict(self.macro),
            "grounding": self.grounding,
            "excluded": self.excluded,
            "external_scores": self.external_scores,
            "counts": {"scored": len(self.per_query), "excluded": len(self.excluded)},
        }


def read_results(path: str | Path) -> list[dict]:
    """Answer records from a results JSONL (meta and failure lines skipped)."""
    out = []
    with Path(path).open("r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"results file line {line_no} is not JSON") from exc
            if obj.get("type") == "answer":
                out.append(obj)
    return out


def evaluate_answers(answers: list[dict], gold: CorpusSplit, *,
                     embed_backend, extractors: list, ner_backend,
                     overlap_bins=None, cache=None) -> ScoreReport:
    gold_by_id = {}
    for rec in gold.test:
        accepted = rec.accepted_answer()
        if accepted is not None:
            gold_by_id[rec.question_id] = accepted.body

    per_query: dict[str, dict[str, float]] = {}
    excluded: list[dict] = []
    jaccards: list[float] = []
    overlap_counts: list[int] = []

    for answer in sorted(answers, key=lambda a: a["query_id"]):
        qid = answer["query_id"]
        reference = gold_by_id.get(qid)
        if reference is None:
            excluded.append({"query_id": qid, "reason": "no gold accepted answer"})
            logger.warning("evaluate: no gold answer for %r; excluded", qid)
            continue
        candidate = answer["text"]
        per_query[qid] = {
            "rouge1_f": rouge1_f(candidate, reference),
            "rougeL_f": rougeL_f(candidate, reference),
            "embed_sim": embed_sim(candidate, reference, embed_backend, cache),
            "fact_f": fact_f(candidate, reference, extractors),
        }
        jaccards.append(entity_jaccard(candidate, reference, ner_backend))
        overlap_counts.append(triplet_overlap_count(candidate, reference, extractors))

    macro = {
        name: (sum(scores[name] for scores in per_query.values()) / len(per_query)
               if per_query else 0.0)
        for name in PER_QUERY_FIELDS
    }
    bins = overlap_bins if overlap_bins is not None else DEFAULT_OVERLAP_BINS
    grounding = {
        "entity_jaccard_mean": (sum(jaccards) / len(jaccards)) if jaccards else 0.0,
        "triplet_overlap_histogram": {
            "bins": [[lo, hi] for lo, hi in bins],
            "counts": triplet_overlap_histogram(overlap_counts, bins),
        },
    }
    return ScoreReport(per_query=per_query, macro=macro, grounding=grounding,
                       excluded=excluded)


def evaluate_run(results_path: str | Path, gold: CorpusSplit, *,
                 embed_backend, extractors: list, ner_backend,
                 report_path: str | Path | None = None,
                 overlap_bins=None, cache=None) -> ScoreReport:
    """Score a results file and optionally persist the report as JSON."""
    answers = read_results(results_path)
    report = evaluate_answers(answers, gold, embed_backend=embed_backend,
                              extractors=extractors, ner_backend=ner_backend,
                              overlap_bins=overlap_bins, cache=cache)
    if report_path is not None:
        write_report(report, report_path)
    return report


def write_report(report: ScoreReport, path: str | Path) -> None:
    Path(path).write_text(
        json.dumps(report.to_json(), indent=2, sort_keys=True, ensure_ascii=False) + "\n",
        encoding="utf-8",
    )


__all__ = [
    "ScoreReport",
    "PER_QUERY_FIELDS",
    "read_results",
    "evaluate_answers",
    "evaluate_run",
    "write_report",
]
