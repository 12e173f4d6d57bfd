"""Corpus ingestion, filtering, temporal split and instruction export.

Corpus files are JSONL, one question per line:

    {"question_id": str, "title": str, "body": str, "tags": [str],
     "created_at": "RFC3339",
     "answers": [{"body": str, "accepted": bool, "created_at": "RFC3339"}]}

Instruction export writes one example per line using the literal markers
``[INST] `` and `` [\\INST] Answer: ``; embedded newlines and backslashes
are escaped so an example is always exactly one physical line and parsing
a line recovers the original strings byte for byte.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path

from .errors import DataError, DuplicateQuestionIdError

logger = logging.getLogger(__name__)

INST_OPEN = "[INST] "
INST_CLOSE = " [\\INST] Answer: "


@dataclass(frozen=True)
class AnswerRecord:
    body: str
    accepted: bool
    created_at: datetime


@dataclass(frozen=True)
class QaRecord:
    question_id: str
    title: str
    body: str
    tags: tuple[str, ...]
    created_at: datetime
    answers: tuple[AnswerRecord, ...]

    def accepted_answer(self) -> AnswerRecord | None:
        for a in self.answers:
            if a.accepted:
                return a
        return None

    def question_text(self) -> str:
        """Title and body joined by a single newline, the form embedded and prompted."""
        return f"{self.title}\n{self.body}"


@dataclass(frozen=True)
class CorpusSplit:
    train: tuple[QaRecord, ...]
    test: tuple[QaRecord, ...]
    split_boundary: datetime


@dataclass
class FilterConfig:
    max_question_tokens: int = 1024
    max_answer_tokens: int = 1024
    min_answer_tokens: int = 10  # "non-specific" answers are ones shorter than this


def _parse_ts(raw: str, where: str) -> datetime:
    try:
        ts = datetime.fromisoformat(raw.replace("Z", "+00:00"))
    except (ValueError, TypeError, AttributeError) as exc:
        raise ValueError(f"{where}: bad timestamp {raw!r}") from exc
    if ts.tzinfo is None:
        ts = ts.replace(tzinfo=timezone.utc)
    return ts.astimezone(timezone.utc)


def _parse_record(obj: dict) -> QaRecord:
    if not isinstance(obj, dict):
        raise ValueError("record is not an object")
    for key in ("question_id", "title", "body", "created_at", "answers"):
        if key not in obj:
            raise ValueError(f"missing field {key!r}")
    answers = []
    for i, a in enumerate(obj["answers"]):
        if not isinstance(a, dict) or "body" not in a:
            raise ValueError(f"answers[{i}]: missing body")
        answers.append(
            AnswerRecord(
                body=str(a["body"]),
                accepted=bool(a.get("accepted", False)),
                created_at=_parse_ts(a.get("created_at", obj["created_at"]), f"answers[{i}]"),
            )
        )
    if sum(1 for a in answers if a.accepted) > 1:
        raise ValueError("more than one accepted answer")
    return QaRecord(
        question_id=str(obj["question_id"]),
        title=str(obj["title"]),
        body=str(obj["body"]),
        tags=tuple(str(t) for t in obj.get("tags", [])),
        created_at=_parse_ts(obj["created_at"], "created_at"),
        answers=tuple(answers),
    )


@dataclass
class IngestReport:
    """Per-line problems found while ingesting; records failing schema are
    reported here rather than silently dropped."""

    problems: list[str] = field(default_factory=list)

    def add(self, line_no: int, message: str) -> None:
        entry = f"line {line_no}: {message}"
        self.problems.append(entry)
        logger.warning("ingest: %s", entry)


def ingest(path: str | Path, fmt: str = "jsonl", report: IngestReport | None = None) -> list[QaRecord]:
    """Read a corpus file, returning all structurally valid records.

    Malformed records are reported (with line numbers) via ``report`` and the
    log; a duplicate question_id is a hard error.
    """
    if fmt != "jsonl":
        raise DataError(f"unknown corpus format: {fmt!r}")
    path = Path(path)
    if not path.exists():
        raise DataError(f"corpus file not found: {path}")
    report = report if report is not None else IngestReport()
    records: list[QaRecord] = []
    seen: set[str] = set()
    with path.open("r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                rec = _parse_record(obj)
            except ValueError as exc:
                report.add(line_no, str(exc))
                continue
            if rec.question_id in seen:
                raise DuplicateQuestionIdError(rec.question_id)
            seen.add(rec.question_id)
            records.append(rec)
    return records


def _norm_key(record: QaRecord) -> str:
    """Whitespace-collapsed, lowercased title+body; the exact-duplicate key."""
    return " ".join((record.title + " " + record.body).lower().split())


def _token_count(text: str) -> int:
    return len(text.split())


def filter_records(records: list[QaRecord], rules: FilterConfig | None = None) -> list[QaRecord]:
    """Drop records without an accepted answer, outside the length bounds, or
    duplicating an earlier record (exact normalized title+body match; the
    earliest created_at survives). Total and idempotent."""
    rules = rules or FilterConfig()

    survivors: dict[str, QaRecord] = {}
    for rec in records:
        key = _norm_key(rec)
        prev = survivors.get(key)
        if prev is None or (rec.created_at, rec.question_id) < (prev.created_at, prev.question_id):
            survivors[key] = rec
    kept_ids = {rec.question_id for rec in survivors.values()}

    out: list[QaRecord] = []
    for rec in records:
        if rec.question_id not in kept_ids:
            continue
        accepted = rec.accepted_answer()
        if accepted is None or not accepted.body.strip():
            continue
        if not rec.title.strip() or not rec.body.strip():
            continue
        if _token_count(rec.question_text()) > rules.max_question_tokens:
            continue
        n_answer = _token_count(accepted.body)
        if n_answer > rules.max_answer_tokens or n_answer < rules.min_answer_tokens:
            continue
        out.append(rec)
    return out


def temporal_split(records: list[QaRecord], boundary: datetime) -> CorpusSplit:
    """Partition by created_at; records exactly at the boundary go to test."""
    if boundary.tzinfo is None:
        boundary = boundary.replace(tzinfo=timezone.utc)
    train = tuple(r for r in records if r.created_at < boundary)
    test = tuple(r for r in records if r.created_at >= boundary)
    if records and not train:
        logger.warning("temporal_split: empty train split (boundary %s)", boundary.isoformat())
    if records and not test:
        logger.warning("temporal_split: empty test split (boundary %s)", boundary.isoformat())
    return CorpusSplit(train=train, test=test, split_boundary=boundary)


def _escape(text: str) -> str:
    return text.replace("\\", "\\\\").replace("\n", "\\n")


def _unescape(text: str) -> str:
    out: list[str] = []
    i = 0
    while i < len(text):
        c = text[i]
        if c == "\\" and i + 1 < len(text):
            nxt = text[i + 1]
            if nxt == "\\":
                out.append("\\")
                i += 2
                continue
            if nxt == "n":
                out.append("\n")
                i += 2
                continue
        out.append(c)
        i += 1
    return "".join(out)


def format_instruction(question: str, answer: str) -> str:
    return f"{INST_OPEN}{_escape(question)}{INST_CLOSE}{_escape(answer)}"


def parse_instruction(line: str) -> tuple[str, str]:
    """Invert format_instruction; raises DataError if the markers are absent."""
    line = line.rstrip("\n")
    if not line.startswith(INST_OPEN) or INST_CLOSE not in line:
        raise DataError(f"not an instruction line: {line[:60]!r}")
    payload = line[len(INST_OPEN):]
    question, answer = payload.split(INST_CLOSE, 1)
    return _unescape(question), _unescape(answer)


def export_instructions(split: CorpusSplit, out: str | Path) -> int:
    """Write one instruction example per train record with an accepted answer;
    returns the number of lines written."""
    if not split.train:
        raise DataError("export_instructions: empty train split")
    out = Path(out)
    count = 0
    with out.open("w", encoding="utf-8") as fh:
        for rec in split.train:
            accepted = rec.accepted_answer()
            if accepted is None:
                continue
            fh.write(format_instruction(rec.question_text(), accepted.body) + "\n")
            count += 1
    return count


def merge_corpora(*record_lists: list[QaRecord]) -> list[QaRecord]:
    """Deterministic merge of parallel ingests, sorted by question_id."""
    merged: dict[str, QaRecord] = {}
    for records in record_lists:
        for rec in records:
            if rec.question_id in merged and merged[rec.question_id] != rec:
                raise DuplicateQuestionIdError(rec.question_id)
            merged[rec.question_id] = rec
    return [merged[qid] for qid in sorted(merged)]


def record_to_json(rec: QaRecord) -> dict:
    return {
        "question_id": rec.question_id,
        "title": rec.title,
        "body": rec.body,
        "tags": list(rec.tags),
        "created_at": rec.created_at.isoformat().replace("+00:00", "Z"),
        "answers": [
            {
                "body": a.body,
                "accepted": a.accepted,
                "created_at": a.created_at.isoformat().replace("+00:00", "Z"),
            }
            for a in rec.answers
        ],
    }


def write_corpus(records: list[QaRecord], path: str | Path) -> int:
    with Path(path).open("w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(record_to_json(rec), ensure_ascii=False) + "\n")
    return len(records)


__all__ = [
    "AnswerRecord",
    "QaRecord",
    "CorpusSplit",
    "FilterConfig",
    "IngestReport",
    "ingest",
    "filter_records",
    "temporal_split",
    "format_instruction",
    "parse_instruction",
    "export_instructions",
    "merge_corpora",
    "record_to_json",
    "write_corpus",
]
