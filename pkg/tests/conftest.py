from __future__ import annotations

import json
from datetime import datetime, timezone

import pytest

from cqarag.corpus import AnswerRecord, QaRecord


def ts(raw: str) -> datetime:
    return datetime.fromisoformat(raw.replace("Z", "+00:00")).astimezone(timezone.utc)


DEFAULT_ANSWER = "a reasonably long accepted answer with quite many whitespace separated tokens"


def make_record(qid: str, title: str = "title", body: str = "body",
                created: str = "2020-01-01T00:00:00Z",
                answer: str | None = DEFAULT_ANSWER,
                answer_created: str | None = None,
                extra_answers: tuple = ()) -> QaRecord:
    answers = []
    if answer is not None:
        answers.append(AnswerRecord(body=answer, accepted=True,
                                    created_at=ts(answer_created or created)))
    answers.extend(extra_answers)
    return QaRecord(question_id=qid, title=title, body=body, tags=("tag",),
                    created_at=ts(created), answers=tuple(answers))


@pytest.fixture
def corpus_file(tmp_path):
    def write(records: list[dict], name: str = "corpus.jsonl"):
        path = tmp_path / name
        with path.open("w", encoding="utf-8") as fh:
            for rec in records:
                fh.write(json.dumps(rec) + "\n")
        return path

    return write


def record_json(qid: str, title: str = "title", body: str = "body",
                created: str = "2020-01-01T00:00:00Z",
                answer: str | None = DEFAULT_ANSWER) -> dict:
    answers = []
    if answer is not None:
        answers.append({"body": answer, "accepted": True, "created_at": created})
    return {"question_id": qid, "title": title, "body": body, "tags": ["tag"],
            "created_at": created, "answers": answers}
