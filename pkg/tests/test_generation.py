from __future__ import annotations

import pytest

from cqarag.errors import BackendError, ContextLengthError
from cqarag.generation import (
    ContextEchoBackend,
    EchoBackend,
    GeneratedAnswer,
    GenerationRequest,
    ScriptedBackend,
    build_prompt,
    fit_prompt,
    generate,
    prompt_hash,
)
from cqarag.kg import BRIDGE_LINE, RetrievedContext, assemble_context

from conftest import make_record


def ctx_for(pairs, sentences):
    return assemble_context(RetrievedContext(query_id="q", pairs=pairs), sentences)


class TestBuildPrompt:
    def test_finetuned_empty_ctx_matches_training_template(self):
        query = make_record("q", title="T", body="B")
        prompt = build_prompt(query, None, "finetuned")
        assert prompt == "[INST] T\nB [\\INST] Answer:"

    def test_pretrained_ends_with_answer_cue(self):
        query = make_record("q", title="T", body="B")
        prompt = build_prompt(query, ctx_for([], ["a sentence"]), "pretrained")
        assert prompt.endswith("Question: T\nB\nAnswer:")
        assert "[INST]" not in prompt

    def test_finetuned_exactly_one_marker_pair(self):
        query = make_record("q", title="T", body="B")
        rec = make_record("r", title="RT", body="RB")
        prompt = build_prompt(query, ctx_for([(rec, "RA")], ["s"]), "finetuned")
        assert prompt.count("[INST]") == 1
        assert prompt.count("[\\INST]") == 1
        assert prompt.endswith("[INST] T\nB [\\INST] Answer:")

    def test_pretrained_has_no_markers(self):
        query = make_record("q", title="T", body="B")
        rec = make_record("r", title="RT", body="RB")
        prompt = build_prompt(query, ctx_for([(rec, "RA")], []), "pretrained")
        assert "[INST]" not in prompt and "[\\INST]" not in prompt

    def test_pure_function(self):
        query = make_record("q", title="T", body="B")
        ctx = ctx_for([], ["s1", "s2"])
        p1 = build_prompt(query, ctx, "finetuned")
        p2 = build_prompt(query, ctx, "finetuned")
        assert p1 == p2
        assert prompt_hash(p1) == prompt_hash(p2)

    def test_context_included_before_question(self):
        query = make_record("q", title="T", body="B")
        rec = make_record("r", title="RT", body="RB")
        prompt = build_prompt(query, ctx_for([(rec, "RA")], ["know this"]), "pretrained")
        assert prompt.index("RT") < prompt.index(BRIDGE_LINE[:20])
        assert prompt.index("know this") < prompt.index("Question: T\nB")


class TestFitPrompt:
    def test_no_shrink_when_under_budget(self):
        query = make_record("q", title="T", body="B")
        ctx = ctx_for([], ["short sentence"])
        fitted, prompt = fit_prompt(query, ctx, "pretrained", max_prompt_tokens=1000)
        assert fitted.sentences == ["short sentence"]

    def test_sentences_dropped_from_end_first(self):
        query = make_record("q", title="T", body="B")
        rec = make_record("r", title="RT", body="RB")
        long_sentences = [f"sentence number {i} " + "pad " * 10 for i in range(5)]
        ctx = ctx_for([(rec, "RA")], long_sentences)
        base_tokens = len(build_prompt(query, ctx_for([(rec, "RA")], long_sentences[:2]),
                                       "pretrained").split())
        fitted, prompt = fit_prompt(query, ctx, "pretrained", max_prompt_tokens=base_tokens)
        assert fitted.sentences == long_sentences[:2]
        assert fitted.base.pairs  # pairs survive while sentences can still shrink

    def test_lowest_ranked_pair_dropped_after_sentences(self):
        query = make_record("q", title="T", body="B")
        rec1 = make_record("r1", title="first " * 30, body="RB1")
        rec2 = make_record("r2", title="second " * 30, body="RB2")
        ctx = ctx_for([(rec1, "A1"), (rec2, "A2")], ["s"])
        tight = len(build_prompt(query, ctx_for([(rec1, "A1")], []), "pretrained").split())
        fitted, prompt = fit_prompt(query, ctx, "pretrained", max_prompt_tokens=tight)
        assert fitted.sentences == []
        assert [rec.question_id for rec, _ in fitted.base.pairs] == ["r1"]


class TestGenerate:
    def request(self, prompt="Question: T\nAnswer:"):
        return GenerationRequest(prompt=prompt, model_id="m", mode="pretrained")

    def test_echo_backend_returns_suffix(self):
        req = GenerationRequest(prompt="context\nAnswer: expected tail", model_id="m")
        answer = generate(req, EchoBackend())
        assert answer.text == "expected tail"

    def test_retries_recorded_on_transient_failures(self):
        backend = ScriptedBackend([429, 429, "finally some text"])
        answer = generate(self.request(), backend, max_retries=3, backoff_s=0.0)
        assert answer.text == "finally some text"
        assert answer.retries == 2
        assert backend.calls == 3

    def test_gives_up_after_max_retries(self):
        backend = ScriptedBackend([500, 500, 500, 500])
        with pytest.raises(BackendError):
            generate(self.request(), backend, max_retries=2, backoff_s=0.0)

    def test_non_retryable_fails_fast(self):
        backend = ScriptedBackend([404])
        with pytest.raises(BackendError):
            generate(self.request(), backend, max_retries=3, backoff_s=0.0)
        assert backend.calls == 1

    def test_context_length_error_carries_estimate(self):
        backend = EchoBackend(max_prompt_tokens=3)
        req = GenerationRequest(prompt="one two three four five Answer:", model_id="m")
        with pytest.raises(ContextLengthError) as err:
            generate(req, backend)
        assert err.value.token_estimate == 6

    def test_answer_metadata(self):
        req = self.request()
        answer = generate(req, EchoBackend(), query_id="q7")
        assert answer.query_id == "q7"
        assert answer.model_id == "m"
        assert answer.mode == "pretrained"
        assert answer.prompt_hash == prompt_hash(req.prompt)

    def test_results_json_excludes_latency(self):
        answer = GeneratedAnswer(query_id="q", text="t", model_id="m",
                                 mode="pretrained", latency_ms=123,
                                 prompt_hash="h")
        payload = answer.to_json()
        assert "latency_ms" not in payload
        assert payload["type"] == "answer"


class TestContextEchoBackend:
    def test_answers_with_last_answer_block(self):
        prompt = ("Question: RT\nRB\n\nAnswer: the retrieved answer text\n\n"
                  + BRIDGE_LINE + "a sentence\n\nQuestion: T\nB\nAnswer:")
        req = GenerationRequest(prompt=prompt, model_id="m")
        text = ContextEchoBackend().complete(req)
        assert "a sentence" in text

    def test_empty_prompt_blocks(self):
        req = GenerationRequest(prompt="no cue here", model_id="m")
        assert ContextEchoBackend().complete(req) == ""


class TestRequestValidation:
    def test_empty_prompt(self):
        with pytest.raises(ValueError):
            GenerationRequest(prompt="")

    def test_bad_max_tokens(self):
        with pytest.raises(ValueError):
            GenerationRequest(prompt="p", max_new_tokens=0)

    def test_bad_mode(self):
        with pytest.raises(ValueError):
            GenerationRequest(prompt="p", mode="chat")
