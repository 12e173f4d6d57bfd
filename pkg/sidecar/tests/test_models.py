from __future__ import annotations

import threading
import time

import numpy as np
import pytest

from cqarag_sidecar.models import (
    DebugEchoGenerator,
    DebugHashEmbedder,
    DebugRuleExtractor,
    DebugRuleNer,
    QueueFullError,
    SerializedModel,
    make_embedder,
    parse_seq2seq_triplets,
)


class TestDebugEmbedder:
    def test_unit_norm_and_dim(self):
        model = DebugHashEmbedder(dim=1024)
        vec = np.asarray(model.embed(["hello"])[0])
        assert vec.shape == (1024,)
        assert np.linalg.norm(vec) == pytest.approx(1.0, abs=1e-9)

    def test_deterministic(self):
        model = DebugHashEmbedder(dim=64)
        assert model.embed(["x"]) == model.embed(["x"])

    def test_factory_parses_dim(self):
        assert make_embedder("debug-hash-128").dim == 128
        assert make_embedder("debug-hash").dim == 1024


class TestDebugGenerator:
    def test_echo_after_cue(self):
        model = DebugEchoGenerator()
        assert model.generate("context Answer: the tail text", 512, 0.0) == "the tail text"

    def test_respects_max_new_tokens(self):
        model = DebugEchoGenerator()
        assert model.generate("Answer: one two three four", 2, 0.0) == "one two"

    def test_deterministic(self):
        model = DebugEchoGenerator()
        assert model.generate("Answer: abc", 8, 0.0) == model.generate("Answer: abc", 8, 0.0)


class TestDebugExtractor:
    def test_extracts_patterns(self):
        items = DebugRuleExtractor().extract("7-Zip is used to extract ISO files.")
        assert {"head": "7-Zip", "relation": "is used to extract",
                "tail": "ISO files"} in items


class TestDebugNer:
    def test_backticks_and_capitals(self):
        found = DebugRuleNer().entities("Use `apt` to upgrade Ubuntu now.")
        assert "apt" in found and "Ubuntu" in found


class TestSeq2SeqParse:
    def test_linearized_format(self):
        decoded = ("<triplet> 7-Zip <subj> ISO files <obj> used for "
                   "<triplet> Ubuntu <subj> Debian <obj> based on")
        assert parse_seq2seq_triplets(decoded) == [
            {"head": "7-Zip", "relation": "used for", "tail": "ISO files"},
            {"head": "Ubuntu", "relation": "based on", "tail": "Debian"},
        ]

    def test_malformed_chunks_skipped(self):
        assert parse_seq2seq_triplets("<triplet> incomplete <subj> only") == []
        assert parse_seq2seq_triplets("no markers at all") == []


class TestSerializedModel:
    def test_serializes_calls(self):
        gate = SerializedModel(max_queue=4)
        active = []
        overlaps = []

        def work():
            active.append(1)
            if len(active) > 1:
                overlaps.append(1)
            time.sleep(0.01)
            active.pop()

        threads = [threading.Thread(target=lambda: gate.run(work)) for _ in range(4)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert overlaps == []

    def test_queue_overflow_raises(self):
        gate = SerializedModel(max_queue=1)
        started = threading.Event()
        release = threading.Event()

        def slow():
            started.set()
            release.wait(timeout=5)

        holder = threading.Thread(target=lambda: gate.run(slow))
        holder.start()
        started.wait(timeout=5)
        with pytest.raises(QueueFullError):
            gate.run(lambda: None)
        release.set()
        holder.join()
