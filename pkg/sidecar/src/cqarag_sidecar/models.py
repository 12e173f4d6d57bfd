"""Model wrappers behind the four capabilities.

Each wrapper exposes a tiny synchronous interface; the app serializes calls
per model (GPU safety) and bounds the waiting queue. Debug implementations
are dependency-free and deterministic so the service is fully testable with
no model weights; real ids load lazily through sentence-transformers or
transformers and fail startup with the model named if unavailable.
"""

from __future__ import annotations

import hashlib
import re
import threading

import numpy as np


class ModelLoadError(RuntimeError):
    def __init__(self, capability: str, model_id: str, cause: Exception):
        self.capability = capability
        self.model_id = model_id
        super().__init__(f"{capability} model {model_id!r} failed to load: {cause}")


class QueueFullError(RuntimeError):
    pass


class SerializedModel:
    """Serializes inference calls; at most ``max_queue`` callers may wait."""

    def __init__(self, max_queue: int):
        self._lock = threading.Lock()
        self._slots = threading.BoundedSemaphore(max(1, max_queue))

    def run(self, fn, *args, **kwargs):
        if not self._slots.acquire(blocking=False):
            raise QueueFullError("inference queue full")
        try:
            with self._lock:
                return fn(*args, **kwargs)
        finally:
            self._slots.release()


# ----------------------------------------------------------------- embed

class DebugHashEmbedder:
    """Seeded pseudorandom unit vector per text; bit-stable across calls."""

    def __init__(self, dim: int):
        self.dim = dim

    def embed(self, texts: list[str]) -> list[list[float]]:
        out = []
        for text in texts:
            seed = int.from_bytes(hashlib.sha256(text.encode("utf-8")).digest()[:8], "big")
            rng = np.random.default_rng(seed)
            v = rng.standard_normal(self.dim)
            v /= np.linalg.norm(v)
            out.append([float(x) for x in v])
        return out


class SentenceTransformerEmbedder:
    def __init__(self, model_id: str):
        from sentence_transformers import SentenceTransformer

        self._model = SentenceTransformer(model_id)
        self.dim = int(self._model.get_sentence_embedding_dimension())

    def embed(self, texts: list[str]) -> list[list[float]]:
        vectors = self._model.encode(texts, convert_to_numpy=True,
                                     normalize_embeddings=False)
        return [[float(x) for x in row] for row in vectors]


def make_embedder(model_id: str):
    match = re.fullmatch(r"debug-hash-(\d+)", model_id)
    if match:
        return DebugHashEmbedder(dim=int(match.group(1)))
    if model_id == "debug-hash":
        return DebugHashEmbedder(dim=1024)
    try:
        return SentenceTransformerEmbedder(model_id)
    except Exception as exc:  # import failure, download failure, bad id
        raise ModelLoadError("embed", model_id, exc) from exc


# -------------------------------------------------------------- generate

class DebugEchoGenerator:
    """Returns the prompt text after the last 'Answer:' cue; deterministic."""

    def generate(self, prompt: str, max_new_tokens: int, temperature: float) -> str:
        _, _, suffix = prompt.rpartition("Answer:")
        tokens = suffix.split()
        return " ".join(tokens[:max_new_tokens])


class TransformersGenerator:
    def __init__(self, model_id: str):
        from transformers import AutoModelForCausalLM, AutoTokenizer

        self._tokenizer = AutoTokenizer.from_pretrained(model_id)
        self._model = AutoModelForCausalLM.from_pretrained(model_id)

    def generate(self, prompt: str, max_new_tokens: int, temperature: float) -> str:
        inputs = self._tokenizer(prompt, return_tensors="pt")
        kwargs = {"max_new_tokens": max_new_tokens}
        if temperature == 0.0:
            kwargs["do_sample"] = False
        else:
            kwargs["do_sample"] = True
            kwargs["temperature"] = temperature
        output = self._model.generate(**inputs, **kwargs)
        text = self._tokenizer.decode(output[0][inputs["input_ids"].shape[1]:],
                                      skip_special_tokens=True)
        return text


def make_generator(model_id: str):
    if model_id == "debug-echo":
        return DebugEchoGenerator()
    try:
        return TransformersGenerator(model_id)
    except Exception as exc:
        raise ModelLoadError("generate", model_id, exc) from exc


# -------------------------------------------------------------- triplets

class DebugRuleExtractor:
    """Copula/usage patterns, sentence by sentence; mirrors the engine's
    offline extractor so end-to-end fixtures agree."""

    _PATTERNS = [
        re.compile(r"^(?P<head>.{1,60}?)\s+(?P<rel>is used (?:to|for)\s+\w+)\s+(?P<tail>.{1,80}?)$"),
        re.compile(r"^(?P<head>.{1,60}?)\s+(?P<rel>is|are)\s+(?P<tail>(?:an?|the)\s+.{1,80}?)$"),
        re.compile(r"^(?P<head>.{1,60}?)\s+(?P<rel>runs on|requires|supports|replaces|uses)\s+(?P<tail>.{1,80}?)$"),
    ]

    def extract(self, text: str) -> list[dict]:
        items = []
        for sentence in re.split(r"[.\n;:]+", text):
            sentence = " ".join(sentence.split())
            if not sentence:
                continue
            for pattern in self._PATTERNS:
                m = pattern.match(sentence)
                if m:
                    items.append({"head": m.group("head"), "relation": m.group("rel"),
                                  "tail": m.group("tail")})
                    break
        return items


def parse_seq2seq_triplets(decoded: str) -> list[dict]:
    """Parse the '<triplet> head <subj> tail <obj> relation' linearization
    used by seq2seq relation extractors."""
    items = []
    for chunk in decoded.split("<triplet>"):
        if "<subj>" not in chunk or "<obj>" not in chunk:
            continue
        head, _, rest = chunk.partition("<subj>")
        tail, _, relation = rest.partition("<obj>")
        head, tail, relation = head.strip(), tail.strip(), relation.strip()
        if head and tail and relation:
            items.append({"head": head, "relation": relation, "tail": tail})
    return items


class Seq2SeqExtractor:
    def __init__(self, model_id: str):
        from transformers import AutoModelForSeq2SeqLM, AutoTokenizer

        self._tokenizer = AutoTokenizer.from_pretrained(model_id)
        self._model = AutoModelForSeq2SeqLM.from_pretrained(model_id)

    def extract(self, text: str) -> list[dict]:
        inputs = self._tokenizer(text, return_tensors="pt", truncation=True,
                                 max_length=512)
        output = self._model.generate(**inputs, max_length=256, num_beams=3)
        decoded = self._tokenizer.decode(output[0], skip_special_tokens=False)
        decoded = decoded.replace("<s>", "").replace("</s>", "").replace("<pad>", "")
        return parse_seq2seq_triplets(decoded)


def make_extractor(model_id: str):
    if model_id == "debug-rules":
        return DebugRuleExtractor()
    try:
        return Seq2SeqExtractor(model_id)
    except Exception as exc:
        raise ModelLoadError("triplets", model_id, exc) from exc


# ------------------------------------------------------------------ ner

class DebugRuleNer:
    _BACKTICK = re.compile(r"`([^`]+)`")
    _CAPWORD = re.compile(r"\b[A-Z][A-Za-z0-9+\-]{1,30}\b")

    def entities(self, text: str) -> list[str]:
        found = self._BACKTICK.findall(text)
        stripped = self._BACKTICK.sub(" ", text)
        for sentence in re.split(r"[.!?\n]+", stripped):
            words = sentence.split()
            found.extend(w for w in words[1:] if self._CAPWORD.fullmatch(w))
        return found


NER_PROMPT = ("Text: {text}\n"
              "List every named entity in the text above, one per line, "
              "with no extra commentary.\nEntities:\n")


class GenerativeNer:
    """Prompts an instruction-tuned tagger and parses one entity per line."""

    def __init__(self, model_id: str):
        self._generator = TransformersGenerator(model_id)

    def entities(self, text: str) -> list[str]:
        raw = self._generator.generate(NER_PROMPT.format(text=text),
                                       max_new_tokens=256, temperature=0.0)
        out = []
        for line in raw.splitlines():
            entity = line.strip().strip("-*").strip()
            if entity and entity not in out:
                out.append(entity)
        return out


def make_ner(model_id: str):
    if model_id == "debug-rules":
        return DebugRuleNer()
    try:
        return GenerativeNer(model_id)
    except Exception as exc:
        raise ModelLoadError("ner", model_id, exc) from exc


FACTORIES = {
    "embed": make_embedder,
    "generate": make_generator,
    "triplets": make_extractor,
    "ner": make_ner,
}
