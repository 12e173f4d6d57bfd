"""Formal wire-protocol schemas for the four model capabilities.

These are the single statement of the HTTP contracts the engine's clients
speak; any conforming server (the bundled sidecar, or anything else) can
serve them. Kept as JSON Schema so contract tests can run against mocks and
against a live service identically.

    POST /v1/embed     {"texts": [str], "model": str} -> {"vectors": [[num]], "dim": int}
    POST /v1/generate  {"prompt": str, "max_new_tokens": int,
                        "temperature": num, "model": str} -> {"text": str}
    POST /v1/triplets  {"text": str} -> {"triplets": [{"head","relation","tail"}]}
    POST /v1/ner       {"text": str} -> {"entities": [str]}
"""

from __future__ import annotations

import jsonschema

EMBED_REQUEST = {
    "type": "object",
    "required": ["texts", "model"],
    "properties": {
        "texts": {"type": "array", "items": {"type": "string"}},
        "model": {"type": "string"},
    },
    "additionalProperties": False,
}

EMBED_RESPONSE = {
    "type": "object",
    "required": ["vectors", "dim"],
    "properties": {
        "vectors": {
            "type": "array",
            "items": {"type": "array", "items": {"type": "number"}},
        },
        "dim": {"type": "integer", "minimum": 1},
    },
    "additionalProperties": False,
}

GENERATE_REQUEST = {
    "type": "object",
    "required": ["prompt", "max_new_tokens", "temperature", "model"],
    "properties": {
        "prompt": {"type": "string", "minLength": 1},
        "max_new_tokens": {"type": "integer", "minimum": 1},
        "temperature": {"type": "number", "minimum": 0},
        "model": {"type": "string"},
    },
    "additionalProperties": False,
}

GENERATE_RESPONSE = {
    "type": "object",
    "required": ["text"],
    "properties": {"text": {"type": "string"}},
    "additionalProperties": False,
}

TRIPLETS_REQUEST = {
    "type": "object",
    "required": ["text"],
    "properties": {"text": {"type": "string"}},
    "additionalProperties": False,
}

TRIPLETS_RESPONSE = {
    "type": "object",
    "required": ["triplets"],
    "properties": {
        "triplets": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["head", "relation", "tail"],
                "properties": {
                    "head": {"type": "string"},
                    "relation": {"type": "string"},
                    "tail": {"type": "string"},
                },
                "additionalProperties": True,
            },
        },
    },
    "additionalProperties": False,
}

NER_REQUEST = {
    "type": "object",
    "required": ["text"],
    "properties": {"text": {"type": "string"}},
    "additionalProperties": False,
}

NER_RESPONSE = {
    "type": "object",
    "required": ["entities"],
    "properties": {"entities": {"type": "array", "items": {"type": "string"}}},
    "additionalProperties": False,
}

SCHEMAS = {
    "/v1/embed": (EMBED_REQUEST, EMBED_RESPONSE),
    "/v1/generate": (GENERATE_REQUEST, GENERATE_RESPONSE),
    "/v1/triplets": (TRIPLETS_REQUEST, TRIPLETS_RESPONSE),
    "/v1/ner": (NER_REQUEST, NER_RESPONSE),
}


def validate_request(endpoint: str, payload: dict) -> None:
    jsonschema.validate(payload, SCHEMAS[endpoint][0])


def validate_response(endpoint: str, payload: dict) -> None:
    jsonschema.validate(payload, SCHEMAS[endpoint][1])


__all__ = [
    "SCHEMAS",
    "EMBED_REQUEST", "EMBED_RESPONSE",
    "GENERATE_REQUEST", "GENERATE_RESPONSE",
    "TRIPLETS_REQUEST", "TRIPLETS_RESPONSE",
    "NER_REQUEST", "NER_RESPONSE",
    "validate_request",
    "validate_response",
]
