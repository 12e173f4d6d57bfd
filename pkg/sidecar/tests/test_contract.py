"""Wire-protocol contract against a live sidecar.

Boots the service with a real uvicorn server on a loopback port, then
validates every endpoint against the engine's formal schemas
(``cqarag.wire`` is the published statement of the HTTP interface) and
checks the embedding path end to end through the engine's own client.
"""

from __future__ import annotations

import socket
import threading
import time

import pytest
import requests
import uvicorn

from cqarag.embedding import HttpEmbeddingBackend, cosine, embed_text
from cqarag.wire import validate_request, validate_response

from cqarag_sidecar.app import create_app
from cqarag_sidecar.config import SidecarConfig


def free_port() -> int:
    with socket.socket() as sock:
        sock.bind(("127.0.0.1", 0))
        return sock.getsockname()[1]


@pytest.fixture(scope="module")
def live_sidecar():
    config = SidecarConfig(
        embed_model="debug-hash-1024",
        generate_model="debug-echo",
        triplets_model="debug-rules",
        ner_model="debug-rules",
        port=free_port(),
    )
    server = uvicorn.Server(uvicorn.Config(create_app(config), host="127.0.0.1",
                                           port=config.port, log_level="error"))
    thread = threading.Thread(target=server.run, daemon=True)
    thread.start()
    base = f"http://127.0.0.1:{config.port}"
    deadline = time.time() + 15
    while time.time() < deadline:
        try:
            if requests.get(base + "/healthz", timeout=1).json().get("ready"):
                break
        except requests.RequestException:
            pass
        time.sleep(0.05)
    else:
        raise RuntimeError("sidecar did not become ready")
    yield base
    server.should_exit = True
    thread.join(timeout=10)


def roundtrip(base: str, endpoint: str, payload: dict) -> dict:
    validate_request(endpoint, payload)
    resp = requests.post(base + endpoint, json=payload, timeout=30)
    assert resp.status_code == 200, f"{endpoint}: {resp.status_code} {resp.text[:200]}"
    body = resp.json()
    validate_response(endpoint, body)
    return body


class TestLiveContract:
    def test_embed_schema(self, live_sidecar):
        body = roundtrip(live_sidecar, "/v1/embed",
                         {"texts": ["first text", "second text"], "model": ""})
        assert len(body["vectors"]) == 2
        assert all(len(v) == body["dim"] for v in body["vectors"])

    def test_generate_schema_and_determinism(self, live_sidecar):
        payload = {"prompt": "Question: hi\nAnswer: fixed reply", "max_new_tokens": 16,
                   "temperature": 0.0, "model": ""}
        first = roundtrip(live_sidecar, "/v1/generate", payload)
        second = roundtrip(live_sidecar, "/v1/generate", payload)
        assert first["text"] == second["text"]

    def test_triplets_schema(self, live_sidecar):
        body = roundtrip(live_sidecar, "/v1/triplets",
                         {"text": "7-Zip is used to extract ISO files."})
        assert any(t["head"] == "7-Zip" for t in body["triplets"])

    def test_ner_schema(self, live_sidecar):
        body = roundtrip(live_sidecar, "/v1/ner", {"text": "Ubuntu ships `apt` by default."})
        assert isinstance(body["entities"], list)

    def test_healthz_reports_ready(self, live_sidecar):
        assert requests.get(live_sidecar + "/healthz", timeout=5).json()["ready"] is True


class TestEmbeddingSanityThroughClientPath:
    """dim-1024 vectors for the configured model, self-cosine 1.0 +/- 1e-6,
    all through the engine's own HTTP client."""

    def test_dim_and_self_cosine(self, live_sidecar):
        backend = HttpEmbeddingBackend(live_sidecar, model="debug-hash-1024", dim=1024)
        a = embed_text("the exact same sentence", backend)
        b = embed_text("the exact same sentence", backend)
        assert a.dim == 1024
        assert abs(cosine(a, b) - 1.0) <= 1e-6

    def test_primary_contract_suite_passes_against_live_sidecar(self, live_sidecar):
        import subprocess
        import sys
        from pathlib import Path

        repo_root = Path(__file__).resolve().parents[2]
        result = subprocess.run(
            [sys.executable, "-m", "pytest", "-q",
             str(repo_root / "tests" / "test_wire_contracts.py")],
            env={"CQARAG_SIDECAR_URL": live_sidecar, "PATH": "/usr/bin:/bin:/usr/local/bin"},
            capture_output=True, text=True, cwd=repo_root, timeout=300,
        )
        assert result.returncode == 0, result.stdout + result.stderr
