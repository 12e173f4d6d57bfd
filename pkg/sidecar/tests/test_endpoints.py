from __future__ import annotations

import pytest
from fastapi.testclient import TestClient

from cqarag_sidecar.app import create_app
from cqarag_sidecar.config import SidecarConfig


@pytest.fixture
def client(debug_config):
    with TestClient(create_app(debug_config)) as c:
        yield c


class TestHealthz:
    def test_not_ready_before_models_load(self, debug_config):
        app = create_app(debug_config)
        bare = TestClient(app)  # no lifespan: startup never ran
        body = bare.get("/healthz").json()
        assert body["ready"] is False

    def test_ready_after_startup(self, client):
        body = client.get("/healthz").json()
        assert body["ready"] is True
        assert body["capabilities"] == {"embed": True, "generate": True,
                                        "triplets": True, "ner": True}


class TestEmbedEndpoint:
    def test_two_texts_two_vectors_of_advertised_dim(self, client):
        body = client.post("/v1/embed", json={"texts": ["a", "b"], "model": ""}).json()
        assert len(body["vectors"]) == 2
        assert body["dim"] == 1024
        assert all(len(v) == 1024 for v in body["vectors"])

    def test_batch_limit_413(self, client):
        resp = client.post("/v1/embed", json={"texts": ["x"] * 9, "model": ""})
        assert resp.status_code == 413
        assert resp.json()["error"]["retryable"] is False

    def test_bad_texts_400(self, client):
        assert client.post("/v1/embed", json={"texts": "nope", "model": ""}).status_code == 400


class TestGenerateEndpoint:
    def test_deterministic_at_temperature_zero(self, client):
        payload = {"prompt": "Q: hi\nAnswer: something here", "max_new_tokens": 8,
                   "temperature": 0.0, "model": ""}
        first = client.post("/v1/generate", json=payload).json()["text"]
        second = client.post("/v1/generate", json=payload).json()["text"]
        assert first == second == "something here"

    def test_empty_prompt_400(self, client):
        resp = client.post("/v1/generate", json={"prompt": "", "max_new_tokens": 8,
                                                 "temperature": 0, "model": ""})
        assert resp.status_code == 400

    def test_prompt_limit_413(self, debug_config):
        debug_config.prompt_token_limit = 4
        with TestClient(create_app(debug_config)) as client:
            resp = client.post("/v1/generate",
                               json={"prompt": "one two three four five six",
                                     "max_new_tokens": 8, "temperature": 0, "model": ""})
            assert resp.status_code == 413


class TestTripletsEndpoint:
    def test_sample_sentence_yields_seven_zip_triplet(self, client):
        body = client.post("/v1/triplets",
                           json={"text": "7-Zip is used to extract ISO files."}).json()
        heads = {t["head"] for t in body["triplets"]}
        assert "7-Zip" in heads

    def test_empty_text_ok(self, client):
        assert client.post("/v1/triplets", json={"text": ""}).json() == {"triplets": []}


class TestNerEndpoint:
    def test_entities_found(self, client):
        body = client.post("/v1/ner",
                           json={"text": "Install `p7zip` so Ubuntu can unpack it."}).json()
        assert "p7zip" in body["entities"]

    def test_bad_payload_400(self, client):
        assert client.post("/v1/ner", json={"text": 5}).status_code == 400


class TestDisabledCapability:
    def test_disabled_endpoint_answers_501(self):
        config = SidecarConfig(embed_model="debug-hash-16", generate_model="",
                               triplets_model="", ner_model="")
        with TestClient(create_app(config)) as client:
            assert client.post("/v1/embed",
                               json={"texts": ["x"], "model": ""}).status_code == 200
            for endpoint, payload in [
                ("/v1/generate", {"prompt": "p", "max_new_tokens": 1,
                                  "temperature": 0, "model": ""}),
                ("/v1/triplets", {"text": "t"}),
                ("/v1/ner", {"text": "t"}),
            ]:
                resp = client.post(endpoint, json=payload)
                assert resp.status_code == 501, endpoint
                assert resp.json()["error"]["retryable"] is False
