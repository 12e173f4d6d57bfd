from __future__ import annotations

import pytest

from cqarag_sidecar.config import SidecarConfig


@pytest.fixture
def debug_config() -> SidecarConfig:
    return SidecarConfig(
        embed_model="debug-hash-1024",
        generate_model="debug-echo",
        triplets_model="debug-rules",
        ner_model="debug-rules",
        max_batch=8,
        max_queue=2,
    )
