"""Question-question similarity graph: construction, query extension,
serialization and stats.

The graph is undirected, has no self-loops, and contains an edge (a, b)
exactly when cosine(a, b) >= threshold. Edge weights are the cosines,
computed in double precision. The file format is versioned JSON with a
checksum over the structural payload.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .embedding import EmbeddingVector
from .errors import CorruptFileError, DataError, VersionMismatchError

logger = logging.getLogger(__name__)

GRAPH_FORMAT_VERSION = 1
QUERY_NODE_ID = "__query__"


@dataclass
class QQGraph:
    nodes: list[str]
    edges: list[tuple[str, str, float]]  # (id_a, id_b, weight), id_a < id_b
    threshold: float
    backend_id: str
    built_at: str  # ISO timestamp
    isolated_zero_norm: list[str] = field(default_factory=list)

    def __post_init__(self):
        self._index = {qid: i for i, qid in enumerate(self.nodes)}

    @property
    def n(self) -> int:
        return len(self.nodes)

    def node_index(self, qid: str) -> int:
        return self._index[qid]

    def adjacency(self) -> dict[int, list[tuple[int, float]]]:
        adj: dict[int, list[tuple[int, float]]] = {i: [] for i in range(self.n)}
        for a, b, w in self.edges:
            ia, ib = self._index[a], self._index[b]
            adj[ia].append((ib, w))
            adj[ib].append((ia, w))
        return adj


@dataclass
class ExtendedGraph:
    base: QQGraph
    query_id: str
    query_edges: list[tuple[str, float]]  # (corpus id, weight), all >= base.threshold


def _normalized_matrix(vectors: dict[str, EmbeddingVector],
                       node_ids: list[str]) -> tuple[np.ndarray, list[str]]:
    """Rows normalized to unit length; zero-norm rows flagged by id."""
    mat = np.stack([vectors[qid].values.astype(np.float64) for qid in node_ids])
    norms = np.linalg.norm(mat, axis=1)
    zero_ids = [node_ids[i] for i in np.nonzero(norms == 0.0)[0]]
    safe = np.where(norms == 0.0, 1.0, norms)
    return mat / safe[:, None], zero_ids


def build_graph(vectors: dict[str, EmbeddingVector], threshold: float,
                backend_id: str = "") -> QQGraph:
    """Edge (a, b) present iff cosine(a, b) >= threshold and a != b.

    Zero-norm vectors get a per-node diagnostic and stay as isolated nodes.
    Deterministic: node order and edge order are sorted by question_id.
    """
    if not vectors:
        raise DataError("build_graph: no vectors")
    if not (0.0 < threshold < 1.0):
        raise DataError(f"build_graph: threshold must be in (0, 1), got {threshold}")
    node_ids = sorted(vectors)
    if QUERY_NODE_ID in vectors:
        raise DataError(f"corpus question_id collides with reserved id {QUERY_NODE_ID!r}")

    unit, zero_ids = _normalized_matrix(vectors, node_ids)
    for qid in zero_ids:
        logger.warning("build_graph: zero-norm vector for %r; node kept isolated", qid)
    zero_set = set(zero_ids)

    sims = unit @ unit.T
    ia, ib = np.nonzero(np.triu(sims >= threshold, k=1))
    edges = [
        (node_ids[i], node_ids[j], float(sims[i, j]))
        for i, j in zip(ia.tolist(), ib.tolist())
        if node_ids[i] not in zero_set and node_ids[j] not in zero_set
    ]
    return QQGraph(
        nodes=node_ids,
        edges=edges,
        threshold=threshold,
        backend_id=backend_id,
        built_at=datetime.now(timezone.utc).isoformat(),
    )


def extend_with_query(graph: QQGraph, query_vec: EmbeddingVector,
                      vectors: dict[str, EmbeddingVector]) -> ExtendedGraph:
    """Attach the query as a temporary node, linked to every corpus node whose
    cosine with it passes the graph's own threshold. An empty edge list is
    legal (disconnected query)."""
    qv = query_vec.values.astype(np.float64)
    qnorm = np.linalg.norm(qv)
    if qnorm == 0.0:
        logger.warning("extend_with_query: zero-norm query vector; no edges formed")
        return ExtendedGraph(base=graph, query_id=QUERY_NODE_ID, query_edges=[])
    qv = qv / qnorm

    node_ids = [qid for qid in graph.nodes if qid in vectors]
    if len(node_ids) != graph.n:
        missing = sorted(set(graph.nodes) - set(node_ids))
        raise DataError(f"extend_with_query: vectors missing for nodes {missing[:5]}")
    first = vectors[node_ids[0]]
    if first.dim != query_vec.dim:
        raise DataError(
            f"extend_with_query: query dim {query_vec.dim} != corpus dim {first.dim}")

    unit, zero_ids = _normalized_matrix(vectors, node_ids)
    sims = unit @ qv
    zero_set = set(zero_ids)
    query_edges = [
        (node_ids[i], float(sims[i]))
        for i in np.nonzero(sims >= graph.threshold)[0].tolist()
        if node_ids[i] not in zero_set
    ]
    return ExtendedGraph(base=graph, query_id=QUERY_NODE_ID, query_edges=query_edges)


def _structural_payload(graph: QQGraph) -> dict:
    return {
        "version": GRAPH_FORMAT_VERSION,
        "threshold": graph.threshold,
        "backend_id": graph.backend_id,
        "built_at": graph.built_at,
        "nodes": graph.nodes,
        "edges": [[a, b, w] for a, b, w in graph.edges],
    }


def _checksum(payload: dict) -> str:
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":"), ensure_ascii=False)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def save_graph(graph: QQGraph, path: str | Path) -> None:
    payload = _structural_payload(graph)
    payload["checksum"] = _checksum(_structural_payload(graph))
    Path(path).write_text(json.dumps(payload, ensure_ascii=False), encoding="utf-8")


def load_graph(path: str | Path) -> QQGraph:
    """Lossless inverse of save_graph; verifies version and checksum."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"graph file not found: {path}")
    raw = path.read_text(encoding="utf-8")
    try:
        payload = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise CorruptFileError(f"graph file is not valid JSON: {path}") from exc
    version = payload.get("version")
    if version != GRAPH_FORMAT_VERSION:
        raise VersionMismatchError(
            f"graph format version {version!r} (supported: {GRAPH_FORMAT_VERSION})")
    for key in ("threshold", "backend_id", "nodes", "edges", "checksum"):
        if key not in payload:
            raise CorruptFileError(f"graph file missing field {key!r}: {path}")
    graph = QQGraph(
        nodes=list(payload["nodes"]),
        edges=[(a, b, float(w)) for a, b, w in payload["edges"]],
        threshold=float(payload["threshold"]),
        backend_id=payload["backend_id"],
        built_at=payload.get("built_at", ""),
    )
    if _checksum(_structural_payload(graph)) != payload["checksum"]:
        raise CorruptFileError(f"graph checksum mismatch: {path}")
    return graph


def graph_stats(graph: QQGraph) -> dict:
    """Density, degree and component statistics; the recalibration report for
    choosing a similarity threshold."""
    n = graph.n
    m = len(graph.edges)
    degrees = dict.fromkeys(range(n), 0)
    for a, b, _ in graph.edges:
        degrees[graph.node_index(a)] += 1
        degrees[graph.node_index(b)] += 1

    seen: set[int] = set()
    components = []
    adj = graph.adjacency()
    for start in range(n):
        if start in seen:
            continue
        stack = [start]
        seen.add(start)
        size = 0
        while stack:
            u = stack.pop()
            size += 1
            for v, _ in adj[u]:
                if v not in seen:
                    seen.add(v)
                    stack.append(v)
        components.append(size)

    deg_values = sorted(degrees.values())
    return {
        "nodes": n,
        "edges": m,
        "density": (2.0 * m / (n * (n - 1))) if n > 1 else 0.0,
        "isolated_nodes": sum(1 for d in deg_values if d == 0),
        "components": len(components),
        "largest_component": max(components) if components else 0,
        "mean_degree": (2.0 * m / n) if n else 0.0,
        "max_degree": deg_values[-1] if deg_values else 0,
        "threshold": graph.threshold,
        "backend_id": graph.backend_id,
    }


__all__ = [
    "QQGraph",
    "ExtendedGraph",
    "QUERY_NODE_ID",
    "GRAPH_FORMAT_VERSION",
    "build_graph",
    "extend_with_query",
    "save_graph",
    "load_graph",
    "graph_stats",
]
