"""Query-personalized PageRank over the extended question graph.

Power iteration on the row-normalized weighted adjacency of the extended
graph. All restart mass sits on the query node; dangling nodes (no
outgoing weight) hand their mass back to the restart distribution, which
keeps the score vector a probability distribution over all nodes
including the query. Corpus nodes only are ranked.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .graph import ExtendedGraph
from .kernels import TransitionMatrix

logger = logging.getLogger(__name__)


@dataclass
class PprResult:
    scores: dict[str, float]  # corpus nodes only
    alpha: float
    iterations_used: int
    converged: bool
    query_score: float  # restart-node mass, kept so the full vector sums to 1


@dataclass
class RetrievalSet:
    query_id: str
    items: list[tuple[str, float]]  # (question_id, score), score desc, id asc on ties


def transition_matrix(g: ExtendedGraph, compiled: bool | None = None) -> TransitionMatrix:
    """Row-normalized CSR over corpus nodes 0..n-1 plus the query node n."""
    base = g.base
    n = base.n
    rows: list[list[tuple[int, float]]] = [[] for _ in range(n + 1)]
    for a, b, w in base.edges:
        ia, ib = base.node_index(a), base.node_index(b)
        rows[ia].append((ib, w))
        rows[ib].append((ia, w))
    for qid, w in g.query_edges:
        i = base.node_index(qid)
        rows[n].append((i, w))
        rows[i].append((n, w))

    indptr = np.zeros(n + 2, dtype=np.int64)
    indices: list[int] = []
    data: list[float] = []
    for i, row in enumerate(rows):
        total = sum(w for _, w in row)
        if total > 0.0:
            row.sort()
            for j, w in row:
                indices.append(j)
                data.append(w / total)
        indptr[i + 1] = len(indices)
    return TransitionMatrix(
        indptr,
        np.asarray(indices, dtype=np.int64),
        np.asarray(data, dtype=np.float64),
        n + 1,
        compiled=compiled,
    )


def query_aware_pagerank(g: ExtendedGraph, alpha: float = 0.85, max_iter: int = 100,
                         tol: float = 1e-6, compiled: bool | None = None) -> PprResult:
    if not (0.0 < alpha < 1.0):
        raise ValueError(f"alpha must be in (0, 1), got {alpha}")
    if max_iter < 1:
        raise ValueError("max_iter must be >= 1")
    if tol <= 0:
        raise ValueError("tol must be > 0")

    base = g.base
    n = base.n
    matrix = transition_matrix(g, compiled=compiled)
    dangling = matrix.row_sums() == 0.0
    q = n  # query node index

    # Start at the restart distribution: walk mass then never touches nodes
    # unreachable from the query, so their scores stay exactly zero.
    x = np.zeros(n + 1, dtype=np.float64)
    x[q] = 1.0
    converged = False
    iterations = 0
    for iterations in range(1, max_iter + 1):
        y = matrix.sweep(x)
        danglesum = float(x[dangling].sum())
        y *= alpha
        y[q] += alpha * danglesum + (1.0 - alpha)
        if float(np.abs(y - x).sum()) < tol:
            x = y
            converged = True
            break
        x = y
    if not converged:
        logger.warning(
            "query_aware_pagerank: no convergence after %d iterations (alpha=%g, tol=%g)",
            max_iter, alpha, tol)

    scores = {qid: float(x[base.node_index(qid)]) for qid in base.nodes}
    return PprResult(
        scores=scores,
        alpha=alpha,
        iterations_used=iterations,
        converged=converged,
        query_score=float(x[q]),
    )


def top_k(result: PprResult, k: int, query_id: str = "") -> RetrievalSet:
    """k highest-scoring corpus nodes, score descending, ascending id on
    ties; nodes without positive score are never returned."""
    if k < 1:
        raise ValueError("k must be >= 1")
    ranked = sorted(
        ((qid, s) for qid, s in result.scores.items() if s > 0.0),
        key=lambda item: (-item[1], item[0]),
    )
    return RetrievalSet(query_id=query_id, items=ranked[:k])


def cosine_top_k(similarities: dict[str, float], k: int, query_id: str = "") -> RetrievalSet:
    """Plain similarity ranking over the corpus; the text-retrieval mode."""
    if k < 1:
        raise ValueError("k must be >= 1")
    ranked = sorted(similarities.items(), key=lambda item: (-item[1], item[0]))
    return RetrievalSet(query_id=query_id, items=ranked[:k])


__all__ = [
    "PprResult",
    "RetrievalSet",
    "transition_matrix",
    "query_aware_pagerank",
    "top_k",
    "cosine_top_k",
]
