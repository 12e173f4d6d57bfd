"""cqarag: retrieval-augmented answer generation for community Q&A corpora.

Retrieval walks a cosine-similarity graph over prior questions with a
query-personalized PageRank, the retrieved context is enriched with
knowledge-graph triplets, answers come from a pluggable generation backend,
and generated answers are scored for lexical and factual alignment with the
accepted ones.
"""

__version__ = "0.1.0"
