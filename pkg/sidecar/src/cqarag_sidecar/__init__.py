"""cqarag-sidecar: one process serving the four model capabilities the
answer-generation engine consumes over HTTP."""

__version__ = "0.1.0"
