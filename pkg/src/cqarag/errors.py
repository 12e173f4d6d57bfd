"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: ConfigError -> 2, BackendError -> 3,
DataError -> 4.
"""

from __future__ import annotations


class CqaragError(Exception):
    """Base class for all package errors."""


class ConfigError(CqaragError):
    """Invalid configuration (bad range, unknown key, missing field)."""

    def __init__(self, key: str, message: str):
        self.key = key
        super().__init__(f"{key}: {message}")


class DataError(CqaragError):
    """Corrupt, malformed or inconsistent data files."""


class DuplicateQuestionIdError(DataError):
    def __init__(self, question_id: str):
        self.question_id = question_id
        super().__init__(f"duplicate question_id: {question_id!r}")


class CorruptFileError(DataError):
    pass


class VersionMismatchError(DataError):
    pass


class BackendError(CqaragError):
    """A model/KG backend failed.

    ``retryable`` distinguishes transient failures (timeouts, 429, 5xx)
    from permanent ones; ``status`` carries the HTTP status when there is
    one.
    """

    def __init__(self, message: str, *, status: int | None = None, retryable: bool = False):
        self.status = status
        self.retryable = retryable
        super().__init__(message)


class DimensionMismatchError(BackendError):
    def __init__(self, expected: int, got: int):
        self.expected = expected
        self.got = got
        super().__init__(f"embedding dimension mismatch: expected {expected}, got {got}")


class ZeroNormError(CqaragError):
    """Cosine similarity is undefined for a zero-norm vector."""


class ContextLengthError(BackendError):
    """The generation backend rejected the prompt as too long."""

    def __init__(self, message: str, *, token_estimate: int, status: int | None = None):
        self.token_estimate = token_estimate
        super().__init__(message, status=status, retryable=False)


class EmbedCorpusError(BackendError):
    """Aggregate failure while embedding a corpus; lists the failed ids."""

    def __init__(self, failed_ids: list[str], partial: dict):
        self.failed_ids = list(failed_ids)
        self.partial = partial
        super().__init__(
            f"embedding failed for {len(self.failed_ids)} record(s): "
            + ", ".join(self.failed_ids[:10])
            + ("..." if len(self.failed_ids) > 10 else ""),
            retryable=True,
        )


class KgExpansionError(BackendError):
    """KG backend unreachable with a cold cache; lists unexpanded entities."""

    def __init__(self, entities: list[str]):
        self.entities = list(entities)
        super().__init__(
            f"could not expand {len(self.entities)} entit(ies): " + ", ".join(self.entities[:10]),
            retryable=True,
        )


class ExtractionError(BackendError):
    """Every configured triplet extractor failed."""
