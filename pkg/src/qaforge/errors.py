"""Exception hierarchy shared across the package.

Exit-code mapping for the CLI: ConfigurationError -> 1 (usage),
DataError -> 2 (bad inputs), TransportError -> 3 (remote service).
"""

from __future__ import annotations


class QAForgeError(Exception):
    """Base class for all package errors."""


class ConfigurationError(QAForgeError):
    """Invalid option, flag, or configuration value."""


class DataError(QAForgeError):
    """Malformed or inconsistent input data."""


class TransportError(QAForgeError):
    """Remote generation service unreachable or misbehaving.

    Carries retry metadata so batch drivers can report how hard we tried.
    """

    def __init__(self, message: str, *, url: str | None = None, attempts: int = 1):
        super().__init__(message)
        self.url = url
        self.attempts = attempts


class ProtocolError(TransportError):
    """Remote service answered, but the response violates the wire contract."""


class EmissionError(DataError):
    """A training example cannot be written to the output document format."""


class SquadParseError(DataError):
    """A dataset document does not conform to the expected schema."""


class MissingPredictionsError(DataError):
    """Evaluation was asked to score a dataset with unanswered entries."""

    def __init__(self, missing_ids: list[str]):
        preview = ", ".join(missing_ids[:5])
        more = "" if len(missing_ids) <= 5 else f" (+{len(missing_ids) - 5} more)"
        super().__init__(f"missing predictions for {len(missing_ids)} ids: {preview}{more}")
        self.missing_ids = missing_ids


class PipelineError(QAForgeError):
    """A pipeline stage failed; a resumable checkpoint has been written."""

    def __init__(self, stage: str, cause: BaseException, *, failed_passage_id: str | None = None):
        super().__init__(f"pipeline stage {stage!r} failed: {cause}")
        self.stage = stage
        self.cause = cause
        self.failed_passage_id = failed_passage_id
