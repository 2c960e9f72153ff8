"""Passage ingestion: record parsing, token counting, length filtering, seeded sampling."""

from __future__ import annotations

import json
import random
import unicodedata
from collections.abc import Callable, Iterable, Iterator, Sequence
from dataclasses import dataclass

from .errors import ConfigurationError
from .segmentation import mixed_segment

__all__ = [
    "Passage",
    "RecordError",
    "count_tokens",
    "filter_by_length",
    "sample_passages",
    "parse_passage_stream",
]


def count_tokens(text: str, language: str) -> int:
    """Count tokens: whitespace runs, except zh where Han characters count individually."""
    if language.lower() == "zh":
        return len(mixed_segment(text))
    return len(text.split())


@dataclass(frozen=True)
class Passage:
    """An immutable source paragraph. Text is NFC-normalized and stripped on build."""

    id: str
    text: str
    language: str
    token_count: int

    @classmethod
    def build(cls, id: str, text: str, language: str) -> "Passage":
        normalized = unicodedata.normalize("NFC", text).strip()
        if not normalized:
            raise ValueError("passage text is empty after trimming")
        lang = language.strip().lower()
        if not lang:
            raise ValueError("passage language is empty")
        return cls(
            id=id,
            text=normalized,
            language=lang,
            token_count=count_tokens(normalized, lang),
        )

    def to_record(self) -> dict:
        return {
            "id": self.id,
            "text": self.text,
            "language": self.language,
            "token_count": self.token_count,
        }


@dataclass(frozen=True)
class RecordError:
    """One skipped ingestion record and why."""

    line_number: int
    message: str


def filter_by_length(
    passages: Iterable[Passage], min_tokens: int, max_tokens: int
) -> Iterator[Passage]:
    """Keep passages with min_tokens <= token_count <= max_tokens, preserving order.

    Bounds are inclusive. Raises ConfigurationError for non-positive or
    inverted bounds.
    """
    if min_tokens <= 0:
        raise ConfigurationError(f"min_tokens must be positive, got {min_tokens}")
    if min_tokens > max_tokens:
        raise ConfigurationError(
            f"min_tokens ({min_tokens}) exceeds max_tokens ({max_tokens})"
        )

    def _generate() -> Iterator[Passage]:
        for passage in passages:
            if min_tokens <= passage.token_count <= max_tokens:
                yield passage

    return _generate()


def sample_passages(passages: Sequence[Passage], n: int, seed: int) -> list[Passage]:
    """Draw min(n, len) distinct passages uniformly without replacement.

    Pure function of (passages, n, seed): the same inputs always produce
    the same sequence.
    """
    if n < 0:
        raise ConfigurationError(f"sample size must be >= 0, got {n}")
    population = list(passages)
    return random.Random(seed).sample(population, min(n, len(population)))


def parse_passage_stream(
    stream: Iterable[bytes | str],
    on_error: Callable[[RecordError], None] | None = None,
) -> Iterator[Passage]:
    """Yield one Passage per valid record line, in input order.

    Each non-blank line must be a JSON object with string fields ``id``,
    ``text``, and ``language``; unknown fields are ignored. Malformed lines
    and duplicate ids are skipped and reported to ``on_error`` with their
    line number instead of aborting the stream.
    """
    seen_ids: set[str] = set()

    def report(line_number: int, message: str) -> None:
        if on_error is not None:
            on_error(RecordError(line_number=line_number, message=message))

    for line_number, raw in enumerate(stream, start=1):
        if isinstance(raw, bytes):
            try:
                line = raw.decode("utf-8")
            except UnicodeDecodeError as exc:
                report(line_number, f"invalid utf-8: {exc}")
                continue
        else:
            line = raw
        if not line.strip():
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            report(line_number, f"invalid record: {exc.msg}")
            continue
        if not isinstance(record, dict):
            report(line_number, "record is not an object")
            continue
        missing = [key for key in ("id", "text", "language") if key not in record]
        if missing:
            report(line_number, f"missing field(s): {', '.join(missing)}")
            continue
        bad_types = [
            key for key in ("id", "text", "language") if not isinstance(record[key], str)
        ]
        if bad_types:
            report(line_number, f"non-string field(s): {', '.join(bad_types)}")
            continue
        if not record["id"]:
            report(line_number, "empty id")
            continue
        try:
            passage = Passage.build(record["id"], record["text"], record["language"])
        except ValueError as exc:
            report(line_number, str(exc))
            continue
        if passage.id in seen_ids:
            report(line_number, f"duplicate id: {passage.id}")
            continue
        seen_ids.add(passage.id)
        yield passage
