"""End-to-end orchestration: ingest, length-filter, sample, generate, filter, emit.

One 64-bit seed drives every stochastic choice: passage subsampling uses it
directly and each passage's sampler seed is derived from (seed, passage id),
so results are identical under any worker schedule. All data artifacts are
written in ascending passage-id order, making reruns byte-identical.
"""

from __future__ import annotations

import json
import logging
import os
import threading
import time
from concurrent.futures import FIRST_EXCEPTION, ThreadPoolExecutor, wait
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any

from .corpus import Passage, RecordError, filter_by_length, parse_passage_stream, sample_passages
from .dataset import emit_squad, write_squad
from .errors import ConfigurationError, DataError, PipelineError
from .generator import GenerationRequest, Candidate, derive_seed, train_reference
from .parsefilter import FilterConfig, FilterStats, SyntheticExample, run_filter_pipeline
from .remote import RemoteGeneratorClient

logger = logging.getLogger(__name__)

SEED_ENV = "QAFORGE_SEED"

# Stage names in funnel order; "generated" starts the per-candidate section.
PASSAGE_STAGES = ("ingested", "length_kept", "sampled")
CANDIDATE_STAGES = ("generated", "parsed", "extractive", "deduped", "kept")
_SECTION_STARTS = {PASSAGE_STAGES[0], CANDIDATE_STAGES[0]}


def default_seed() -> int:
    raw = os.environ.get(SEED_ENV)
    if raw is None:
        return 0
    try:
        return int(raw)
    except ValueError as exc:
        raise ConfigurationError(f"{SEED_ENV} must be an integer, got {raw!r}") from exc


@dataclass
class PipelineConfig:
    """Every knob of one pipeline run; loadable from a flat JSON document."""

    input: str
    output_dir: str
    language: str | None = None
    min_tokens: int = 30
    max_tokens: int = 450
    sample_n: int | None = None
    seed: int | None = None
    backend: str = "reference"
    endpoint: str | None = None
    train_corpus: str | None = None
    order: int = 3
    num_samples: int = 20
    top_k: int = 10
    max_output_tokens: int = 64
    keep_per_passage: int = 10
    require_extractive: bool = True
    dedup: bool = True
    length_normalize: bool = False
    target_language: str | None = None
    workers: int = 1
    resume: bool = False

    @classmethod
    def from_mapping(cls, mapping: dict[str, Any]) -> "PipelineConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(mapping) - known
        if unknown:
            raise ConfigurationError(f"unknown config key(s): {sorted(unknown)}")
        if "input" not in mapping or "output_dir" not in mapping:
            raise ConfigurationError("config requires 'input' and 'output_dir'")
        return cls(**mapping)

    def resolved_seed(self) -> int:
        return self.seed if self.seed is not None else default_seed()

    def filter_config(self) -> FilterConfig:
        return FilterConfig(
            samples_per_passage=self.num_samples,
            keep_per_passage=self.keep_per_passage,
            require_extractive=self.require_extractive,
            dedup=self.dedup,
            length_normalize=self.length_normalize,
        )

    def validate(self) -> None:
        if self.backend not in ("reference", "remote"):
            raise ConfigurationError(f"unknown backend: {self.backend!r}")
        if self.backend == "reference" and not self.train_corpus:
            raise ConfigurationError("reference backend requires train_corpus")
        if self.sample_n is not None and self.sample_n < 0:
            raise ConfigurationError(f"sample_n must be >= 0, got {self.sample_n}")
        if self.workers < 1:
            raise ConfigurationError(f"workers must be >= 1, got {self.workers}")
        if self.top_k < 1:
            raise ConfigurationError(f"top_k must be >= 1, got {self.top_k}")
        if self.max_output_tokens < 1:
            raise ConfigurationError(
                f"max_output_tokens must be >= 1, got {self.max_output_tokens}"
            )
        self.filter_config()
        if self.min_tokens <= 0 or self.min_tokens > self.max_tokens:
            raise ConfigurationError(
                f"invalid token bounds ({self.min_tokens}, {self.max_tokens})"
            )


@dataclass
class PipelineReport:
    """Per-stage counts plus run metadata for one pipeline execution."""

    counts: dict[str, int] = field(default_factory=dict)
    record_errors: int = 0
    parse_failures: dict[str, int] = field(default_factory=dict)
    elapsed_seconds: float = 0.0
    outputs: dict[str, str] = field(default_factory=dict)

    def to_json_dict(self) -> dict:
        return {
            "counts": self.counts,
            "record_errors": self.record_errors,
            "parse_failures": self.parse_failures,
            "elapsed_seconds": self.elapsed_seconds,
            "outputs": self.outputs,
        }


def read_training_corpus(path: str | Path) -> list[tuple[str, str, str]]:
    """Load (passage, question, answer) triples from a JSONL file."""
    triples = []
    with open(path, encoding="utf-8") as handle:
        for line_number, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}:{line_number}: invalid record: {exc.msg}") from exc
            try:
                triples.append((record["passage"], record["question"], record["answer"]))
            except (TypeError, KeyError) as exc:
                raise DataError(
                    f"{path}:{line_number}: record needs passage/question/answer"
                ) from exc
    return triples


def build_backend(config: PipelineConfig):
    if config.backend == "remote":
        return RemoteGeneratorClient(config.endpoint)
    return train_reference(read_training_corpus(config.train_corpus), order=config.order)


class _CheckpointJournal:
    """Append-only record of per-passage generation results for resumption."""

    def __init__(self, path: Path, resume: bool):
        self.path = path
        self.completed: dict[str, list[Candidate]] = {}
        self._lock = threading.Lock()
        if resume and path.exists():
            self._load()
        elif path.exists():
            path.unlink()
        self._handle = open(path, "a", encoding="utf-8")

    def _load(self) -> None:
        with open(self.path, encoding="utf-8") as handle:
            for line in handle:
                if not line.strip():
                    continue
                try:
                    entry = json.loads(line)
                    candidates = [
                        Candidate(text=c["text"], lm_score=c["lm_score"])
                        for c in entry["candidates"]
                    ]
                except (json.JSONDecodeError, TypeError, KeyError):
                    # A torn final line from an interrupted run is expected.
                    continue
                self.completed[entry["passage_id"]] = candidates

    def get(self, passage_id: str) -> list[Candidate] | None:
        return self.completed.get(passage_id)

    def record(self, passage_id: str, candidates: list[Candidate]) -> None:
        entry = {
            "passage_id": passage_id,
            "candidates": [{"text": c.text, "lm_score": c.lm_score} for c in candidates],
        }
        with self._lock:
            self._handle.write(json.dumps(entry, ensure_ascii=False) + "\n")
            self._handle.flush()
            self.completed[passage_id] = candidates

    def close(self, *, discard: bool) -> None:
        self._handle.close()
        if discard and self.path.exists():
            self.path.unlink()


def _write_jsonl(path: Path, records: list[dict]) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for record in records:
            handle.write(json.dumps(record, ensure_ascii=False) + "\n")


def run_pipeline(config: PipelineConfig, backend=None) -> PipelineReport:
    """Execute the full pipeline and write all artifacts under ``output_dir``.

    On a stage failure, a checkpoint naming the stage and the completed
    passage ids is written and PipelineError raised; rerunning with
    ``resume`` set skips regeneration for completed passages and produces
    the same final dataset an uninterrupted run would.
    """
    config.validate()
    started = time.monotonic()
    seed = config.resolved_seed()
    out_dir = Path(config.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    checkpoint_meta = out_dir / "checkpoint.json"

    record_errors: list[RecordError] = []
    try:
        with open(config.input, "rb") as handle:
            ingested = list(parse_passage_stream(handle, on_error=record_errors.append))
    except OSError as exc:
        raise DataError(f"cannot read passages from {config.input}: {exc}") from exc
    for record_error in record_errors:
        logger.warning(
            "skipped record at line %d: %s", record_error.line_number, record_error.message
        )
    if config.language:
        ingested = [p for p in ingested if p.language == config.language.lower()]

    length_kept = list(filter_by_length(ingested, config.min_tokens, config.max_tokens))
    sampled = (
        sample_passages(length_kept, config.sample_n, seed)
        if config.sample_n is not None
        else length_kept
    )

    if backend is None:
        backend = build_backend(config)

    journal = _CheckpointJournal(out_dir / "checkpoint.jsonl", resume=config.resume)
    filter_config = config.filter_config()

    def process(passage: Passage) -> tuple[Passage, list[Candidate], list[SyntheticExample], FilterStats]:
        candidates = journal.get(passage.id)
        if candidates is None:
            request = GenerationRequest(
                passage=passage.text,
                language=passage.language,
                num_samples=config.num_samples,
                top_k=config.top_k,
                max_output_tokens=config.max_output_tokens,
                target_language=config.target_language,
            )
            candidates = backend.generate(request, seed=derive_seed(seed, passage.id))
            journal.record(passage.id, candidates)
        examples, stats = run_filter_pipeline(passage, candidates, filter_config)
        return passage, candidates, examples, stats

    results: dict[str, tuple[Passage, list[Candidate], list[SyntheticExample], FilterStats]] = {}
    try:
        if config.workers == 1:
            for passage in sampled:
                results[passage.id] = _run_one(process, passage)
        else:
            with ThreadPoolExecutor(max_workers=config.workers) as pool:
                futures = {pool.submit(_run_one, process, p): p for p in sampled}
                _, pending = wait(futures, return_when=FIRST_EXCEPTION)
                for future in pending:
                    future.cancel()
                for future, passage in futures.items():
                    if future.cancelled():
                        continue
                    results[passage.id] = future.result()
    except PipelineError as exc:
        journal.close(discard=False)
        checkpoint_meta.write_text(
            json.dumps(
                {
                    "stage": exc.stage,
                    "failed_passage_id": exc.failed_passage_id,
                    "completed_passage_ids": sorted(journal.completed),
                },
                ensure_ascii=False,
            )
            + "\n",
            encoding="utf-8",
        )
        raise

    try:
        ordered = [results[passage_id] for passage_id in sorted(results)]
        all_candidates = []
        all_examples = []
        totals = FilterStats()
        for passage, candidates, examples, stats in ordered:
            for candidate in candidates:
                all_candidates.append(
                    {
                        "passage_id": passage.id,
                        "text": candidate.text,
                        "lm_score": candidate.lm_score,
                    }
                )
            all_examples.extend(examples)
            totals.merge(stats)

        lookup = {p.id: p for p in sampled}
        squad = emit_squad(all_examples, lookup)

        outputs = {
            "passages": str(out_dir / "passages.jsonl"),
            "candidates": str(out_dir / "candidates.jsonl"),
            "examples": str(out_dir / "examples.jsonl"),
            "dataset": str(out_dir / "dataset.json"),
            "stats": str(out_dir / "stats.json"),
            "report": str(out_dir / "report.json"),
        }
        _write_jsonl(Path(outputs["passages"]), [p.to_record() for p in sampled])
        _write_jsonl(Path(outputs["candidates"]), all_candidates)
        _write_jsonl(Path(outputs["examples"]), [e.to_record() for e in all_examples])
        write_squad(squad, outputs["dataset"])

        counts = {
            "ingested": len(ingested),
            "length_kept": len(length_kept),
            "sampled": len(sampled),
            "generated": totals.candidates,
            "parsed": totals.parsed,
            "extractive": totals.extractive,
            "deduped": totals.deduped,
            "kept": totals.kept,
        }
        Path(outputs["stats"]).write_text(
            json.dumps(
                {"counts": counts, "record_errors": len(record_errors)}, ensure_ascii=False
            )
            + "\n",
            encoding="utf-8",
        )
    except Exception as exc:
        journal.close(discard=False)
        checkpoint_meta.write_text(
            json.dumps(
                {"stage": "emit", "completed_passage_ids": sorted(journal.completed)},
                ensure_ascii=False,
            )
            + "\n",
            encoding="utf-8",
        )
        raise PipelineError("emit", exc) from exc

    journal.close(discard=True)
    if checkpoint_meta.exists():
        checkpoint_meta.unlink()

    report = PipelineReport(
        counts=counts,
        record_errors=len(record_errors),
        parse_failures=dict(sorted(totals.parse_failures.items())),
        elapsed_seconds=time.monotonic() - started,
        outputs=outputs,
    )
    Path(outputs["report"]).write_text(
        json.dumps(report.to_json_dict(), ensure_ascii=False, indent=2) + "\n",
        encoding="utf-8",
    )
    return report


def _run_one(process, passage: Passage):
    try:
        return process(passage)
    except Exception as exc:
        raise PipelineError("generate", exc, failed_passage_id=passage.id) from exc


def stats_summary(report: PipelineReport) -> str:
    """Human-readable funnel table with per-stage drop percentages.

    Passage stages and candidate stages are separate funnels (one passage
    fans out to many candidates), so drop percentages reset at the
    ``generated`` row.
    """
    lines = [f"{'stage':<12} {'count':>10} {'drop':>8}"]
    previous: int | None = None
    for name, value in report.counts.items():
        if name in _SECTION_STARTS:
            previous = None
        if previous is None or previous == 0:
            drop = "-"
        else:
            drop = f"{100.0 * (previous - value) / previous:.1f}%"
        lines.append(f"{name:<12} {value:>10} {drop:>8}")
        previous = value
    return "\n".join(lines)
