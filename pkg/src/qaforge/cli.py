"""Command-line entry points for every pipeline stage.

Exit codes: 0 success, 1 usage/configuration error, 2 data error,
3 transport error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .corpus import Passage, filter_by_length, parse_passage_stream, sample_passages
from .dataset import build_training_mix, emit_squad, read_squad, write_squad
from .errors import (
    ConfigurationError,
    DataError,
    PipelineError,
    QAForgeError,
    TransportError,
)
from .generator import Candidate, GenerationRequest, derive_seed, train_reference
from .metrics import (
    bleu,
    evaluate_dataset,
    load_profile_table,
    make_profile,
    tokenize_for_f1,
)
from .parsefilter import FilterConfig, FilterStats, SyntheticExample, run_filter_pipeline
from .pipeline import (
    PipelineConfig,
    PipelineReport,
    default_seed,
    read_training_corpus,
    run_pipeline,
    stats_summary,
)
from .remote import RemoteGeneratorClient

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_TRANSPORT = 3


class _UsageError(ConfigurationError):
    pass


class _ArgumentParser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(f"{self.prog}: {message}")


def _read_jsonl(path: str) -> list[dict]:
    records = []
    try:
        with open(path, encoding="utf-8") as handle:
            for line_number, line in enumerate(handle, start=1):
                if not line.strip():
                    continue
                try:
                    records.append(json.loads(line))
                except json.JSONDecodeError as exc:
                    raise DataError(f"{path}:{line_number}: invalid record: {exc.msg}") from exc
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    return records


def _write_jsonl(path: str, records) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for record in records:
            handle.write(json.dumps(record, ensure_ascii=False) + "\n")


def _load_passages(path: str) -> list[Passage]:
    passages = []
    for line_number, record in enumerate(_read_jsonl(path), start=1):
        try:
            passages.append(Passage.build(record["id"], record["text"], record["language"]))
        except (TypeError, KeyError, ValueError) as exc:
            raise DataError(f"{path}: record {line_number}: {exc}") from exc
    return passages


def cmd_ingest(args) -> int:
    errors = []
    try:
        stream = open(args.input, "rb")
    except OSError as exc:
        raise DataError(f"cannot read {args.input}: {exc}") from exc
    with stream:
        passages = list(parse_passage_stream(stream, on_error=errors.append))
    for error in errors:
        logger.warning("skipped record at line %d: %s", error.line_number, error.message)
    if args.language:
        passages = [p for p in passages if p.language == args.language.lower()]
    passages = list(filter_by_length(passages, args.min_tokens, args.max_tokens))
    if args.sample is not None:
        passages = sample_passages(passages, args.sample, args.seed)
    _write_jsonl(args.output, (p.to_record() for p in passages))
    print(f"wrote {len(passages)} passages to {args.output} ({len(errors)} records skipped)")
    return EXIT_OK


def cmd_generate(args) -> int:
    passages = _load_passages(args.passages)
    if args.backend == "reference":
        if not args.train_corpus:
            raise ConfigurationError("--backend reference requires --train-corpus")
        backend = train_reference(read_training_corpus(args.train_corpus), order=args.order)
    else:
        backend = RemoteGeneratorClient(args.endpoint)
    rows = []
    for passage in passages:
        request = GenerationRequest(
            passage=passage.text,
            language=passage.language,
            num_samples=args.num_samples,
            top_k=args.top_k,
            max_output_tokens=args.max_output_tokens,
            target_language=args.target_language,
        )
        for candidate in backend.generate(request, seed=derive_seed(args.seed, passage.id)):
            rows.append(
                {"passage_id": passage.id, "text": candidate.text, "lm_score": candidate.lm_score}
            )
    _write_jsonl(args.output, rows)
    print(f"wrote {len(rows)} candidates for {len(passages)} passages to {args.output}")
    return EXIT_OK


def cmd_filter(args) -> int:
    passages = {p.id: p for p in _load_passages(args.passages)}
    grouped: dict[str, list[Candidate]] = {}
    for line_number, record in enumerate(_read_jsonl(args.candidates), start=1):
        try:
            passage_id = record["passage_id"]
            candidate = Candidate(text=record["text"], lm_score=record["lm_score"])
        except (TypeError, KeyError) as exc:
            raise DataError(
                f"{args.candidates}: record {line_number}: needs passage_id/text/lm_score"
            ) from exc
        if passage_id not in passages:
            raise DataError(
                f"{args.candidates}: record {line_number}: unknown passage id {passage_id!r}"
            )
        grouped.setdefault(passage_id, []).append(candidate)

    config = FilterConfig(
        samples_per_passage=args.per_passage,
        keep_per_passage=args.keep,
        require_extractive=not args.no_extractive,
        dedup=not args.no_dedup,
        length_normalize=args.length_normalize,
    )
    totals = FilterStats()
    examples: list[SyntheticExample] = []
    for passage_id in sorted(grouped):
        kept, stats = run_filter_pipeline(passages[passage_id], grouped[passage_id], config)
        examples.extend(kept)
        totals.merge(stats)
    _write_jsonl(args.output, (e.to_record() for e in examples))
    if args.stats:
        Path(args.stats).write_text(
            json.dumps(
                {
                    "candidates": totals.candidates,
                    "parsed": totals.parsed,
                    "extractive": totals.extractive,
                    "deduped": totals.deduped,
                    "kept": totals.kept,
                    "parse_failures": dict(sorted(totals.parse_failures.items())),
                },
                ensure_ascii=False,
            )
            + "\n",
            encoding="utf-8",
        )
    print(f"kept {totals.kept} of {totals.candidates} candidates -> {args.output}")
    return EXIT_OK


def cmd_emit(args) -> int:
    passages = {p.id: p for p in _load_passages(args.passages)}
    examples = []
    for line_number, record in enumerate(_read_jsonl(args.examples), start=1):
        try:
            examples.append(SyntheticExample.from_record(record))
        except (TypeError, KeyError) as exc:
            raise DataError(f"{args.examples}: record {line_number}: {exc}") from exc
    dataset = emit_squad(examples, passages)
    write_squad(dataset, args.output)
    total = sum(len(p.qas) for a in dataset.articles for p in a.paragraphs)
    print(f"wrote {total} entries across {len(dataset.articles)} articles to {args.output}")
    return EXIT_OK


def cmd_mix(args) -> int:
    overrides = {}
    for stage in ("synthetic", "gold"):
        stage_overrides = {}
        if args.epochs is not None:
            stage_overrides["epochs"] = args.epochs
        if args.batch_size is not None:
            stage_overrides["batch_size"] = args.batch_size
        if args.learning_rate is not None:
            stage_overrides["learning_rate"] = args.learning_rate
        if stage_overrides:
            overrides[stage] = stage_overrides
    manifest = build_training_mix(args.synthetic, args.gold, overrides or None)
    manifest.write(args.output)
    print(f"wrote manifest with {len(manifest.stages)} stage(s) to {args.output}")
    return EXIT_OK


def _read_squad_file(path: str):
    try:
        with open(path, "rb") as handle:
            return read_squad(handle)
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc


def cmd_eval(args) -> int:
    result = _read_squad_file(args.dataset)
    for violation in result.violations:
        logger.warning("dataset violation (%s): %s", violation.qa_id, violation.message)
    try:
        predictions = json.loads(Path(args.predictions).read_text(encoding="utf-8"))
    except OSError as exc:
        raise DataError(f"cannot read {args.predictions}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise DataError(f"{args.predictions}: invalid JSON: {exc.msg}") from exc
    if not isinstance(predictions, dict):
        raise DataError(f"{args.predictions}: predictions must be an object of id -> answer")
    table = load_profile_table(args.profile_config) if args.profile_config else None
    profile = make_profile(args.mode, args.language, table)
    report = evaluate_dataset(
        predictions, result.dataset, profile, missing_as_zero=args.missing_as_zero
    )
    print(json.dumps(report.to_json_dict(include_per_example=False), ensure_ascii=False))
    if args.output:
        Path(args.output).write_text(
            json.dumps(report.to_json_dict(), ensure_ascii=False, indent=2) + "\n",
            encoding="utf-8",
        )
    return EXIT_OK


def _read_token_lines(path: str, profile) -> list[list[str]]:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    return [tokenize_for_f1(line, profile) for line in text.splitlines()]


def cmd_bleu(args) -> int:
    profile = make_profile("mlqa", args.language)
    hypotheses = _read_token_lines(args.hyp, profile)
    references = _read_token_lines(args.ref, profile)
    score = bleu(hypotheses, references, max_n=args.max_n)
    print(json.dumps({"bleu": score}))
    return EXIT_OK


def cmd_run(args) -> int:
    mapping: dict = {}
    if args.config:
        try:
            raw = Path(args.config).read_text(encoding="utf-8")
        except OSError as exc:
            raise DataError(f"cannot read {args.config}: {exc}") from exc
        try:
            mapping = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"{args.config}: invalid JSON: {exc.msg}") from exc
        if not isinstance(mapping, dict):
            raise ConfigurationError(f"{args.config}: config must be a JSON object")
    for key in (
        "input",
        "output_dir",
        "language",
        "min_tokens",
        "max_tokens",
        "sample_n",
        "seed",
        "backend",
        "endpoint",
        "train_corpus",
        "order",
        "num_samples",
        "top_k",
        "max_output_tokens",
        "keep_per_passage",
        "require_extractive",
        "dedup",
        "length_normalize",
        "target_language",
        "workers",
    ):
        value = getattr(args, key)
        if value is not None:
            mapping[key] = value
    if args.resume:
        mapping["resume"] = True
    config = PipelineConfig.from_mapping(mapping)
    report = run_pipeline(config)
    print(stats_summary(report))
    print(f"dataset: {report.outputs['dataset']}")
    return EXIT_OK


def cmd_stats(args) -> int:
    try:
        payload = json.loads(Path(args.report).read_text(encoding="utf-8"))
    except OSError as exc:
        raise DataError(f"cannot read {args.report}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise DataError(f"{args.report}: invalid JSON: {exc.msg}") from exc
    counts = payload.get("counts", {})
    if not isinstance(counts, dict):
        raise DataError(f"{args.report}: 'counts' must be an object")
    report = PipelineReport(counts=counts, record_errors=payload.get("record_errors", 0))
    print(stats_summary(report))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _ArgumentParser(prog="qaforge")
    parser.add_argument("--verbose", action="store_true", help="log at INFO level")
    subparsers = parser.add_subparsers(dest="command", required=True)

    p = subparsers.add_parser("ingest", help="parse, length-filter, and sample passages")
    p.add_argument("--input", required=True)
    p.add_argument("--language", help="keep only passages in this language")
    p.add_argument("--min-tokens", type=int, default=30)
    p.add_argument("--max-tokens", type=int, default=450)
    p.add_argument("--sample", type=int, default=None)
    p.add_argument("--seed", type=int, default=default_seed())
    p.add_argument("--output", required=True)
    p.set_defaults(func=cmd_ingest)

    p = subparsers.add_parser("generate", help="sample candidates for each passage")
    p.add_argument("--passages", required=True)
    p.add_argument("--backend", choices=["reference", "remote"], default="reference")
    p.add_argument("--train-corpus", help="JSONL of passage/question/answer triples")
    p.add_argument("--order", type=int, default=3)
    p.add_argument("--endpoint", help="remote service base URL")
    p.add_argument("--num-samples", type=int, default=20)
    p.add_argument("--top-k", type=int, default=10)
    p.add_argument("--max-output-tokens", type=int, default=64)
    p.add_argument("--target-language", default=None)
    p.add_argument("--seed", type=int, default=default_seed())
    p.add_argument("--output", required=True)
    p.set_defaults(func=cmd_generate)

    p = subparsers.add_parser("filter", help="parse, validate, and rank candidates")
    p.add_argument("--candidates", required=True)
    p.add_argument("--passages", required=True)
    p.add_argument("--keep", type=int, default=10)
    p.add_argument("--per-passage", type=int, default=20)
    p.add_argument("--no-extractive", action="store_true")
    p.add_argument("--no-dedup", action="store_true")
    p.add_argument("--length-normalize", action="store_true")
    p.add_argument("--stats")
    p.add_argument("--output", required=True)
    p.set_defaults(func=cmd_filter)

    p = subparsers.add_parser("emit", help="write examples as a training document")
    p.add_argument("--examples", required=True)
    p.add_argument("--passages", required=True)
    p.add_argument("--output", required=True)
    p.set_defaults(func=cmd_emit)

    p = subparsers.add_parser("mix", help="build a staged training manifest")
    p.add_argument("--synthetic", nargs="*", default=[])
    p.add_argument("--gold", nargs="*", default=[])
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--learning-rate", type=float)
    p.add_argument("--output", required=True)
    p.set_defaults(func=cmd_mix)

    p = subparsers.add_parser("eval", help="score predictions against a dataset")
    p.add_argument("--dataset", required=True)
    p.add_argument("--predictions", required=True)
    p.add_argument("--mode", choices=["squad", "mlqa"], default="squad")
    p.add_argument("--language", default="en")
    p.add_argument("--profile-config")
    p.add_argument("--missing-as-zero", action="store_true")
    p.add_argument("--output")
    p.set_defaults(func=cmd_eval)

    p = subparsers.add_parser("bleu", help="corpus BLEU of hypothesis vs reference lines")
    p.add_argument("--hyp", required=True)
    p.add_argument("--ref", required=True)
    p.add_argument("--language", default="en")
    p.add_argument("--max-n", type=int, default=4)
    p.set_defaults(func=cmd_bleu)

    p = subparsers.add_parser("run", help="run the full pipeline from a config file")
    p.add_argument("--config")
    p.add_argument("--input")
    p.add_argument("--output-dir", dest="output_dir")
    p.add_argument("--language")
    p.add_argument("--min-tokens", dest="min_tokens", type=int)
    p.add_argument("--max-tokens", dest="max_tokens", type=int)
    p.add_argument("--sample-n", dest="sample_n", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--backend", choices=["reference", "remote"])
    p.add_argument("--endpoint")
    p.add_argument("--train-corpus", dest="train_corpus")
    p.add_argument("--order", type=int)
    p.add_argument("--num-samples", dest="num_samples", type=int)
    p.add_argument("--top-k", dest="top_k", type=int)
    p.add_argument("--max-output-tokens", dest="max_output_tokens", type=int)
    p.add_argument("--keep-per-passage", dest="keep_per_passage", type=int)
    p.add_argument(
        "--extractive",
        dest="require_extractive",
        action=argparse.BooleanOptionalAction,
        default=None,
    )
    p.add_argument(
        "--dedup", dest="dedup", action=argparse.BooleanOptionalAction, default=None
    )
    p.add_argument(
        "--length-normalize",
        dest="length_normalize",
        action=argparse.BooleanOptionalAction,
        default=None,
    )
    p.add_argument("--target-language", dest="target_language")
    p.add_argument("--workers", type=int)
    p.add_argument("--resume", action="store_true")
    p.set_defaults(func=cmd_run)

    p = subparsers.add_parser("stats", help="print the stage funnel of a pipeline report")
    p.add_argument("--report", required=True)
    p.set_defaults(func=cmd_stats)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except ConfigurationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except PipelineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_TRANSPORT if isinstance(exc.cause, TransportError) else EXIT_DATA
    except TransportError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_TRANSPORT
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except QAForgeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
