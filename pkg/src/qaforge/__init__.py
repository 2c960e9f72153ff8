"""Multilingual synthetic question-answer generation, filtering, and evaluation."""

from .corpus import Passage, count_tokens, filter_by_length, parse_passage_stream, sample_passages
from .dataset import (
    SquadDataset,
    TrainingManifest,
    build_training_mix,
    emit_squad,
    read_squad,
    write_squad,
)
from .generator import (
    Candidate,
    GenerationRequest,
    ReferenceBackend,
    derive_seed,
    format_target,
    train_reference,
)
from .metrics import (
    EvalReport,
    NormalizationProfile,
    bleu,
    evaluate_dataset,
    exact_match,
    f1,
    make_profile,
    normalize_answer,
    tokenize_for_f1,
)
from .parsefilter import (
    FilterConfig,
    QAPair,
    SyntheticExample,
    check_extractive,
    lm_filter,
    parse_candidate,
    run_filter_pipeline,
)
from .pipeline import PipelineConfig, PipelineReport, run_pipeline, stats_summary
from .remote import RemoteGeneratorClient

__version__ = "0.1.0"

__all__ = [
    "Passage",
    "count_tokens",
    "filter_by_length",
    "parse_passage_stream",
    "sample_passages",
    "SquadDataset",
    "TrainingManifest",
    "build_training_mix",
    "emit_squad",
    "read_squad",
    "write_squad",
    "Candidate",
    "GenerationRequest",
    "ReferenceBackend",
    "derive_seed",
    "format_target",
    "train_reference",
    "EvalReport",
    "NormalizationProfile",
    "bleu",
    "evaluate_dataset",
    "exact_match",
    "f1",
    "make_profile",
    "normalize_answer",
    "tokenize_for_f1",
    "FilterConfig",
    "QAPair",
    "SyntheticExample",
    "check_extractive",
    "lm_filter",
    "parse_candidate",
    "run_filter_pipeline",
    "PipelineConfig",
    "PipelineReport",
    "run_pipeline",
    "stats_summary",
    "RemoteGeneratorClient",
    "__version__",
]
