"""Back-off n-gram language modeling with neural text-generation
augmentation for morphologically rich languages."""

__version__ = "0.1.0"

from .corpus import (
    EOS,
    SOS,
    UNK,
    CorpusStats,
    Vocabulary,
    apply_vocabulary,
    build_vocabulary,
    corpus_stats,
    normalize_and_tokenize,
    read_corpus,
    subsample,
    write_corpus,
)
from .ngram import (
    BackoffModel,
    InterpolationSpec,
    NGramCounts,
    PerplexityReport,
    context_normalization_error,
    count_ngrams,
    estimate_mkn,
    interpolate,
    merge_counts,
    optimize_lambda,
    perplexity,
    prune,
)
from .arpa import ArpaParseError, read_arpa, write_arpa
from .segmentation import MorphSegmenter, desegment
from .neural import StatefulLstmLm, TrainingSchedule, gradient_check
from .augment import (
    AugmentationPlan,
    AugmentationReport,
    ablate_corpus_size,
    run_augmentation,
    size_match,
)
from .metrics import (
    Hypothesis,
    NBestList,
    RescoreWeights,
    SignificanceResult,
    WerReport,
    optimize_rescore_weights,
    read_nbest,
    read_refs,
    rescore_nbest,
    wer,
    werr,
    wilcoxon_signed_rank,
    write_nbest,
)
from .config import PipelineConfig, dump_config, load_config

__all__ = [
    "MorphSegmenter",
    "desegment",
    "StatefulLstmLm",
    "TrainingSchedule",
    "gradient_check",
    "AugmentationPlan",
    "AugmentationReport",
    "ablate_corpus_size",
    "run_augmentation",
    "size_match",
    "Hypothesis",
    "NBestList",
    "RescoreWeights",
    "SignificanceResult",
    "WerReport",
    "optimize_rescore_weights",
    "read_nbest",
    "read_refs",
    "rescore_nbest",
    "wer",
    "werr",
    "wilcoxon_signed_rank",
    "write_nbest",
    "PipelineConfig",
    "dump_config",
    "load_config",
    "EOS",
    "SOS",
    "UNK",
    "CorpusStats",
    "Vocabulary",
    "apply_vocabulary",
    "build_vocabulary",
    "corpus_stats",
    "normalize_and_tokenize",
    "read_corpus",
    "subsample",
    "write_corpus",
    "BackoffModel",
    "InterpolationSpec",
    "NGramCounts",
    "PerplexityReport",
    "context_normalization_error",
    "count_ngrams",
    "estimate_mkn",
    "interpolate",
    "merge_counts",
    "optimize_lambda",
    "perplexity",
    "prune",
    "ArpaParseError",
    "read_arpa",
    "write_arpa",
]
