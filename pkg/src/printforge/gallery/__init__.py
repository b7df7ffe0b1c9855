"""Embedding galleries: sharded storage, exact search, evaluation."""

from .bench import benchmark_throughput, save_latency_csv
from .evaluation import (
    CMCCurve,
    FoldCI,
    ImposterStats,
    SingleIdentity,
    TooFewFolds,
    ci_from_fold_accuracies,
    fold_confidence_interval,
    imposter_distribution,
    mate_ranks,
    rank_n_accuracy,
    score_statistics,
)
from .search import (
    CHUNK_ROWS,
    EmptyGallery,
    Gallery,
    MissingMate,
    search_batch,
    search_topk,
)
from .shard import (
    DimMismatch,
    DuplicateId,
    ShardFormatError,
    build_shard,
    load_shard,
    write_shard,
)

__all__ = [
    "CHUNK_ROWS",
    "CMCCurve",
    "DimMismatch",
    "DuplicateId",
    "EmptyGallery",
    "FoldCI",
    "Gallery",
    "ImposterStats",
    "MissingMate",
    "ShardFormatError",
    "SingleIdentity",
    "TooFewFolds",
    "benchmark_throughput",
    "build_shard",
    "ci_from_fold_accuracies",
    "fold_confidence_interval",
    "imposter_distribution",
    "load_shard",
    "mate_ranks",
    "rank_n_accuracy",
    "save_latency_csv",
    "score_statistics",
    "search_batch",
    "search_topk",
    "write_shard",
]
