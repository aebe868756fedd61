"""Ranking, CMC and mAP evaluation."""

from .ranking import (
    Aggregation,
    CmcCurve,
    Embedder,
    Evaluation,
    FeatureEmbedder,
    QueryProtocol,
    RankingResult,
    average_precision,
    cmc,
    cmc_from_ranks,
    evaluate,
    map_score,
    rank,
)
from .report import TOP_K, evaluation_table, read_cmc_csv, write_cmc_csv, write_summary_csv

__all__ = [
    "Aggregation",
    "CmcCurve",
    "Embedder",
    "Evaluation",
    "FeatureEmbedder",
    "QueryProtocol",
    "RankingResult",
    "TOP_K",
    "average_precision",
    "cmc",
    "cmc_from_ranks",
    "evaluate",
    "evaluation_table",
    "map_score",
    "rank",
    "read_cmc_csv",
    "write_cmc_csv",
    "write_summary_csv",
]
