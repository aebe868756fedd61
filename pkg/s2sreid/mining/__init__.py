"""Mini-batch construction and triplet / marginal-pair selection."""

from .miner import (
    MiningConfig,
    MiningOutput,
    PairRule,
    Provenance,
    build_minibatch,
    mine,
    sample_triplets,
    select_marginal_pairs,
)

__all__ = [
    "MiningConfig",
    "MiningOutput",
    "PairRule",
    "Provenance",
    "build_minibatch",
    "mine",
    "sample_triplets",
    "select_marginal_pairs",
]
