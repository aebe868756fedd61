"""S2S loss terms, direction weights and the composite objective."""

from .batch import MarginalPair, SampleRef, SetBatch, TripletUnit
from .direction import DirectionMode, DirectionWeights, active_triplets, update_direction_weights
from .objective import LossReport, MarginConfig, TripletForm, total_loss
from .terms import (
    TermResult,
    class_centers,
    class_identity_loss,
    conventional_triplet_loss,
    marginal_pairwise_loss,
    regularization,
    symmetric_triplet_loss,
)

__all__ = [
    "DirectionMode",
    "DirectionWeights",
    "LossReport",
    "MarginConfig",
    "MarginalPair",
    "SampleRef",
    "SetBatch",
    "TermResult",
    "TripletForm",
    "TripletUnit",
    "active_triplets",
    "class_centers",
    "class_identity_loss",
    "conventional_triplet_loss",
    "marginal_pairwise_loss",
    "regularization",
    "symmetric_triplet_loss",
    "total_loss",
    "update_direction_weights",
]
