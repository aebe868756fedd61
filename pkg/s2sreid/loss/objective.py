"""The composite S2S objective."""

from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np

from ..errors import UsageError
from .batch import MarginalPair, SetBatch, TripletUnit
from .direction import DirectionWeights, direction_gradient
from .terms import (
    class_identity_loss,
    conventional_triplet_loss,
    marginal_pairwise_loss,
    regularization,
    symmetric_triplet_loss,
)


class TripletForm(Enum):
    SYMMETRIC = "symmetric"
    CONVENTIONAL = "conventional"


@dataclass(frozen=True)
class MarginConfig:
    """Margins and term weights of ``alpha*L_C + (L_T + lam*L_P) + beta*R``."""

    m_c: float = 0.1
    m_t: float = 1.0
    c_p: float = 0.175
    m_p: float = 0.325
    alpha: float = 0.1
    beta: float = 0.01
    lam: float = 0.15

    def __post_init__(self) -> None:
        if not self.m_p > self.c_p > 0:
            raise UsageError(f"margins need m_p > c_p > 0, got m_p={self.m_p}, c_p={self.c_p}")
        for name in ("m_c", "m_t", "alpha", "beta", "lam"):
            if getattr(self, name) < 0:
                raise UsageError(f"{name} must be non-negative, got {getattr(self, name)}")


@dataclass(frozen=True, eq=False)
class LossReport:
    """Everything one evaluation of the objective produces."""

    total: float
    l_c: float
    l_t: float
    l_p: float
    reg: float
    grad_embeddings: np.ndarray
    grad_params: np.ndarray
    grad_phi: float
    active: dict[str, int] = field(default_factory=dict)
    normalizers: dict[str, int] = field(default_factory=dict)

    def terms(self) -> dict[str, float]:
        return {"l_c": self.l_c, "l_t": self.l_t, "l_p": self.l_p, "reg": self.reg}


def total_loss(
    batch: SetBatch,
    triplets: Sequence[TripletUnit],
    pairs: Sequence[MarginalPair],
    params: np.ndarray,
    margins: MarginConfig,
    weights: DirectionWeights,
    triplet_form: TripletForm = TripletForm.SYMMETRIC,
    pooled_centers: bool = False,
    frozen_centers: bool = False,
) -> LossReport:
    """
    Evaluate every term and combine values and gradients.

    ``grad_embeddings`` is ``alpha*dL_C + dL_T + lam*dL_P`` and
    ``grad_params`` is the regularizer's share, ``beta*2p``; the network's
    share comes from back-propagating ``grad_embeddings``. ``grad_phi`` is
    the direction update ``r`` over the active triplets.
    """
    class_term = class_identity_loss(batch, margins.m_c, pooled=pooled_centers,
                                     frozen_centers=frozen_centers)
    if triplet_form == TripletForm.SYMMETRIC:
        triplet_term = symmetric_triplet_loss(batch, triplets, weights.mu, weights.nu, margins.m_t)
    else:
        triplet_term = conventional_triplet_loss(batch, triplets, margins.m_t)
    pair_term = marginal_pairwise_loss(batch, pairs, margins.c_p, margins.m_p)
    reg, reg_grad = regularization(params)

    total = margins.alpha * class_term.loss + (triplet_term.loss + margins.lam * pair_term.loss) \
        + margins.beta * reg
    grad = margins.alpha * class_term.grad + triplet_term.grad + margins.lam * pair_term.grad

    mask = triplet_term.mask
    grad_phi = direction_gradient(triplet_term.d_ap[mask], triplet_term.d_an[mask],
                                  triplet_term.d_pn[mask], weights.mode)
    return LossReport(
        total=total,
        l_c=class_term.loss,
        l_t=triplet_term.loss,
        l_p=pair_term.loss,
        reg=reg,
        grad_embeddings=grad,
        grad_params=margins.beta * reg_grad,
        grad_phi=grad_phi,
        active={"class": class_term.active, "triplet": triplet_term.active, "pair": pair_term.active},
        normalizers={"class": class_term.normalizer, "triplet": triplet_term.normalizer,
                     "pair": pair_term.normalizer},
    )
