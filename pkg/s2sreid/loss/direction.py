"""Adaptive direction-control weights of the symmetric triplet term."""

from dataclasses import dataclass, replace
from enum import Enum
from typing import Sequence

import numpy as np

from ..errors import UsageError
from .batch import SetBatch, TripletUnit
from .terms import symmetric_triplet_loss


class DirectionMode(Enum):
    """How the phi update direction is derived."""

    POSITIVE = "positive"  # r = mean 2(|a-p|^2 - |p-n|^2), descent
    ANALYTIC = "analytic"  # r = mean 2(|a-n|^2 - |p-n|^2) = dT/dphi, ascent on T


@dataclass(frozen=True)
class DirectionWeights:
    """
    ``mu = psi + phi`` and ``nu = psi - phi``; only ``phi`` moves.

    The properties compute one of the pair and derive the other as
    ``2*psi`` minus it, so ``mu + nu == 2*psi`` holds exactly in floating
    point.
    """

    psi: float = 0.5
    phi: float = 0.1
    eta: float = 0.001
    momentum: float = 0.0
    velocity: float = 0.0
    mode: DirectionMode = DirectionMode.POSITIVE

    def __post_init__(self) -> None:
        if self.psi < 0:
            raise UsageError(f"psi must be non-negative, got {self.psi}")
        if not -self.psi <= self.phi <= self.psi:
            raise UsageError(f"phi {self.phi} outside [-psi, psi] = [{-self.psi}, {self.psi}]")
        if self.eta < 0:
            raise UsageError(f"updating rate eta must be non-negative, got {self.eta}")
        if not 0.0 <= self.momentum < 1.0:
            raise UsageError(f"direction momentum must be in [0, 1), got {self.momentum}")

    @classmethod
    def from_mu_nu(cls, mu: float, nu: float, eta: float = 0.001, **kwargs) -> "DirectionWeights":
        """Weights with ``psi = (mu+nu)/2`` and ``phi = (mu-nu)/2``."""
        if mu < 0 or nu < 0:
            raise UsageError(f"mu and nu must be non-negative, got mu={mu}, nu={nu}")
        return cls(psi=(mu + nu) / 2.0, phi=(mu - nu) / 2.0, eta=eta, **kwargs)

    @property
    def mu(self) -> float:
        if self.phi >= 0:
            return self.psi + self.phi
        return 2.0 * self.psi - (self.psi - self.phi)

    @property
    def nu(self) -> float:
        if self.phi >= 0:
            return 2.0 * self.psi - (self.psi + self.phi)
        return self.psi - self.phi


def direction_gradient(
    d_ap: np.ndarray,
    d_an: np.ndarray,
    d_pn: np.ndarray,
    mode: DirectionMode = DirectionMode.POSITIVE,
) -> float:
    """Mean update direction ``r`` over the given (active) triplets; 0 if none."""
    d_pn = np.asarray(d_pn, dtype=np.float64)
    if d_pn.size == 0:
        return 0.0
    if mode == DirectionMode.POSITIVE:
        return float(np.mean(2.0 * (np.asarray(d_ap) - d_pn)))
    return float(np.mean(2.0 * (np.asarray(d_an) - d_pn)))


def update_direction_weights(
    weights: DirectionWeights,
    d_ap: np.ndarray,
    d_an: np.ndarray,
    d_pn: np.ndarray,
) -> DirectionWeights:
    """
    One phi update from the squared distances of the active triplets.

    Positive mode steps ``phi <- phi - eta*r``; analytic mode steps
    ``phi <- phi + eta*r``. With momentum ``m`` the step feeds a velocity
    ``v <- m*v + step``. ``phi`` is clamped to ``[-psi, psi]``.
    """
    r = direction_gradient(d_ap, d_an, d_pn, weights.mode)
    step = -weights.eta * r if weights.mode == DirectionMode.POSITIVE else weights.eta * r
    velocity = weights.momentum * weights.velocity + step if weights.momentum else step
    phi = float(np.clip(weights.phi + velocity, -weights.psi, weights.psi))
    return replace(weights, phi=phi, velocity=velocity)


def active_triplets(
    batch: SetBatch,
    triplets: Sequence[TripletUnit],
    weights: DirectionWeights,
    m_t: float,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Squared distances (ap, an, pn) of the triplets whose hinge is active."""
    term = symmetric_triplet_loss(batch, triplets, weights.mu, weights.nu, m_t)
    return term.d_ap[term.mask], term.d_an[term.mask], term.d_pn[term.mask]
