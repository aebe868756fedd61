"""
The individual S2S loss terms and their analytic embedding gradients.

Every term returns the loss already divided by its normalizer (the number
of contributing units) together with the gradient of that normalized loss
with respect to the ``(N, 2, M, D)`` embeddings. Hinge-inactive units
contribute exactly zero to both.
"""

from dataclasses import dataclass, field
from typing import Iterator, Optional, Sequence

import numpy as np

from ..data.dataset import View
from ..errors import UsageError
from .batch import MarginalPair, SampleRef, SetBatch, TripletUnit, ref_index


@dataclass(frozen=True, eq=False)
class TermResult:
    """Normalized loss, its embedding gradient, and hinge bookkeeping."""

    loss: float
    grad: np.ndarray
    active: int
    normalizer: int

    def __iter__(self) -> Iterator:
        return iter((self.loss, self.grad))


@dataclass(frozen=True, eq=False)
class TripletTerm(TermResult):
    """Triplet result plus the per-unit squared distances and hinge mask."""

    d_ap: np.ndarray = field(default_factory=lambda: np.zeros(0))
    d_an: np.ndarray = field(default_factory=lambda: np.zeros(0))
    d_pn: np.ndarray = field(default_factory=lambda: np.zeros(0))
    mask: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=bool))


def _sq(diff: np.ndarray) -> np.ndarray:
    return np.einsum("...d,...d->...", diff, diff)


def class_centers(batch: SetBatch, view: Optional[View] = None) -> np.ndarray:
    """
    Per-identity mean embedding.

    Args:
        batch: Set batch
        view: View to average; ``None`` pools both views

    Returns:
        Array of shape (N, D)
    """
    if view is None:
        x = batch.embeddings.reshape(batch.identities, -1, batch.embeddings.shape[-1])
        return x.mean(axis=1)
    return batch.embeddings[:, int(view)].mean(axis=1)


def class_identity_loss(
    batch: SetBatch,
    m_c: float,
    views: Sequence[View] = (View.A, View.B),
    pooled: bool = False,
    frozen_centers: bool = False,
) -> TermResult:
    """
    Hinge on each sample's squared distance to its class centre.

    Centres are per view by default; ``pooled`` uses one centre over both
    views. The gradient chains through the centre (each sample moves the
    mean by 1/M) unless ``frozen_centers`` treats centres as constants.

    Raises:
        UsageError: if m_c is negative
    """
    if m_c < 0:
        raise UsageError(f"class-identity margin must be non-negative, got {m_c}")
    batch.check_embeddings()
    n, _, m, d = batch.embeddings.shape
    grad = np.zeros_like(batch.embeddings)
    total = 0.0
    active_count = 0

    if pooled:
        groups = [(list(View), class_centers(batch))]
    else:
        groups = [([v], class_centers(batch, v)) for v in views]

    normalizer = n * m * sum(len(vs) for vs, _ in groups)
    for group_views, centers in groups:
        idx = [int(v) for v in group_views]
        x = batch.embeddings[:, idx].reshape(n, len(idx) * m, d)
        diff = x - centers[:, None, :]
        d2 = _sq(diff)
        active = d2 > m_c
        total += float(np.sum(np.where(active, d2 - m_c, 0.0)))
        active_count += int(active.sum())

        direct = 2.0 * diff * active[..., None]
        if frozen_centers:
            g = direct
        else:
            coupling = direct.sum(axis=1, keepdims=True) / x.shape[1]
            g = direct - coupling
        grad[:, idx] += g.reshape(n, len(idx), m, d)

    return TermResult(total / normalizer, grad / normalizer, active_count, normalizer)


def _gather(batch: SetBatch, refs: Sequence[SampleRef]) -> tuple[np.ndarray, tuple]:
    ids, views, index = ref_index(refs)
    return batch.embeddings[ids, views, index], (ids, views, index)


def _triplet_term(
    batch: SetBatch,
    triplets: Sequence[TripletUnit],
    mu: float,
    nu: float,
    m_t: float,
    symmetric: bool,
) -> TripletTerm:
    if m_t < 0:
        raise UsageError(f"triplet margin must be non-negative, got {m_t}")
    batch.check_embeddings()
    grad = np.zeros_like(batch.embeddings)
    if not triplets:
        return TripletTerm(0.0, grad, 0, 0)
    for unit in triplets:
        unit.check(batch)

    a, ia = _gather(batch, [t.anchor for t in triplets])
    p, ip = _gather(batch, [t.positive for t in triplets])
    neg, ineg = _gather(batch, [t.negative for t in triplets])
    d_ap, d_an, d_pn = _sq(a - p), _sq(a - neg), _sq(p - neg)

    if symmetric:
        relative = mu * d_an + nu * d_pn - d_ap
    else:
        relative = d_an - d_ap
    hinge = m_t - relative
    mask = hinge > 0
    z = len(triplets)
    loss = float(np.sum(np.where(mask, hinge, 0.0))) / z

    w = mask[:, None] / z
    ga = (2.0 * (a - p) - 2.0 * mu * (a - neg)) * w
    gp = -2.0 * (a - p) * w
    gn = 2.0 * mu * (a - neg) * w
    if symmetric:
        gp = gp - 2.0 * nu * (p - neg) * w
        gn = gn + 2.0 * nu * (p - neg) * w
    np.add.at(grad, ia, ga)
    np.add.at(grad, ip, gp)
    np.add.at(grad, ineg, gn)
    return TripletTerm(loss, grad, int(mask.sum()), z, d_ap, d_an, d_pn, mask)


def symmetric_triplet_loss(
    batch: SetBatch,
    triplets: Sequence[TripletUnit],
    mu: float,
    nu: float,
    m_t: float,
) -> TripletTerm:
    """
    Symmetric triplet hinge ``max(m_t - T, 0)`` with
    ``T = mu*|a-n|^2 + nu*|p-n|^2 - |a-p|^2``, averaged over the triplets.

    The positive receives a gradient through the negative via the ``nu``
    term. An empty triplet list gives zero loss and zero gradient.
    """
    return _triplet_term(batch, triplets, mu, nu, m_t, symmetric=True)


def conventional_triplet_loss(batch: SetBatch, triplets: Sequence[TripletUnit], m_t: float) -> TripletTerm:
    """``max(m_t + |a-p|^2 - |a-n|^2, 0)``; the positive never sees the negative."""
    return _triplet_term(batch, triplets, 1.0, 0.0, m_t, symmetric=False)


def marginal_pairwise_loss(
    batch: SetBatch,
    pairs: Sequence[MarginalPair],
    c_p: float,
    m_p: float,
) -> TermResult:
    """
    Pairwise hinge ``max(c_p - g*(m_p - |a-b|^2), 0)``.

    Positive pairs are pulled inside ``m_p - c_p``; negative pairs are
    pushed beyond ``m_p + c_p``.

    Raises:
        UsageError: unless m_p > c_p > 0, or if a pair's sign contradicts
            its identities
    """
    if not m_p > c_p > 0:
        raise UsageError(f"pairwise margins need m_p > c_p > 0, got m_p={m_p}, c_p={c_p}")
    batch.check_embeddings()
    grad = np.zeros_like(batch.embeddings)
    if not pairs:
        return TermResult(0.0, grad, 0, 0)
    for pair in pairs:
        pair.check(batch)

    a, ia = _gather(batch, [pr.a for pr in pairs])
    b, ib = _gather(batch, [pr.b for pr in pairs])
    g = np.array([pr.g for pr in pairs], dtype=np.float64)
    diff = a - b
    hinge = c_p - g * (m_p - _sq(diff))
    mask = hinge > 0
    z = len(pairs)
    loss = float(np.sum(np.where(mask, hinge, 0.0))) / z

    ga = 2.0 * (g * mask / z)[:, None] * diff
    np.add.at(grad, ia, ga)
    np.add.at(grad, ib, -ga)
    return TermResult(loss, grad, int(mask.sum()), z)


def regularization(params: np.ndarray) -> tuple[float, np.ndarray]:
    """Squared norm of every weight and bias: ``R = p.p``, gradient ``2p``."""
    params = np.asarray(params, dtype=np.float64)
    return float(np.dot(params, params)), 2.0 * params
