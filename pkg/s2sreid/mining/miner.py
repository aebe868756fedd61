"""Set-structured mini-batches, random triplets, and marginal pairs."""

import logging
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from ..data.dataset import Dataset, View
from ..errors import DataError, UsageError
from ..loss.batch import MarginalPair, SampleRef, SetBatch, TripletUnit

logger = logging.getLogger("s2sreid.mining")


@dataclass(frozen=True)
class MiningConfig:
    """Batch shape and how many units to draw per anchor / set boundary."""

    ids_per_batch: int = 8
    samples_per_view: int = 4
    triplets_per_anchor: int = 2
    k_marginal: int = 2
    seed: int = 0
    symmetric: bool = False  # also mine with view-B anchors

    def __post_init__(self) -> None:
        if self.ids_per_batch < 2:
            raise UsageError(f"ids_per_batch must be at least 2, got {self.ids_per_batch}")
        for name in ("samples_per_view", "triplets_per_anchor", "k_marginal"):
            if getattr(self, name) < 1:
                raise UsageError(f"{name} must be at least 1, got {getattr(self, name)}")
        if self.k_marginal > self.samples_per_view:
            raise UsageError(
                f"k_marginal ({self.k_marginal}) cannot exceed samples_per_view "
                f"({self.samples_per_view})"
            )

    @property
    def anchor_views(self) -> tuple[View, ...]:
        return (View.A, View.B) if self.symmetric else (View.A,)


class PairRule(Enum):
    FARTHEST_POSITIVE = "farthest_positive"
    NEAREST_NEGATIVE = "nearest_negative"


@dataclass(frozen=True)
class Provenance:
    """Which rule selected a pair, and the dataset identities it joins."""

    rule: PairRule
    anchor_identity: int
    candidate_identity: int


@dataclass(frozen=True)
class MiningOutput:
    triplets: list[TripletUnit]
    pairs: list[MarginalPair]
    provenance: list[Provenance] = field(default_factory=list)


def build_minibatch(dataset: Dataset, config: MiningConfig, rng: np.random.Generator) -> SetBatch:
    """
    Draw ``ids_per_batch`` identities and ``M`` samples per view of each.

    Identities are drawn uniformly without replacement and stored in
    ascending order; each set's samples are drawn without replacement and
    kept in dataset order. The result holds raw samples, shape
    ``(N, 2, M, *sample_shape)``.

    Raises:
        DataError: too few identities, or an identity with fewer than M
            samples in a view (named in the message)
    """
    identities = dataset.identities()
    m = config.samples_per_view
    if len(identities) < config.ids_per_batch:
        raise DataError(
            f"dataset has {len(identities)} identities, a batch needs {config.ids_per_batch}"
        )
    for identity in identities:
        for view in View:
            if dataset.count(identity, view) < m:
                raise DataError(
                    f"identity {identity} has {dataset.count(identity, view)} samples in view "
                    f"{view.name}, a batch needs {m}"
                )

    chosen = np.sort(rng.choice(np.asarray(identities), size=config.ids_per_batch, replace=False))
    sets = []
    for identity in chosen:
        views = []
        for view in View:
            pool = dataset.samples(int(identity), view)
            picks = np.sort(rng.choice(len(pool), size=m, replace=False))
            views.append(pool[picks])
        sets.append(np.stack(views))
    return SetBatch(np.stack(sets), tuple(int(i) for i in chosen))


def sample_triplets(batch: SetBatch, config: MiningConfig, rng: np.random.Generator) -> list[TripletUnit]:
    """
    Random triplets: for every anchor ``(i, A, l)``, ``triplets_per_anchor``
    units with a uniform positive from ``i``'s view-B set and a uniform
    negative from a uniformly chosen other identity's view-B set.

    Raises:
        UsageError: if the batch has fewer than 2 identities
    """
    n, m, t = batch.identities, batch.per_view, config.triplets_per_anchor
    if n < 2:
        raise UsageError(f"triplets need at least 2 identities, batch has {n}")

    triplets = []
    for anchor_view in config.anchor_views:
        other = anchor_view.other
        count = n * m * t
        anchors = np.repeat(np.arange(n * m), t)
        positives = rng.integers(0, m, size=count)
        negatives = rng.integers(0, n - 1, size=count)
        negative_samples = rng.integers(0, m, size=count)
        for k in range(count):
            i, l = divmod(int(anchors[k]), m)
            j = int(negatives[k])
            if j >= i:
                j += 1
            triplets.append(TripletUnit(
                anchor=SampleRef(i, anchor_view, l),
                positive=SampleRef(i, other, int(positives[k])),
                negative=SampleRef(j, other, int(negative_samples[k])),
            ))
    return triplets


def _squared_distances(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    diff = x[:, None, :] - y[None, :, :]
    return np.einsum("abd,abd->ab", diff, diff)


def select_marginal_pairs(
    batch: SetBatch,
    embeddings: np.ndarray,
    config: MiningConfig,
) -> tuple[list[MarginalPair], list[Provenance]]:
    """
    Pick the set-boundary pairs of every identity.

    For each identity ``i`` and anchor view: the ``k`` cross-view positive
    pairs with the largest squared distance (g=+1), and the ``k`` pairs of
    ``i``'s anchors with other identities' samples that have the smallest
    squared distance (g=-1). Ties go to the lowest candidate (identity,
    sample), then the lowest anchor index.

    Args:
        batch: Batch the pairs refer to
        embeddings: Current embeddings of the batch, shape (N, 2, M, D)
        config: Mining configuration (``k_marginal``, ``symmetric``)

    Returns:
        Tuple of (pairs, provenance), aligned
    """
    emb = np.asarray(embeddings, dtype=np.float64)
    n, _, m, _ = emb.shape
    k = config.k_marginal
    ids = batch.identity_ids
    pairs: list[MarginalPair] = []
    provenance: list[Provenance] = []

    for anchor_view in config.anchor_views:
        other = anchor_view.other
        for i in range(n):
            anchors = emb[i, int(anchor_view)]

            d2 = _squared_distances(anchors, emb[i, int(other)])  # (l, s)
            l_idx, s_idx = np.meshgrid(np.arange(m), np.arange(m), indexing="ij")
            order = np.lexsort((l_idx.ravel(), s_idx.ravel(), -d2.ravel()))[:k]
            for flat in order:
                l, s = divmod(int(flat), m)
                pairs.append(MarginalPair(SampleRef(i, anchor_view, l), SampleRef(i, other, s), 1))
                provenance.append(Provenance(PairRule.FARTHEST_POSITIVE, ids[i], ids[i]))

            others = np.array([j for j in range(n) if j != i])
            candidates = emb[others, int(other)].reshape(-1, emb.shape[-1])  # (j, s) row-major
            d2 = _squared_distances(anchors, candidates)  # (l, j*m + s)
            l_idx, c_idx = np.meshgrid(np.arange(m), np.arange(len(candidates)), indexing="ij")
            j_idx, s_idx = np.divmod(c_idx, m)
            order = np.lexsort((l_idx.ravel(), s_idx.ravel(), j_idx.ravel(), d2.ravel()))[:k]
            for flat in order:
                l, c = divmod(int(flat), len(candidates))
                j, s = int(others[c // m]), c % m
                pairs.append(MarginalPair(SampleRef(i, anchor_view, l), SampleRef(j, other, s), -1))
                provenance.append(Provenance(PairRule.NEAREST_NEGATIVE, ids[i], ids[j]))
    return pairs, provenance


def mine(batch: SetBatch, embeddings: np.ndarray, config: MiningConfig,
         rng: np.random.Generator) -> MiningOutput:
    """Triplets and marginal pairs for one batch; pure given the generator state."""
    triplets = sample_triplets(batch, config, rng)
    pairs, provenance = select_marginal_pairs(batch, embeddings, config)
    logger.debug("mined %d triplets, %d pairs", len(triplets), len(pairs))
    return MiningOutput(triplets, pairs, provenance)
