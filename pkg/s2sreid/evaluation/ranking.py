"""Cross-view ranking, CMC curves and mean average precision."""

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Protocol

import numpy as np

from ..data.dataset import Dataset, View
from ..errors import DataError, UsageError

logger = logging.getLogger("s2sreid.eval")

DEFAULT_TRIALS = 10


class Embedder(Protocol):
    """Anything that maps a batch of samples to a (B, D) embedding matrix."""

    def embed(self, samples: np.ndarray) -> np.ndarray: ...


class FeatureEmbedder:
    """Uses the raw samples, flattened, as embeddings."""

    def embed(self, samples: np.ndarray) -> np.ndarray:
        samples = np.asarray(samples, dtype=np.float64)
        return samples.reshape(len(samples), -1)


class QueryProtocol(Enum):
    SINGLE = "single"  # every probe image is a query
    MULTI = "multi"  # all probe images of an identity form one query


class Aggregation(Enum):
    MEAN = "mean"  # distance to the mean probe embedding
    MAX = "max"  # largest distance over the probe images


@dataclass(frozen=True, eq=False)
class RankingResult:
    """One query's gallery ordering; ``first_match_rank`` is 1-based."""

    query_identity: Optional[int]
    query_view: Optional[View]
    order: np.ndarray  # gallery indices, nearest first
    identities: np.ndarray
    distances: np.ndarray
    matches: np.ndarray
    first_match_rank: Optional[int]


@dataclass(frozen=True, eq=False)
class CmcCurve:
    """``rates[n-1]`` is the fraction of queries matched within the top n."""

    rates: np.ndarray
    trials: int
    queries: int

    def __len__(self) -> int:
        return len(self.rates)

    def top(self, k: int) -> float:
        """Rate at rank k, clamped to the gallery size."""
        if k < 1:
            raise UsageError(f"rank must be at least 1, got {k}")
        return float(self.rates[min(k, len(self.rates)) - 1])


def squared_distances(query: np.ndarray, gallery: np.ndarray) -> np.ndarray:
    diff = gallery - query[None, :]
    return np.einsum("gd,gd->g", diff, diff)


def rank_distances(
    distances: np.ndarray,
    gallery_identities: np.ndarray,
    query_identity: Optional[int] = None,
    query_view: Optional[View] = None,
    keep: Optional[np.ndarray] = None,
) -> RankingResult:
    """Order precomputed distances ascending; ties keep gallery-index order."""
    distances = np.asarray(distances, dtype=np.float64)
    candidates = np.arange(len(distances)) if keep is None else np.flatnonzero(keep)
    order = candidates[np.argsort(distances[candidates], kind="stable")]
    identities = np.asarray(gallery_identities)[order]
    if query_identity is None:
        matches = np.zeros(len(order), dtype=bool)
    else:
        matches = identities == query_identity
    hits = np.flatnonzero(matches)
    first = int(hits[0]) + 1 if hits.size else None
    return RankingResult(query_identity, query_view, order, identities, distances[order], matches, first)


def rank(
    query: np.ndarray,
    gallery: np.ndarray,
    gallery_identities: Optional[np.ndarray] = None,
    query_identity: Optional[int] = None,
    query_view: Optional[View] = None,
    gallery_views: Optional[np.ndarray] = None,
) -> RankingResult:
    """
    Rank gallery embeddings by squared Euclidean distance to a query.

    Gallery entries sharing both the query's identity and its view are
    left out of the ranking.

    Raises:
        UsageError: empty gallery or mismatched embedding dimensions
    """
    query = np.asarray(query, dtype=np.float64).ravel()
    gallery = np.asarray(gallery, dtype=np.float64)
    if gallery.ndim != 2 or len(gallery) == 0:
        raise UsageError("gallery must be a non-empty (G, D) matrix")
    if gallery.shape[1] != query.size:
        raise UsageError(f"query dim {query.size} != gallery dim {gallery.shape[1]}")
    if gallery_identities is None:
        gallery_identities = np.full(len(gallery), -1)
    keep = None
    if query_identity is not None and query_view is not None and gallery_views is not None:
        keep = ~((np.asarray(gallery_identities) == query_identity)
                 & (np.asarray(gallery_views) == int(query_view)))
    return rank_distances(squared_distances(query, gallery), gallery_identities,
                          query_identity, query_view, keep)


def average_precision(matches: np.ndarray) -> float:
    """Mean of precision@k over the ranks k that hold a relevant item; 0 if none."""
    hits = 0
    total = 0.0
    for k, relevant in enumerate(matches, start=1):
        if relevant:
            hits += 1
            total += hits / k
    return total / hits if hits else 0.0


def cmc_from_ranks(first_ranks: list[Optional[int]], gallery_size: int) -> np.ndarray:
    """CMC rates from first-match ranks; queries without a match never count."""
    counts = np.zeros(gallery_size, dtype=np.int64)
    for r in first_ranks:
        if r is not None:
            counts[r - 1:] += 1
    return counts / len(first_ranks)


@dataclass(frozen=True, eq=False)
class _Query:
    identity: int
    view: View
    embeddings: np.ndarray  # (k, D)


def _queries(probe: Dataset, embedded: np.ndarray, protocol: QueryProtocol) -> list[_Query]:
    if protocol == QueryProtocol.SINGLE:
        return [_Query(r.identity, r.view, embedded[k:k + 1]) for k, r in enumerate(probe.records)]
    out = []
    labels = np.array([r.identity for r in probe.records])
    for identity in probe.identities():
        rows = np.flatnonzero(labels == identity)
        out.append(_Query(identity, probe.records[rows[0]].view, embedded[rows]))
    return out


def _query_distances(query: _Query, gallery: np.ndarray, aggregation: Aggregation) -> np.ndarray:
    if aggregation == Aggregation.MEAN:
        return squared_distances(query.embeddings.mean(axis=0), gallery)
    return np.max(np.stack([squared_distances(e, gallery) for e in query.embeddings]), axis=0)


class _Embedded:
    """Probe and gallery embedded once, plus their labels."""

    def __init__(self, probe: Dataset, gallery: Dataset, model: Embedder) -> None:
        if not probe.records:
            raise DataError("probe set is empty")
        if not gallery.records:
            raise DataError("gallery set is empty")
        gallery_ids = set(gallery.identities())
        for identity in probe.identities():
            if identity not in gallery_ids:
                raise DataError(f"probe identity {identity} has no image in the gallery")
        probe_samples, _, _ = probe.stacked()
        gallery_samples, self.gallery_ids, self.gallery_views = gallery.stacked()
        self.probe = np.asarray(model.embed(probe_samples), dtype=np.float64)
        self.gallery = np.asarray(model.embed(gallery_samples), dtype=np.float64)
        if self.probe.shape[1] != self.gallery.shape[1]:
            raise UsageError("probe and gallery embeddings differ in dimension")

    def ranking(self, query: _Query, chosen: np.ndarray, aggregation: Aggregation) -> RankingResult:
        ids = self.gallery_ids[chosen]
        keep = ~((ids == query.identity) & (self.gallery_views[chosen] == int(query.view)))
        distances = _query_distances(query, self.gallery[chosen], aggregation)
        return rank_distances(distances, ids, query.identity, query.view, keep)


def _single_shot(gallery_ids: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """One random gallery index per identity, in identity order."""
    chosen = []
    for identity in np.unique(gallery_ids):
        rows = np.flatnonzero(gallery_ids == identity)
        chosen.append(rows[rng.integers(len(rows))])
    return np.array(chosen, dtype=np.int64)


def cmc(
    probe: Dataset,
    gallery: Dataset,
    model: Embedder,
    trials: int = DEFAULT_TRIALS,
    rng: Optional[np.random.Generator] = None,
    all_shot: bool = False,
    protocol: QueryProtocol = QueryProtocol.SINGLE,
    aggregation: Aggregation = Aggregation.MEAN,
) -> CmcCurve:
    """
    Cumulative matching characteristic averaged over trials.

    Each trial draws one gallery image per identity (single-shot) unless
    ``all_shot`` keeps the whole gallery.

    Raises:
        UsageError: trials < 1
        DataError: a probe identity is absent from the gallery
    """
    if trials < 1:
        raise UsageError(f"trials must be at least 1, got {trials}")
    rng = rng if rng is not None else np.random.default_rng(0)
    embedded = _Embedded(probe, gallery, model)
    queries = _queries(probe, embedded.probe, protocol)

    size = len(embedded.gallery) if all_shot else len(np.unique(embedded.gallery_ids))
    counts = np.zeros(size, dtype=np.int64)
    for _ in range(trials):
        chosen = np.arange(len(embedded.gallery)) if all_shot else _single_shot(embedded.gallery_ids, rng)
        for query in queries:
            first = embedded.ranking(query, chosen, aggregation).first_match_rank
            if first is not None:
                counts[first - 1:] += 1
    rates = counts / (len(queries) * trials)
    return CmcCurve(rates, trials, len(queries))


def map_score(
    probe: Dataset,
    gallery: Dataset,
    model: Embedder,
    protocol: QueryProtocol = QueryProtocol.SINGLE,
    aggregation: Aggregation = Aggregation.MEAN,
) -> float:
    """
    Mean average precision over the full gallery.

    Raises:
        DataError: a probe identity is absent from the gallery
    """
    embedded = _Embedded(probe, gallery, model)
    queries = _queries(probe, embedded.probe, protocol)
    chosen = np.arange(len(embedded.gallery))
    aps = [average_precision(embedded.ranking(q, chosen, aggregation).matches) for q in queries]
    return float(np.mean(aps))


@dataclass(frozen=True, eq=False)
class Evaluation:
    protocol: QueryProtocol
    cmc: CmcCurve
    map: float


def evaluate(
    probe: Dataset,
    gallery: Dataset,
    model: Embedder,
    protocol: QueryProtocol = QueryProtocol.SINGLE,
    trials: int = DEFAULT_TRIALS,
    seed: int = 0,
    all_shot: bool = False,
    aggregation: Aggregation = Aggregation.MEAN,
) -> Evaluation:
    """CMC and mAP for one protocol; the datasets and model are only read."""
    curve = cmc(probe, gallery, model, trials, np.random.default_rng(seed), all_shot,
                protocol, aggregation)
    score = map_score(probe, gallery, model, protocol, aggregation)
    logger.info(
        "%s-query: Rank-1 %.1f%%  Rank-5 %.1f%%  Rank-10 %.1f%%  mAP %.1f%%",
        protocol.value, 100 * curve.top(1), 100 * curve.top(5), 100 * curve.top(10), 100 * score,
    )
    return Evaluation(protocol, curve, score)
