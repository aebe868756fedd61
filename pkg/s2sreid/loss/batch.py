"""Set-structured mini-batches and the units the loss terms consume."""

from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from ..data.dataset import View
from ..errors import UsageError


@dataclass(frozen=True, eq=False)
class SetBatch:
    """
    ``N`` identities x 2 views x ``M`` samples.

    ``embeddings`` has shape ``(N, 2, M, D)`` once the network has run; the
    miner also uses this type for the raw samples, shape
    ``(N, 2, M, *sample_shape)``. Identity references in triplets and pairs
    are row indices into this batch; ``identity_ids`` maps rows to dataset
    labels.
    """

    embeddings: np.ndarray
    identity_ids: tuple[int, ...]

    def __post_init__(self) -> None:
        values = np.asarray(self.embeddings, dtype=np.float64)
        object.__setattr__(self, "embeddings", values)
        object.__setattr__(self, "identity_ids", tuple(int(i) for i in self.identity_ids))
        if values.ndim < 4 or values.shape[1] != 2:
            raise UsageError(f"set batch must be shaped (N, 2, M, ...), got {values.shape}")
        if values.shape[0] != len(self.identity_ids):
            raise UsageError(
                f"{values.shape[0]} identity rows but {len(self.identity_ids)} identity ids"
            )
        if values.shape[2] < 1:
            raise UsageError("every set needs at least one sample")

    @property
    def identities(self) -> int:
        return int(self.embeddings.shape[0])

    @property
    def per_view(self) -> int:
        return int(self.embeddings.shape[2])

    @property
    def dim(self) -> int:
        return int(np.prod(self.embeddings.shape[3:]))

    def check_embeddings(self) -> None:
        """Loss terms need vectors: (N, 2, M, D), N >= 2, finite."""
        if self.embeddings.ndim != 4:
            raise UsageError(f"loss terms need (N, 2, M, D) embeddings, got {self.embeddings.shape}")
        if self.identities < 2:
            raise UsageError(f"a set batch needs at least 2 identities, got {self.identities}")
        if not np.all(np.isfinite(self.embeddings)):
            raise UsageError("set batch contains non-finite embeddings")

    def with_embeddings(self, embeddings: np.ndarray) -> "SetBatch":
        return replace(self, embeddings=embeddings)

    def same_identity(self, i: int, j: int) -> bool:
        return self.identity_ids[i] == self.identity_ids[j]


@dataclass(frozen=True)
class SampleRef:
    """Position of one sample: batch row, view, index within the set."""

    identity: int
    view: View
    index: int

    def check(self, batch: SetBatch) -> None:
        if not 0 <= self.identity < batch.identities:
            raise UsageError(f"identity row {self.identity} outside batch of {batch.identities}")
        if not 0 <= self.index < batch.per_view:
            raise UsageError(f"sample index {self.index} outside [0, {batch.per_view})")


@dataclass(frozen=True)
class TripletUnit:
    """Anchor from one view; positive and negative from the other."""

    anchor: SampleRef
    positive: SampleRef
    negative: SampleRef

    def check(self, batch: SetBatch) -> None:
        for ref in (self.anchor, self.positive, self.negative):
            ref.check(batch)
        if self.positive.view != self.negative.view or self.positive.view == self.anchor.view:
            raise UsageError("triplet positive and negative must share the view opposite the anchor")
        if not batch.same_identity(self.anchor.identity, self.positive.identity):
            raise UsageError(f"triplet positive is not the anchor's identity: {self}")
        if batch.same_identity(self.anchor.identity, self.negative.identity):
            raise UsageError(f"triplet negative shares the anchor's identity: {self}")


@dataclass(frozen=True)
class MarginalPair:
    """Cross-view pair with sign ``g``: +1 same identity, -1 different."""

    a: SampleRef
    b: SampleRef
    g: int

    def check(self, batch: SetBatch) -> None:
        self.a.check(batch)
        self.b.check(batch)
        if self.g not in (1, -1):
            raise UsageError(f"pair sign must be +1 or -1, got {self.g}")
        same = batch.same_identity(self.a.identity, self.b.identity)
        if self.g == 1 and not same:
            raise UsageError(f"positive pair joins different identities: {self}")
        if self.g == -1 and same:
            raise UsageError(f"negative pair joins one identity: {self}")


def ref_index(refs: Sequence[SampleRef]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Split references into (identity, view, index) integer arrays."""
    ids = np.fromiter((r.identity for r in refs), dtype=np.int64, count=len(refs))
    views = np.fromiter((int(r.view) for r in refs), dtype=np.int64, count=len(refs))
    index = np.fromiter((r.index for r in refs), dtype=np.int64, count=len(refs))
    return ids, views, index
