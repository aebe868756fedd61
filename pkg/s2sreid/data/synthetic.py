"""Synthetic two-camera datasets for desk-scale experiments."""

import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..errors import GenerationError, UsageError
from .dataset import Dataset, Record, View

logger = logging.getLogger("s2sreid.data")

# Rejected draws allowed per requested centre before giving up.
DRAWS_PER_CENTER = 1000


@dataclass(frozen=True)
class SyntheticSpec:
    """
    Parameters of a synthetic dataset.

    Identity ``i`` has a centre ``c_i``; every sample is
    ``c_i + offset(view) + N(0, sigma^2 I)``. View offsets are
    ``-shift/2`` (A) and ``+shift/2`` (B) along one random unit direction
    shared by all identities.
    """

    identities: int = 20
    per_view: int = 4
    sample_shape: tuple[int, ...] = (1, 24, 8)
    separation: float = 10.0
    sigma: float = 0.5
    cross_view_shift: float = 1.0
    seed: int = 0
    extent: Optional[float] = field(default=None)  # half-width of the centre cube

    @property
    def dim(self) -> int:
        return int(np.prod(self.sample_shape))

    @property
    def half_width(self) -> float:
        if self.extent is not None:
            return float(self.extent)
        return self.separation * self.identities ** (1.0 / self.dim)

    def validate(self) -> None:
        if self.identities < 2:
            raise UsageError(f"need at least 2 identities, got {self.identities}")
        if self.per_view < 1:
            raise UsageError(f"need at least 1 sample per view, got {self.per_view}")
        if self.sigma < 0:
            raise UsageError(f"sigma must be non-negative, got {self.sigma}")
        if self.separation < 0:
            raise UsageError(f"separation must be non-negative, got {self.separation}")
        if not self.sample_shape or any(d <= 0 for d in self.sample_shape):
            raise UsageError(f"sample shape must have positive extents, got {self.sample_shape}")
        if self.extent is not None and self.extent < 0:
            raise UsageError(f"extent must be non-negative, got {self.extent}")


def _draw_centers(spec: SyntheticSpec, rng: np.random.Generator) -> np.ndarray:
    half = spec.half_width
    dim = spec.dim
    if spec.separation > 0:
        # A cube of side 2h holds at most (2h/sep + 1)^D points pairwise >= sep apart.
        capacity_log = dim * math.log(2.0 * half / spec.separation + 1.0)
        if capacity_log < math.log(spec.identities):
            raise GenerationError(
                f"cannot place {spec.identities} centres {spec.separation} apart "
                f"in a {dim}-dimensional cube of half-width {half:g}"
            )

    centers: list[np.ndarray] = []
    budget = DRAWS_PER_CENTER * spec.identities
    while len(centers) < spec.identities:
        if budget == 0:
            raise GenerationError(
                f"placed only {len(centers)} of {spec.identities} centres with separation "
                f"{spec.separation}; increase the extent or lower the separation"
            )
        budget -= 1
        candidate = rng.uniform(-half, half, size=dim)
        if all(np.linalg.norm(candidate - c) >= spec.separation for c in centers):
            centers.append(candidate)
    return np.stack(centers)


def generate_synthetic(spec: SyntheticSpec) -> Dataset:
    """
    Generate a dataset; the result is bitwise-identical for a fixed spec.

    Raises:
        UsageError: invalid spec
        GenerationError: the requested separation cannot be achieved
    """
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    centers = _draw_centers(spec, rng)

    direction = rng.normal(size=spec.dim)
    direction /= np.linalg.norm(direction)
    offsets = {
        View.A: -0.5 * spec.cross_view_shift * direction,
        View.B: 0.5 * spec.cross_view_shift * direction,
    }

    records = []
    for identity, center in enumerate(centers):
        for view in View:
            noise = rng.normal(0.0, 1.0, size=(spec.per_view, spec.dim)) * spec.sigma
            for row in noise:
                sample = (center + offsets[view] + row).reshape(spec.sample_shape)
                records.append(Record(identity, view, sample))

    logger.info(
        "generated %d identities x 2 views x %d samples, dim %d",
        spec.identities, spec.per_view, spec.dim,
    )
    return Dataset(records)


def nearest_center_accuracy(dataset: Dataset) -> float:
    """Fraction of records whose nearest identity mean is their own identity."""
    identities = dataset.identities()
    samples, labels, _ = dataset.stacked()
    flat = samples.reshape(len(samples), -1)
    means = np.stack([flat[labels == i].mean(axis=0) for i in identities])
    d2 = ((flat[:, None, :] - means[None, :, :]) ** 2).sum(axis=-1)
    predicted = np.asarray(identities)[d2.argmin(axis=1)]
    return float((predicted == labels).mean())
