"""In-memory two-view re-identification datasets."""

from dataclasses import dataclass, field
from enum import IntEnum
from typing import Iterable, Optional

import numpy as np

from ..errors import DataError, UsageError


class View(IntEnum):
    """Camera view. All matching is cross-view: probe A, gallery B."""

    A = 0
    B = 1

    @property
    def other(self) -> "View":
        return View.B if self is View.A else View.A

    @classmethod
    def from_str(cls, text: str) -> "View":
        key = text.strip().upper()
        if key not in cls.__members__:
            raise ValueError(f"unknown view {text!r}, expected A or B")
        return cls[key]


@dataclass(frozen=True, eq=False)
class Record:
    """One sample of one identity under one camera view."""

    identity: int
    view: View
    sample: np.ndarray


@dataclass(eq=False)
class Dataset:
    """
    An ordered list of records plus cached per-(identity, view) groupings.

    Record order is preserved everywhere: ``samples(i, v)`` stacks the
    matching records in the order they appear.
    """

    records: list[Record]
    _groups: Optional[dict[tuple[int, View], np.ndarray]] = field(
        default=None, init=False, repr=False, compare=False
    )

    def __post_init__(self) -> None:
        if self.records:
            shape = self.records[0].sample.shape
            for rec in self.records:
                if rec.sample.shape != shape:
                    raise DataError(
                        f"identity {rec.identity} view {rec.view.name}: sample shape "
                        f"{rec.sample.shape} differs from {shape}"
                    )

    def __len__(self) -> int:
        return len(self.records)

    def _grouped(self) -> dict[tuple[int, View], np.ndarray]:
        if self._groups is None:
            buckets: dict[tuple[int, View], list[np.ndarray]] = {}
            for rec in self.records:
                buckets.setdefault((rec.identity, rec.view), []).append(rec.sample)
            self._groups = {
                key: np.stack(items).astype(np.float64) for key, items in buckets.items()
            }
        return self._groups

    @property
    def sample_shape(self) -> tuple[int, ...]:
        if not self.records:
            raise DataError("dataset is empty")
        return tuple(self.records[0].sample.shape)

    def identities(self) -> list[int]:
        """Sorted identity ids."""
        return sorted({rec.identity for rec in self.records})

    def count(self, identity: int, view: View) -> int:
        group = self._grouped().get((identity, view))
        return 0 if group is None else len(group)

    def samples(self, identity: int, view: View) -> np.ndarray:
        """All samples of one identity under one view, shape (count, *sample_shape)."""
        group = self._grouped().get((identity, view))
        if group is None:
            return np.zeros((0,) + self.sample_shape)
        return group

    def view_records(self, view: View) -> list[Record]:
        return [rec for rec in self.records if rec.view == view]

    def validate(self, require_both_views: bool = True) -> None:
        """
        Check the dataset invariants.

        Raises:
            DataError: if empty, or an identity is missing a view
        """
        if not self.records:
            raise DataError("dataset is empty")
        if require_both_views:
            for identity in self.identities():
                for view in View:
                    if self.count(identity, view) == 0:
                        raise DataError(f"identity {identity} has no samples in view {view.name}")

    def subset(self, identities: Iterable[int], views: Optional[Iterable[View]] = None) -> "Dataset":
        """Records of the given identities (and views), in original order."""
        keep = set(identities)
        keep_views = set(views) if views is not None else set(View)
        return Dataset([r for r in self.records if r.identity in keep and r.view in keep_views])

    def stacked(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """All records as arrays: (samples, identities, views)."""
        if not self.records:
            raise UsageError("cannot stack an empty dataset")
        samples = np.stack([r.sample for r in self.records]).astype(np.float64)
        identities = np.array([r.identity for r in self.records], dtype=np.int64)
        views = np.array([int(r.view) for r in self.records], dtype=np.int64)
        return samples, identities, views

    def summary(self) -> dict[str, object]:
        """Counts for logging and manifests."""
        return {
            "identities": len(self.identities()),
            "records": len(self.records),
            "view_a": len(self.view_records(View.A)),
            "view_b": len(self.view_records(View.B)),
            "sample_shape": self.sample_shape if self.records else (),
        }
