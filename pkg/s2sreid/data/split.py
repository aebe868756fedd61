"""Identity-disjoint train/test split with a cross-view probe/gallery."""

import logging
from dataclasses import dataclass

import numpy as np

from ..errors import UsageError
from .dataset import Dataset, View

logger = logging.getLogger("s2sreid.data")

PROBE_VIEW = View.A
GALLERY_VIEW = View.B


@dataclass(eq=False)
class Split:
    """Train set plus the probe (view A) and gallery (view B) of the test identities."""

    train: Dataset
    probe: Dataset
    gallery: Dataset

    def __iter__(self):
        return iter((self.train, self.probe, self.gallery))


def split_protocol(dataset: Dataset, train_fraction: float, seed: int) -> Split:
    """
    Partition identities into train and test, then test into probe/gallery.

    ``round(train_fraction * N)`` identities, drawn by a seeded permutation,
    go to training; every record of the rest goes to test.

    Raises:
        UsageError: if the fraction is outside [0, 1), or either partition
            would be empty
    """
    if not 0.0 <= train_fraction < 1.0:
        raise UsageError(f"train fraction must be in [0, 1), got {train_fraction}")
    identities = dataset.identities()
    if not identities:
        raise UsageError("cannot split an empty dataset")

    n_train = int(round(train_fraction * len(identities)))
    if n_train == len(identities):
        raise UsageError(f"train fraction {train_fraction} leaves no test identities")
    if train_fraction > 0 and n_train == 0:
        raise UsageError(f"train fraction {train_fraction} leaves no training identities")

    order = np.random.default_rng(seed).permutation(len(identities))
    train_ids = sorted(identities[k] for k in order[:n_train])
    test_ids = sorted(identities[k] for k in order[n_train:])

    split = Split(
        train=dataset.subset(train_ids),
        probe=dataset.subset(test_ids, [PROBE_VIEW]),
        gallery=dataset.subset(test_ids, [GALLERY_VIEW]),
    )
    logger.info("split: %d train identities, %d test identities", len(train_ids), len(test_ids))
    return split
