"""Testing utilities for s2sreid - tiny datasets, batches and networks."""

from .builders import (
    TINY_SCALE,
    Points,
    linear_network,
    points_dataset,
    random_set_batch,
    small_mlp,
    tiny_dataset,
    tiny_part_network,
)

__all__ = [
    "TINY_SCALE",
    "Points",
    "linear_network",
    "points_dataset",
    "random_set_batch",
    "small_mlp",
    "tiny_dataset",
    "tiny_part_network",
]
