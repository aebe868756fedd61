"""Test fixtures for s2sreid - re-exports from s2sreid.testing."""

from s2sreid.testing import (
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
