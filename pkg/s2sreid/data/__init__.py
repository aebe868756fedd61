"""Datasets, file formats, splits and synthetic data."""

from .dataset import Dataset, Record, View
from .formats import load_dataset, save_dataset
from .split import Split, split_protocol
from .synthetic import SyntheticSpec, generate_synthetic

__all__ = [
    "Dataset",
    "Record",
    "Split",
    "SyntheticSpec",
    "View",
    "generate_synthetic",
    "load_dataset",
    "save_dataset",
    "split_protocol",
]
