"""Desk-scale experiments."""

from .ablation import (
    CONVENTIONAL,
    DEFAULT_SETTINGS,
    P2P,
    SYMMETRIC,
    AblationRow,
    Setting,
    comparison_table,
    run_ablation,
    summarize,
    write_csv,
)

__all__ = [
    "CONVENTIONAL",
    "DEFAULT_SETTINGS",
    "P2P",
    "SYMMETRIC",
    "AblationRow",
    "Setting",
    "comparison_table",
    "run_ablation",
    "summarize",
    "write_csv",
]
