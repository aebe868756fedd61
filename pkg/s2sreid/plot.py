"""Text-mode plots of training histories and CMC curves."""

from pathlib import Path
from typing import Sequence, Union

import numpy as np
from rich.text import Text

from .errors import UsageError
from .evaluation.report import read_cmc_csv
from .training.history import COLUMNS, read_history

BLOCKS = "▁▂▃▄▅▆▇█"


def resample(values: Sequence[float], width: int) -> np.ndarray:
    """Average consecutive buckets so at most ``width`` points remain."""
    values = np.asarray(values, dtype=np.float64)
    if width < 1:
        raise UsageError(f"width must be at least 1, got {width}")
    if len(values) <= width:
        return values
    buckets = np.array_split(values, width)
    return np.array([b.mean() for b in buckets])


def sparkline(values: Sequence[float], width: int = 60) -> str:
    """Render values as one line of block characters, min to max."""
    points = resample(values, width)
    if points.size == 0:
        return ""
    finite = points[np.isfinite(points)]
    if finite.size == 0:
        return " " * len(points)
    lo, hi = float(finite.min()), float(finite.max())
    span = hi - lo
    chars = []
    for v in points:
        if not np.isfinite(v):
            chars.append(" ")
        elif span == 0:
            chars.append(BLOCKS[len(BLOCKS) // 2])
        else:
            chars.append(BLOCKS[int(round((v - lo) / span * (len(BLOCKS) - 1)))])
    return "".join(chars)


def render_series(label: str, values: Sequence[float], width: int = 60) -> Text:
    """A labelled sparkline with its first, last, min and max values."""
    values = np.asarray(values, dtype=np.float64)
    text = Text()
    text.append(f"{label} ", style="bold")
    text.append(sparkline(values, width), style="cyan")
    if values.size:
        text.append(
            f"  first {values[0]:.4g}  last {values[-1]:.4g}  "
            f"min {np.nanmin(values):.4g}  max {np.nanmax(values):.4g}",
            style="dim",
        )
    return text


def history_series(path: Union[str, Path], column: str) -> list[float]:
    if column not in COLUMNS:
        raise UsageError(f"unknown history column {column!r}; choose from {', '.join(COLUMNS)}")
    return read_history(path).column(column)


def cmc_series(path: Union[str, Path]) -> list[float]:
    return [float(v) for v in read_cmc_csv(path)]


def write_series_csv(values: Sequence[float], path: Union[str, Path], name: str) -> Path:
    """Two-column ``index,<name>`` CSV of a plotted series."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [f"index,{name}"] + [f"{k},{float(v)!r}" for k, v in enumerate(values, start=1)]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path
