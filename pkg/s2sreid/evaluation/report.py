"""CMC / summary CSV files and console tables."""

import csv
from pathlib import Path
from typing import Union

import numpy as np
from rich.table import Table

from ..errors import ParseError, reading
from .ranking import Evaluation

TOP_K = (1, 5, 10, 15, 20)


def write_cmc_csv(evaluation: Evaluation, path: Union[str, Path]) -> Path:
    """``rank,match_rate`` with rates to four decimals."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = ["rank,match_rate"]
    lines += [f"{n},{rate:.4f}" for n, rate in enumerate(evaluation.cmc.rates, start=1)]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def summary_rows(evaluation: Evaluation) -> list[tuple[str, str, float]]:
    protocol = evaluation.protocol.value
    rows = [(protocol, f"top{k}", evaluation.cmc.top(k)) for k in TOP_K]
    rows.append((protocol, "map", evaluation.map))
    return rows


def write_summary_csv(evaluation: Evaluation, path: Union[str, Path]) -> Path:
    """``protocol,metric,value`` rows: Top-k rates and mAP."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = ["protocol,metric,value"]
    lines += [f"{p},{m},{v:.4f}" for p, m, v in summary_rows(evaluation)]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def read_cmc_csv(path: Union[str, Path]) -> np.ndarray:
    """Match rates from a CMC CSV, rank order."""
    path = Path(path)
    rates = []
    with reading(path), open(path, newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        if next(reader, None) != ["rank", "match_rate"]:
            raise ParseError("expected header rank,match_rate", str(path), 1)
        for lineno, row in enumerate(reader, start=2):
            try:
                rates.append(float(row[1]))
            except (ValueError, IndexError):
                raise ParseError(f"bad CMC row {row!r}", str(path), lineno) from None
    return np.array(rates)


def evaluation_table(evaluation: Evaluation, title: str = "Evaluation") -> Table:
    table = Table(title=title)
    table.add_column("protocol")
    for k in TOP_K:
        table.add_column(f"Top-{k}", justify="right")
    table.add_column("mAP", justify="right")
    table.add_row(
        evaluation.protocol.value,
        *[f"{100 * evaluation.cmc.top(k):.2f}" for k in TOP_K],
        f"{100 * evaluation.map:.2f}",
    )
    return table
