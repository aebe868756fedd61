"""Per-iteration training records and the history CSV."""

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Union

from ..errors import ParseError, reading

COLUMNS = ("iter", "total", "l_c", "l_t", "l_p", "reg", "mu", "nu", "active_t", "active_p", "step")


@dataclass(frozen=True)
class IterationRecord:
    """One completed iteration."""

    iteration: int
    total: float
    l_c: float
    l_t: float
    l_p: float
    reg: float
    mu: float
    nu: float
    active_t: int
    active_p: int
    step: float
    timestamp: float = field(default=0.0, compare=False)  # wall clock, not written to CSV

    def row(self) -> list[str]:
        values = (self.iteration, self.total, self.l_c, self.l_t, self.l_p, self.reg,
                  self.mu, self.nu, self.active_t, self.active_p, self.step)
        return [repr(float(v)) if isinstance(v, float) else str(int(v)) for v in values]


@dataclass
class TrainHistory:
    records: list[IterationRecord] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self) -> Iterator[IterationRecord]:
        return iter(self.records)

    def append(self, record: IterationRecord) -> None:
        self.records.append(record)

    def column(self, name: str) -> list[float]:
        attr = "iteration" if name == "iter" else name
        return [float(getattr(r, attr)) for r in self.records]

    def write_csv(self, path: Union[str, Path]) -> Path:
        """Write the history; floats use ``repr`` so values round-trip exactly."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(COLUMNS)
            for record in self.records:
                writer.writerow(record.row())
        return path


def read_history(path: Union[str, Path]) -> TrainHistory:
    """Read a history CSV written by :meth:`TrainHistory.write_csv`."""
    path = Path(path)
    history = TrainHistory()
    with reading(path), open(path, newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None or tuple(header) != COLUMNS:
            raise ParseError(f"expected header {','.join(COLUMNS)}", str(path), 1)
        for lineno, row in enumerate(reader, start=2):
            try:
                history.append(IterationRecord(
                    iteration=int(row[0]),
                    total=float(row[1]), l_c=float(row[2]), l_t=float(row[3]),
                    l_p=float(row[4]), reg=float(row[5]), mu=float(row[6]), nu=float(row[7]),
                    active_t=int(row[8]), active_p=int(row[9]), step=float(row[10]),
                ))
            except (ValueError, IndexError) as e:
                raise ParseError(f"bad history row: {e}", str(path), lineno) from None
    return history
