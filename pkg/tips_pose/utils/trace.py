"""
Per-iteration loss traces
"""
import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Sequence, Tuple, Union

from loguru import logger

from ..errors import TrainingDiagnosticError


Number = Union[int, float]


@dataclass
class LossTrace:
    """Append-only table of per-iteration losses, written as comma-separated text"""
    columns: Tuple[str, ...]
    rows: List[Tuple[Number, ...]] = field(default_factory=list)

    def append(self, *values: Number) -> None:
        """
        Record one iteration.

        Raises:
            TrainingDiagnosticError: If any loss value is not finite
        """
        if len(values) != len(self.columns):
            raise ValueError(f"Trace row has {len(values)} values, expected {len(self.columns)}")
        bad = [name for name, value in zip(self.columns, values) if not math.isfinite(value)]
        if bad:
            logger.error(f"Non-finite {', '.join(bad)} at {self.columns[0]}={values[0]}")
            raise TrainingDiagnosticError(
                f"Non-finite {', '.join(bad)} at {self.columns[0]} {values[0]}: {values}"
            )
        self.rows.append(tuple(values))

    def column(self, name: str) -> List[Number]:
        i = self.columns.index(name)
        return [row[i] for row in self.rows]

    def __len__(self) -> int:
        return len(self.rows)

    def write_csv(self, path: Path) -> Path:
        """Write a header line plus one line per iteration (floats in round-trip repr)"""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(self.columns)
            for row in self.rows:
                writer.writerow([repr(v) for v in row])
        return path

    @classmethod
    def read_csv(cls, path: Path) -> "LossTrace":
        with open(path, newline="", encoding="utf-8") as f:
            reader = csv.reader(f)
            columns = tuple(next(reader))
            rows = [
                tuple(int(v) if i == 0 else float(v) for i, v in enumerate(line))
                for line in reader if line
            ]
        return cls(columns=columns, rows=rows)


def require_finite(name: str, values: Sequence[float], step: int) -> None:
    """Abort training with a diagnostic when a loss goes non-finite"""
    for v in values:
        if not math.isfinite(v):
            logger.error(f"{name} became non-finite at step {step}")
            raise TrainingDiagnosticError(f"{name} became non-finite ({v}) at step {step}")
