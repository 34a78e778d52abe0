"""
Utilities for rendering evaluation reports
"""
from typing import List, Optional, Sequence

from pydantic import BaseModel, Field


class ReportRow(BaseModel):
    """One method/variant line of an evaluation table"""
    variant: str
    ssim: Optional[float] = None
    pckh: Optional[float] = None
    gcr: Optional[float] = None
    n: int = Field(0, ge=0)
    extra: dict = Field(default_factory=dict, description="External scorer values by name")


def _cell(value: Optional[float], digits: int) -> str:
    return "-" if value is None else f"{value:.{digits}f}"


def format_report(rows: Sequence[ReportRow]) -> str:
    """
    Render rows as a fixed-width text table.

    Columns: Method, SSIM (3 decimals), PCKh (2), GCR (3), any external
    scores (3) and n.

    Args:
        rows: Report rows in display order

    Returns:
        Table with a header and a rule line
    """
    extra_names: List[str] = []
    for row in rows:
        for name in row.extra:
            if name not in extra_names:
                extra_names.append(name)

    header = ["Method", "SSIM", "PCKh", "GCR", *extra_names, "n"]
    body = [
        [
            row.variant,
            _cell(row.ssim, 3),
            _cell(row.pckh, 2),
            _cell(row.gcr, 3),
            *[_cell(row.extra.get(name), 3) for name in extra_names],
            str(row.n),
        ]
        for row in rows
    ]
    widths = [max(len(line[i]) for line in [header, *body]) for i in range(len(header))]

    def fmt(line: List[str]) -> str:
        first = line[0].ljust(widths[0])
        rest = [cell.rjust(w) for cell, w in zip(line[1:], widths[1:])]
        return "  ".join([first, *rest]).rstrip()

    rule = "-" * len(fmt(header))
    return "\n".join([fmt(header), rule, *[fmt(line) for line in body]]) + "\n"
