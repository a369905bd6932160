"""Matrix Market, vector, and CSV file writers.

All writers emit deterministic bytes for a given input: entries are
sorted and floats are rendered with ``repr`` (shortest round-trip form).
"""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Iterable

from .fem import GlobalSystem


def _fmt(v: float) -> str:
    return repr(float(v))


def write_matrix_market_symmetric(path: Path, system: GlobalSystem) -> None:
    """Coordinate-format export, symmetric qualifier, lower triangle only."""
    lines = ["%%MatrixMarket matrix coordinate real symmetric"]
    entries = sorted(system.entries.items())
    lines.append(f"{system.n_dof} {system.n_dof} {len(entries)}")
    for (i, j), v in entries:
        lines.append(f"{i} {j} {_fmt(v)}")
    Path(path).write_text("\n".join(lines) + "\n")


def write_matrix_market_general(
    path: Path, n_rows: int, n_cols: int, entries: dict[tuple[int, int], float]
) -> None:
    """Coordinate-format export of an arbitrary sparse matrix (1-based keys)."""
    lines = ["%%MatrixMarket matrix coordinate real general"]
    items = sorted(entries.items())
    lines.append(f"{n_rows} {n_cols} {len(items)}")
    for (i, j), v in items:
        lines.append(f"{i} {j} {_fmt(v)}")
    Path(path).write_text("\n".join(lines) + "\n")


def write_vector(path: Path, values: Iterable[float]) -> None:
    """One value per line."""
    Path(path).write_text("".join(f"{_fmt(v)}\n" for v in values))


def read_vector(path: Path) -> list[float]:
    return [float(line) for line in Path(path).read_text().split()]


def write_csv_rows(path: Path, header: list[str], rows: list[list]) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(header)
        writer.writerows(rows)
