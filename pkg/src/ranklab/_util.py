"""Small shared helpers: deterministic CSV writing."""

from __future__ import annotations

from typing import Iterable, Sequence

import numpy as np


def fmt_cell(value) -> str:
    """Format a cell so reruns are byte-identical: repr for floats, str otherwise."""
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value)).lower()
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, np.integer):
        return str(int(value))
    return str(value)


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    """UTF-8, LF line endings, repr'd floats; plain enough to parse anywhere."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(fmt_cell(c) for c in row) + "\n")


def read_csv(path) -> tuple[list[str], list[list[str]]]:
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise ValueError(f"empty CSV file {path}")
    header = lines[0].split(",")
    return header, [line.split(",") for line in lines[1:]]
