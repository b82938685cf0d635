"""Distances between population vectors and convergence bookkeeping."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .errors import ContractError


def total_variation(p, q) -> float:
    """Half the L1 distance between two distributions.

    Mappings are compared over the union of their keys, missing entries
    counting as zero. Arrays must be aligned.
    """
    if isinstance(p, Mapping) or isinstance(q, Mapping):
        if not (isinstance(p, Mapping) and isinstance(q, Mapping)):
            raise ContractError("compare two mappings or two arrays, not a mix")
        keys = sorted(set(p) | set(q))
        a = np.array([p.get(k, 0.0) for k in keys], dtype=float)
        b = np.array([q.get(k, 0.0) for k in keys], dtype=float)
    else:
        a = np.asarray(p, dtype=float)
        b = np.asarray(q, dtype=float)
        if a.shape != b.shape:
            raise ContractError(f"shape mismatch {a.shape} vs {b.shape}")
    return 0.5 * float(np.abs(a - b).sum())


@dataclass
class TraceEntry:
    sweep: int
    tv: float
    m: int
    elapsed: float


@dataclass
class ConvergenceTrace:
    """Per-sweep TV distance, active-set size and cumulative wall time."""

    entries: list = field(default_factory=list)

    def append(self, sweep: int, tv: float, m: int, elapsed: float) -> None:
        if self.entries and sweep <= self.entries[-1].sweep:
            raise ContractError("sweep indices must be strictly increasing")
        self.entries.append(TraceEntry(sweep, tv, m, elapsed))

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    @property
    def tv(self) -> list:
        return [e.tv for e in self.entries]

    @property
    def active_sizes(self) -> list:
        return [e.m for e in self.entries]


def rows_to_csv(header, rows, gnuplot: bool = False) -> str:
    """Render rows as CSV, or as whitespace columns with a ``#`` header."""
    buf = io.StringIO()
    if gnuplot:
        buf.write("# " + " ".join(header) + "\n")
        for row in rows:
            buf.write(" ".join(_fmt(v) for v in row) + "\n")
    else:
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(header)
        writer.writerows([[_fmt(v) for v in row] for row in rows])
    return buf.getvalue()


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)
