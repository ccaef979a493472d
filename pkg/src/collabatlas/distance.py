"""Jaccard collaboration distance between parties and its log rescaling."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import combinations
from typing import Any, Sequence

import numpy as np

from .corpus import DataIntegrityError, Period, WorkCounts, period_label, union_size


class UndefinedDistanceError(ValueError):
    """Both parties have empty work sets, so their distance is undefined."""


def jaccard_fraction(counts: WorkCounts, x: str, y: str) -> Fraction:
    """Exact 1 - |X∩Y| / |X∪Y| as a rational."""
    union = union_size(counts, x, y)
    if union == 0:
        raise UndefinedDistanceError(
            f"{x}/{y} have no works in {counts.discipline} {period_label(counts.period)}"
        )
    return 1 - Fraction(counts.joint(x, y), union)


def jaccard_distance(counts: WorkCounts, x: str, y: str) -> float:
    return float(jaccard_fraction(counts, x, y))


def rescale(d: float) -> float:
    """Map a distance to -ln(d); larger means closer."""
    if d <= 0:
        raise ValueError("cannot rescale a zero distance (identical work sets)")
    if d > 1:
        raise ValueError(f"distance {d} outside (0, 1]")
    return -math.log(d)


@dataclass(frozen=True)
class DistanceMatrix:
    parties: tuple[str, ...]
    discipline: str
    period: Period
    values: np.ndarray
    exact: tuple[tuple[Fraction, ...], ...] = field(repr=False, compare=False, default=())
    metadata: dict[str, Any] = field(default_factory=dict, compare=False)

    def __post_init__(self) -> None:
        values = np.array(self.values, dtype=float)
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def n(self) -> int:
        return len(self.parties)

    def __getitem__(self, pair: tuple[str, str]) -> float:
        i, j = (self.parties.index(p) for p in pair)
        return float(self.values[i, j])

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["", *self.parties])
        for name, row in zip(self.parties, self.values):
            writer.writerow([name, *(repr(float(v)) for v in row)])
        return buf.getvalue()

    def to_json(self) -> str:
        doc = {
            "parties": list(self.parties),
            "discipline": self.discipline,
            "period": list(self.period),
            "values": [float(v) for v in self.values.ravel()],
            "metadata": self.metadata,
        }
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def triangle_violations(
    values: Sequence[Sequence[Any]], tol: float | int = 0
) -> list[tuple[int, int, int]]:
    """All (i, j, k) with D[i][k] > D[i][j] + D[j][k] + tol.

    Works on floats or exact rationals.
    """
    n = len(values)
    bad = []
    for i in range(n):
        for j in range(n):
            for k in range(n):
                if values[i][k] > values[i][j] + values[j][k] + tol:
                    bad.append((i, j, k))
    return bad


def build_matrix(
    counts: WorkCounts,
    parties: Sequence[str],
    metadata: dict[str, Any] | None = None,
) -> DistanceMatrix:
    """Full pairwise Jaccard matrix; any undefined pair fails the whole matrix."""
    parties = tuple(parties)
    if len(parties) < 2:
        raise ValueError("need at least two parties")
    if len(set(parties)) != len(parties):
        raise ValueError("duplicate party names")
    n = len(parties)
    exact = [[Fraction(0)] * n for _ in range(n)]
    for i, j in combinations(range(n), 2):
        d = jaccard_fraction(counts, parties[i], parties[j])
        exact[i][j] = exact[j][i] = d
    # Exact check: Jaccard is a metric, so any violation means corrupt counts.
    bad = triangle_violations(exact)
    if bad:
        i, j, k = bad[0]
        raise DataIntegrityError(
            f"triangle inequality fails for {parties[i]}, {parties[j]}, {parties[k]}"
        )
    values = np.array([[float(v) for v in row] for row in exact])
    return DistanceMatrix(
        parties,
        counts.discipline,
        counts.period,
        values,
        tuple(tuple(row) for row in exact),
        dict(metadata or {}),
    )


def rescaled_matrix(matrix: DistanceMatrix) -> np.ndarray:
    """Off-diagonal -ln D; the diagonal is left as NaN. For reporting only."""
    out = np.full(matrix.values.shape, np.nan)
    for i, j in combinations(range(matrix.n), 2):
        out[i, j] = out[j, i] = rescale(float(matrix.values[i, j]))
    return out
