"""Euclidean embedding of distance matrices and simplex diagnostics."""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

from .distance import DistanceMatrix


@dataclass(frozen=True)
class Embedding:
    parties: tuple[str, ...]
    coordinates: np.ndarray  # shape (n, n - 1)
    eigenvalues: np.ndarray  # leading n - 1, before clamping
    residual: float

    def pairwise(self) -> np.ndarray:
        diff = self.coordinates[:, None, :] - self.coordinates[None, :, :]
        return np.sqrt((diff**2).sum(axis=-1))

    @property
    def clamped(self) -> bool:
        return bool((self.eigenvalues < 0).any())


def classical_scaling(values: np.ndarray, dims: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Torgerson scaling of a square distance array.

    Returns ``(coordinates, eigenvalues)`` keeping ``dims`` leading
    components (default n - 1); negative eigenvalues contribute nothing.
    """
    d = np.asarray(values, dtype=float)
    n = d.shape[0]
    if d.shape != (n, n):
        raise ValueError("distance matrix must be square")
    if not np.allclose(d, d.T, rtol=0, atol=1e-12):
        raise ArithmeticError("distance matrix is not symmetric")
    dims = n - 1 if dims is None else dims
    centering = np.eye(n) - np.full((n, n), 1.0 / n)
    b = -0.5 * centering @ (d**2) @ centering
    b = 0.5 * (b + b.T)
    evals, evecs = np.linalg.eigh(b)
    order = np.argsort(evals)[::-1][:dims]
    evals, evecs = evals[order], evecs[:, order]
    # Deterministic sign: largest-magnitude component of each axis is positive.
    for k in range(evecs.shape[1]):
        idx = np.argmax(np.abs(evecs[:, k]))
        if evecs[idx, k] < 0:
            evecs[:, k] *= -1
    coords = evecs * np.sqrt(np.clip(evals, 0.0, None))
    coords -= coords.mean(axis=0)
    return coords, evals


def embed(matrix: DistanceMatrix) -> Embedding:
    if matrix.n < 2:
        raise ValueError("need at least two points to embed")
    coords, evals = classical_scaling(matrix.values)
    emb = Embedding(matrix.parties, coords, evals, 0.0)
    residual = float(np.max(np.abs(emb.pairwise() - matrix.values)))
    return Embedding(matrix.parties, coords, evals, residual)


def procrustes_align(coords: np.ndarray, reference: np.ndarray) -> np.ndarray:
    """Rotate/reflect centred ``coords`` onto ``reference``; distances unchanged."""
    a = coords - coords.mean(axis=0)
    b = reference - reference.mean(axis=0)
    u, _, vt = np.linalg.svd(a.T @ b)
    return a @ (u @ vt)


def align_series(embeddings: Sequence[Embedding]) -> list[np.ndarray]:
    """Chain-align successive snapshots so rendered frames do not spin."""
    out: list[np.ndarray] = []
    for emb in embeddings:
        coords = emb.coordinates
        if out:
            coords = procrustes_align(coords, out[-1])
        out.append(coords)
    return out


@dataclass(frozen=True)
class TriangleStats:
    base: float
    side1: float
    side2: float
    height: float
    area: float
    degenerate: bool
    period: str = ""


def triangle_area(a: float, b: float, c: float) -> tuple[float, bool]:
    """Heron's formula in Kahan's ordering. Returns (area, degenerate)."""
    a, b, c = sorted((a, b, c), reverse=True)
    if c - (a - b) <= 0:
        return 0.0, True
    prod = (a + (b + c)) * (c - (a - b)) * (c + (a - b)) * (a + (b - c))
    return 0.25 * math.sqrt(prod), False


def triangle_stats(d_base: float, d_s1: float, d_s2: float, period: str = "") -> TriangleStats:
    """Sides, area and apex height of the triangle standing on ``d_base``."""
    if min(d_base, d_s1, d_s2) <= 0:
        raise ValueError("triangle sides must be positive")
    area, degenerate = triangle_area(d_base, d_s1, d_s2)
    height = 2.0 * area / d_base
    return TriangleStats(d_base, d_s1, d_s2, height, area, degenerate, period)


def _exact_det(rows: list[list[Fraction]]) -> Fraction:
    m = [row[:] for row in rows]
    n = len(m)
    det = Fraction(1)
    for col in range(n):
        pivot = next((r for r in range(col, n) if m[r][col] != 0), None)
        if pivot is None:
            return Fraction(0)
        if pivot != col:
            m[col], m[pivot] = m[pivot], m[col]
            det = -det
        det *= m[col][col]
        for r in range(col + 1, n):
            f = m[r][col] / m[col][col]
            if f:
                for c in range(col, n):
                    m[r][c] -= f * m[col][c]
    return det


def cayley_menger_determinant(values: np.ndarray) -> Fraction:
    """Bordered Cayley-Menger determinant, evaluated exactly on the float inputs."""
    n = len(values)
    sq = [[Fraction(float(values[i][j])) ** 2 for j in range(n)] for i in range(n)]
    rows = [[Fraction(0)] + [Fraction(1)] * n]
    rows += [[Fraction(1)] + sq[i] for i in range(n)]
    return _exact_det(rows)


def simplex_volume_from_coordinates(coords: np.ndarray) -> float:
    """Volume of a simplex from its vertices (n points in R^(n-1))."""
    edges = coords[1:] - coords[0]
    k = edges.shape[0]
    gram = edges @ edges.T
    return math.sqrt(max(float(np.linalg.det(gram)), 0.0)) / math.factorial(k)


def triple_product_volume(coords: np.ndarray) -> float:
    a, b, c = coords[1] - coords[0], coords[2] - coords[0], coords[3] - coords[0]
    return abs(float(np.dot(a, np.cross(b, c)))) / 6.0


@dataclass(frozen=True)
class TetraStats:
    volume: float
    cm_determinant: float
    realizable: bool


def tetra_stats(matrix: DistanceMatrix) -> TetraStats:
    if matrix.n != 4:
        raise ValueError(f"tetrahedron needs 4 parties, got {matrix.n}")
    det = cayley_menger_determinant(matrix.values)
    if det >= 0:
        # 288 V^2 = CM determinant for a 3-simplex.
        return TetraStats(math.sqrt(det / 288), float(det), True)
    coords = embed(matrix).coordinates
    return TetraStats(triple_product_volume(coords), float(det), False)


def tetra_volume(matrix: DistanceMatrix) -> float:
    """Volume of the 4-party simplex; non-realizable metrics use the clamped embedding."""
    return tetra_stats(matrix).volume


@dataclass(frozen=True)
class SphereScale:
    party: str
    count: int
    radius: float


def sphere_radii(
    counts: Iterable[tuple[str, int]],
    reference_count: float,
    reference_radius: float = 1.0,
) -> list[SphereScale]:
    """Radii whose cubes are proportional to work counts.

    Keep ``reference_count`` fixed across snapshots so sizes stay comparable.
    """
    if reference_count <= 0:
        raise ValueError("reference count must be positive")
    out = []
    for party, count in counts:
        if count < 0:
            raise ValueError(f"negative count for {party}")
        out.append(
            SphereScale(party, count, reference_radius * (count / reference_count) ** (1 / 3))
        )
    return out
