"""Knowledge flow between parties through the affiliations of productive authors.

An author affiliated with parties A in year t and B in year t+1 carries one
flow for every ordered pair in A x B. Summing over an author cohort gives
the K-matrix; dividing its off-diagonal cells by their total gives the
knowledge flow rate.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .corpus import PartySpec

MIN_SIGMA_OFF = 10
COHORT_SIZE = 199


@dataclass(frozen=True)
class AuthorYearSet:
    author_id: str
    year: int
    countries: frozenset[str]  # party names

    @classmethod
    def from_codes(
        cls, author_id: str, year: int, codes: Iterable[str], parties: Sequence[PartySpec]
    ) -> "AuthorYearSet":
        """Map raw country codes to party names; unconfigured countries are dropped."""
        codes = {c.upper() for c in codes}
        names = frozenset(p.name for p in parties if not p.members.isdisjoint(codes))
        return cls(author_id, year, names)


def author_flows(set_t: AuthorYearSet, set_t1: AuthorYearSet) -> list[tuple[str, str]]:
    """Every ordered (source, target) pair, diagonal included."""
    if set_t.author_id != set_t1.author_id:
        raise ValueError("flows need the same author on both sides")
    if set_t1.year != set_t.year + 1:
        raise ValueError("flows need consecutive years")
    return [(a, b) for a in sorted(set_t.countries) for b in sorted(set_t1.countries)]


@dataclass(frozen=True)
class FlowMatrix:
    parties: tuple[str, ...]
    year: int  # transition year -> year + 1
    k: np.ndarray
    min_sigma_off: int = MIN_SIGMA_OFF

    @property
    def sigma_off(self) -> int:
        return int(self.k.sum() - np.trace(self.k))

    @property
    def excluded(self) -> bool:
        return self.sigma_off < self.min_sigma_off

    def label(self, i: int, j: int) -> str:
        return f"{self.parties[i]}→{self.parties[j]}"


def build_k_matrix(
    cohort: Iterable[tuple[AuthorYearSet, AuthorYearSet]],
    parties: Sequence[str],
    min_sigma_off: int = MIN_SIGMA_OFF,
    year: int | None = None,
) -> FlowMatrix:
    """Aggregate author flows for one year transition into K."""
    parties = tuple(parties)
    index = {p: i for i, p in enumerate(parties)}
    k = np.zeros((len(parties), len(parties)), dtype=np.int64)
    for set_t, set_t1 in cohort:
        if year is None:
            year = set_t.year
        elif set_t.year != year:
            raise ValueError(f"cohort mixes transitions {year} and {set_t.year}")
        for a, b in author_flows(set_t, set_t1):
            if a in index and b in index:
                k[index[a], index[b]] += 1
    k.setflags(write=False)
    return FlowMatrix(parties, -1 if year is None else year, k, min_sigma_off)


def kfr(matrix: FlowMatrix) -> np.ndarray | None:
    """Off-diagonal rates K_ij / sigma_off, NaN on the diagonal; None when excluded."""
    if matrix.excluded:
        return None
    total = matrix.sigma_off
    rates = matrix.k.astype(float) / total
    np.fill_diagonal(rates, np.nan)
    return rates


def kfr_exact(matrix: FlowMatrix) -> dict[tuple[int, int], Fraction] | None:
    if matrix.excluded:
        return None
    total = matrix.sigma_off
    n = len(matrix.parties)
    return {
        (i, j): Fraction(int(matrix.k[i, j]), total)
        for i in range(n)
        for j in range(n)
        if i != j
    }


TopAuthorsFn = Callable[[str, int], Sequence[tuple[str, int]]]
CountrySetFn = Callable[[str, int], Iterable[str]]


def cohort_series(
    discipline: str,
    years: Sequence[int],
    parties: Sequence[PartySpec],
    top_authors: TopAuthorsFn,
    country_set: CountrySetFn,
    cohort_size: int = COHORT_SIZE,
    min_sigma_off: int = MIN_SIGMA_OFF,
) -> list[FlowMatrix]:
    """One FlowMatrix per transition y -> y+1 for consecutive ``years``.

    The cohort for transition y is fixed by production in year y. Both
    lookups are injected so the computation never touches the network.
    """
    years = list(years)
    if any(b != a + 1 for a, b in zip(years, years[1:])):
        raise ValueError("years must be contiguous")
    names = [p.name for p in parties]
    out = []
    for year in years[:-1]:
        authors = [a for a, _ in top_authors(discipline, year)][:cohort_size]
        cohort = [
            (
                AuthorYearSet.from_codes(a, year, country_set(a, year), parties),
                AuthorYearSet.from_codes(a, year + 1, country_set(a, year + 1), parties),
            )
            for a in authors
        ]
        out.append(build_k_matrix(cohort, names, min_sigma_off, year=year))
    return out


@dataclass
class RateSeries:
    """KFR per transition year for one scope; ``None`` marks an excluded year."""

    parties: tuple[str, ...]
    rates: dict[int, np.ndarray | None] = field(default_factory=dict)
    method: str = "per-discipline"

    def pair(self, src: str, dst: str) -> dict[int, float | None]:
        i, j = self.parties.index(src), self.parties.index(dst)
        return {y: (None if r is None else float(r[i, j])) for y, r in self.rates.items()}


def rate_series(matrices: Iterable[FlowMatrix]) -> RateSeries:
    matrices = list(matrices)
    parties = matrices[0].parties if matrices else ()
    return RateSeries(parties, {m.year: kfr(m) for m in matrices})


def mean_rates(series: Mapping[str, RateSeries]) -> RateSeries:
    """Unweighted mean across scopes of the rates available each year.

    A year is excluded only when every scope excluded it.
    """
    if not series:
        raise ValueError("no series to average")
    parties = next(iter(series.values())).parties
    years = sorted({y for s in series.values() for y in s.rates})
    out = RateSeries(parties, method="mean")
    for y in years:
        stack = [s.rates.get(y) for s in series.values()]
        stack = [r for r in stack if r is not None]
        out.rates[y] = np.mean(stack, axis=0) if stack else None
    return out


def pooled_rates(per_scope: Mapping[str, Sequence[FlowMatrix]]) -> RateSeries:
    """Sum K over scopes per transition, then normalise once."""
    by_year: dict[int, list[FlowMatrix]] = {}
    for matrices in per_scope.values():
        for m in matrices:
            by_year.setdefault(m.year, []).append(m)
    parties: tuple[str, ...] = ()
    out = RateSeries(parties, method="pooled")
    for y in sorted(by_year):
        ms = by_year[y]
        parties = ms[0].parties
        k = sum(m.k for m in ms)
        out.rates[y] = kfr(FlowMatrix(parties, y, k, ms[0].min_sigma_off))
    out.parties = parties
    return out

