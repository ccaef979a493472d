"""Fetch planning, snapshot materialisation and snapshot-backed lookups."""

from __future__ import annotations

import logging
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from itertools import combinations
from typing import Iterable

from . import corpus
from .config import RunConfig
from .corpus import Period, PartySpec, WorkCounts
from .openalex_client import (
    ApiQuery,
    FixtureStore,
    OpenAlexClient,
    count_query,
    top_authors_query,
)
from .store import SnapshotData

log = logging.getLogger(__name__)


@dataclass(frozen=True, order=True)
class CountKey:
    scope: str
    period: Period
    parties: tuple[str, ...]  # sorted; one name = single count, two = joint


def count_keys(scope: str, periods: Iterable[Period], parties: Iterable[str]) -> set[CountKey]:
    names = sorted(parties)
    keys = set()
    for period in periods:
        keys.update(CountKey(scope, period, (n,)) for n in names)
        keys.update(CountKey(scope, period, pair) for pair in combinations(names, 2))
    return keys


def distance_scopes(cfg: RunConfig) -> list[str]:
    """Scopes the distance command reports, expanding natural sciences in mean mode."""
    scopes = list(cfg.disciplines)
    if cfg.natsci_mode == "mean" and corpus.NATSCI_SCOPE in scopes:
        scopes += [s for s in corpus.NATURAL_SCIENCE_IDS if s not in scopes]
    return scopes


def kfr_scopes(cfg: RunConfig) -> list[str]:
    out: list[str] = []
    for s in cfg.kfr.disciplines:
        members = corpus.NATURAL_SCIENCE_IDS if s == corpus.NATSCI_SCOPE else (s,)
        out += [m for m in members if m not in out]
    return out


def plan_counts(cfg: RunConfig) -> list[CountKey]:
    keys: set[CountKey] = set()
    for scope in distance_scopes(cfg):
        keys |= count_keys(scope, cfg.periods(), cfg.parties)
    g = cfg.geometry
    bins = corpus.binned_periods(g.year_start, g.year_end, g.width)
    keys |= count_keys(g.tetra_scope, bins, g.tetra_parties)
    keys |= count_keys(g.triangle_scope, bins, g.triangle_parties)
    s = cfg.scenarios
    keys |= count_keys(s.scope, corpus.annual_periods(cfg.year_start, cfg.year_end), s.pair)
    return sorted(keys)


def query_for(key: CountKey, specs: dict[str, PartySpec], year_field: str) -> ApiQuery:
    groups = [sorted(specs[name].members) for name in key.parties]
    return count_query(corpus.concept_ids_for(key.scope), key.period, groups, year_field)


class _QueryLog:
    def __init__(self) -> None:
        self._seen: set[ApiQuery] = set()
        self._lock = threading.Lock()

    def add(self, q: ApiQuery) -> None:
        with self._lock:
            self._seen.add(q)

    def queries(self) -> list[ApiQuery]:
        return sorted(self._seen, key=lambda q: q.canonical())


class _LoggingClient(OpenAlexClient):
    """Client that remembers every query it answered, pages included."""

    def __init__(self, *args, query_log: _QueryLog, **kwargs):
        super().__init__(*args, **kwargs)
        self._log = query_log

    def get_body(self, query: ApiQuery) -> bytes:
        body = super().get_body(query)
        self._log.add(query)
        return body


def fetch_snapshot(
    cfg: RunConfig,
    mode: str,
    transport=None,
    sleep=None,
) -> SnapshotData:
    """Run every query the configured analyses need and gather the results."""
    specs = cfg.party_specs()
    store = FixtureStore(cfg.resolve_path(cfg.fixtures_dir), mode)
    qlog = _QueryLog()
    kwargs = {}
    if sleep is not None:
        kwargs["sleep"] = sleep
    client = _LoggingClient(
        store,
        mailto=cfg.mailto,
        rate=cfg.rate,
        transport=transport,
        year_field=cfg.year_field,
        query_log=qlog,
        **kwargs,
    )
    with client, ThreadPoolExecutor(max_workers=cfg.workers) as pool:
        keys = plan_counts(cfg)
        queries = [query_for(k, specs, cfg.year_field) for k in keys]
        counts = list(pool.map(client.fetch_work_count, queries))
        work_rows = [
            {
                "scope": k.scope,
                "start": k.period[0],
                "end": k.period[1],
                "parties": list(k.parties),
                "count": n,
            }
            for k, n in zip(keys, counts)
        ]

        k = cfg.kfr
        cohort_keys = [
            (scope, year)
            for scope in kfr_scopes(cfg)
            for year in range(k.year_start, k.year_end)
        ]
        cohorts = list(pool.map(
            lambda sy: client.fetch_top_authors(
                top_authors_query(corpus.concept_ids_for(sy[0]), sy[1], cfg.year_field)
            ),
            cohort_keys,
        ))
        author_rows = []
        needed: set[tuple[str, int]] = set()
        for (scope, year), groups in zip(cohort_keys, cohorts):
            for rank, g in enumerate(groups[: k.cohort_size]):
                author_rows.append(
                    {"scope": scope, "year": year, "rank": rank,
                     "author": g.group_key, "count": g.count}
                )
                needed.add((g.group_key, year))
                needed.add((g.group_key, year + 1))
        needed_sorted = sorted(needed)
        sets = list(pool.map(lambda ay: client.fetch_author_country_set(*ay), needed_sorted))
        country_rows = [
            {"author": a, "year": y, "countries": sorted(c)}
            for (a, y), c in zip(needed_sorted, sets)
        ]

    manifest = []
    for q in qlog.queries():
        stamp = store.meta(q)["retrieved_at"] if store.meta_path(q).exists() else ""
        manifest.append({"query": q.canonical(), "retrieved_at": stamp})
    created = max((m["retrieved_at"] for m in manifest), default="")
    return SnapshotData(
        created,
        manifest,
        {
            "work_counts": work_rows,
            "top_authors": author_rows,
            "author_countries": country_rows,
        },
    )


class SnapshotView:
    """Indexed, read-only access to a loaded snapshot."""

    def __init__(self, data: SnapshotData):
        self.data = data
        self._counts: dict[CountKey, int] = {}
        for row in data.tables.get("work_counts", []):
            key = CountKey(row["scope"], (row["start"], row["end"]), tuple(sorted(row["parties"])))
            self._counts[key] = row["count"]
        self._authors: dict[tuple[str, int], list[tuple[str, int]]] = {}
        for row in sorted(data.tables.get("top_authors", []),
                          key=lambda r: (r["scope"], r["year"], r["rank"])):
            self._authors.setdefault((row["scope"], row["year"]), []).append(
                (row["author"], row["count"])
            )
        self._countries = {
            (row["author"], row["year"]): frozenset(row["countries"])
            for row in data.tables.get("author_countries", [])
        }

    @property
    def created(self) -> str:
        return self.data.created

    def has_counts(self, scope: str, period: Period, parties: Iterable[str]) -> bool:
        names = sorted(parties)
        return all(
            CountKey(scope, period, (n,)) in self._counts for n in names
        ) and all(CountKey(scope, period, p) in self._counts for p in combinations(names, 2))

    def work_counts(self, scope: str, period: Period, parties: Iterable[str]) -> WorkCounts:
        names = list(parties)
        try:
            singles = {n: self._counts[CountKey(scope, period, (n,))] for n in names}
            joints = {
                tuple(sorted(p)): self._counts[CountKey(scope, period, tuple(sorted(p)))]
                for p in combinations(names, 2)
            }
        except KeyError as exc:
            raise KeyError(
                f"snapshot lacks counts for {scope} {corpus.period_label(period)}: {exc}"
            ) from None
        return WorkCounts(scope, period, singles, joints)

    def top_authors(self, scope: str, year: int) -> list[tuple[str, int]]:
        return list(self._authors.get((scope, year), []))

    def country_set(self, author: str, year: int) -> frozenset[str]:
        return self._countries.get((author, year), frozenset())
