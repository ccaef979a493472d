"""OpenAlex access with a deterministic on-disk fixture layer.

Every request is described by an :class:`ApiQuery` whose canonical string
is hashed into a fixture filename. In ``replay`` mode the store is the only
source of data and a miss raises; ``record`` fills missing entries from the
network; ``live`` goes to the network and writes nothing.

API docs: https://docs.openalex.org
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import re
import tempfile
import threading
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Callable, Iterator, Sequence
from urllib.parse import quote, urlencode

import httpx

log = logging.getLogger(__name__)

BASE_URL = "https://api.openalex.org"
MAILTO_ENV = "OPENALEX_MAILTO"
UNKNOWN_KEY = "unknown"
MAX_GROUPS = 200

COUNTRY_KEY = "authorships.institutions.country_code"
CONCEPT_KEY = "concepts.id"
AUTHOR_KEY = "authorships.author.id"
YEAR_KEY = "publication_year"

FILTER_KEYS = frozenset({
    CONCEPT_KEY,
    YEAR_KEY,
    "from_publication_date",
    "to_publication_date",
    COUNTRY_KEY,
    "institutions.country_code",
    AUTHOR_KEY,
    "author.id",
    "type",
})
GROUP_BY_KEYS = frozenset({AUTHOR_KEY, COUNTRY_KEY})
ENDPOINTS = ("works", "authors")
MODES = ("record", "replay", "live")

_VALUE_RE = re.compile(r"^[A-Za-z0-9_./\-]+$")


class FetchError(RuntimeError):
    """Network or HTTP failure after retries were exhausted."""


class ReplayMissError(FetchError):
    """Replay mode asked for a query that was never recorded."""


class MalformedResponseError(FetchError):
    """The response body does not have the expected OpenAlex shape."""


def _canonical_value(value: str) -> str:
    members = sorted({m.strip() for m in str(value).split("|")})
    for m in members:
        if not _VALUE_RE.match(m):
            raise ValueError(f"illegal filter value {m!r}")
    return "|".join(members)


@dataclass(frozen=True)
class ApiQuery:
    """One OpenAlex request. Filters are ANDed; ``a|b`` inside a value is OR.

    The contact ``mailto`` travels with the request but is not part of the
    cache key, so fixtures recorded by one person replay for anyone.
    """

    endpoint: str = "works"
    filters: tuple[tuple[str, str], ...] = ()
    group_by: str | None = None
    mailto: str | None = field(default=None, compare=False)
    cursor: str | None = None
    per_page: int | None = None
    select: str | None = None

    def __post_init__(self) -> None:
        if self.endpoint not in ENDPOINTS:
            raise ValueError(f"unknown endpoint {self.endpoint!r}")
        canon = []
        for key, value in self.filters:
            if key not in FILTER_KEYS:
                raise ValueError(f"filter key {key!r} is not whitelisted")
            canon.append((key, _canonical_value(value)))
        object.__setattr__(self, "filters", tuple(sorted(set(canon))))
        if self.group_by is not None:
            if self.group_by not in GROUP_BY_KEYS:
                raise ValueError(f"group_by {self.group_by!r} is not whitelisted")
            if self.cursor is not None:
                raise ValueError("group_by queries cannot use cursor paging")
        if self.per_page is not None and not 1 <= self.per_page <= 200:
            raise ValueError("per_page must be within 1..200")
        if self.select is not None:
            fields = sorted({f.strip() for f in self.select.split(",") if f.strip()})
            object.__setattr__(self, "select", ",".join(fields))

    def params(self) -> list[tuple[str, str]]:
        params = []
        if self.cursor is not None:
            params.append(("cursor", self.cursor))
        if self.filters:
            params.append(("filter", ",".join(f"{k}:{v}" for k, v in self.filters)))
        if self.group_by is not None:
            params.append(("group_by", self.group_by))
        if self.per_page is not None:
            params.append(("per_page", str(self.per_page)))
        if self.select is not None:
            params.append(("select", self.select))
        return sorted(params)

    def canonical(self) -> str:
        return f"/{self.endpoint}?" + urlencode(self.params(), quote_via=quote, safe="")

    def cache_key(self) -> str:
        return hashlib.sha256(self.canonical().encode("ascii")).hexdigest()

    def with_cursor(self, cursor: str) -> "ApiQuery":
        return ApiQuery(self.endpoint, self.filters, self.group_by, self.mailto,
                        cursor, self.per_page, self.select)

    def url(self, base_url: str = BASE_URL) -> str:
        params = self.params()
        if self.mailto:
            params = sorted(params + [("mailto", self.mailto)])
        return f"{base_url}/{self.endpoint}?" + urlencode(params, quote_via=quote, safe="")


@dataclass(frozen=True, order=True)
class GroupedCount:
    group_key: str
    count: int


def short_id(openalex_id: str) -> str:
    """``https://openalex.org/A123`` -> ``A123``."""
    return openalex_id.rstrip("/").rsplit("/", 1)[-1]


class FixtureStore:
    """Verbatim response bodies keyed by the hash of the canonical query.

    Layout: ``<root>/<sha256>.json`` holds the body byte-for-byte and
    ``<root>/<sha256>.meta`` a small JSON sidecar (canonical query, retrieved_at).
    """

    def __init__(self, root: str | Path, mode: str = "replay"):
        if mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        self.root = Path(root)
        self.mode = mode
        self._locks: dict[str, threading.Lock] = {}
        self._guard = threading.Lock()

    def _lock(self, key: str) -> threading.Lock:
        with self._guard:
            return self._locks.setdefault(key, threading.Lock())

    def body_path(self, query: ApiQuery) -> Path:
        return self.root / f"{query.cache_key()}.json"

    def meta_path(self, query: ApiQuery) -> Path:
        return self.root / f"{query.cache_key()}.meta"

    def get(self, query: ApiQuery) -> bytes | None:
        path = self.body_path(query)
        try:
            return path.read_bytes()
        except FileNotFoundError:
            return None

    def meta(self, query: ApiQuery) -> dict[str, Any]:
        return json.loads(self.meta_path(query).read_text(encoding="utf-8"))

    def put(self, query: ApiQuery, body: bytes, retrieved_at: str | None = None) -> None:
        retrieved_at = retrieved_at or datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")
        meta = {"query": query.canonical(), "retrieved_at": retrieved_at}
        self.root.mkdir(parents=True, exist_ok=True)
        with self._lock(query.cache_key()):
            _atomic_write(self.body_path(query), body)
            _atomic_write(
                self.meta_path(query),
                (json.dumps(meta, indent=2, sort_keys=True) + "\n").encode("utf-8"),
            )

    def __contains__(self, query: ApiQuery) -> bool:
        return self.body_path(query).exists()


def _atomic_write(path: Path, data: bytes) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


class TokenBucket:
    """Thread-safe token bucket; ``acquire`` blocks until a token is free."""

    def __init__(
        self,
        rate: float = 5.0,
        capacity: float | None = None,
        clock: Callable[[], float] = time.monotonic,
        sleep: Callable[[float], None] = time.sleep,
    ):
        if rate <= 0:
            raise ValueError("rate must be positive")
        self.rate = float(rate)
        self.capacity = float(capacity if capacity is not None else max(1.0, rate))
        self._tokens = self.capacity
        self._clock = clock
        self._sleep = sleep
        self._last = clock()
        self._lock = threading.Lock()

    def _refill(self) -> None:
        now = self._clock()
        self._tokens = min(self.capacity, self._tokens + (now - self._last) * self.rate)
        self._last = now

    def acquire(self) -> None:
        while True:
            with self._lock:
                self._refill()
                if self._tokens >= 1.0:
                    self._tokens -= 1.0
                    return
                wait = (1.0 - self._tokens) / self.rate
            self._sleep(wait)


RETRY_STATUS = frozenset({429, 500, 502, 503, 504})


class OpenAlexClient:
    """Fetches counts, author groupings and author affiliation countries.

    Args:
        store: Fixture store; its mode decides whether the network is used.
        mailto: Contact for the polite pool (defaults to ``$OPENALEX_MAILTO``).
        rate: Requests per second allowed by the token bucket.
        transport: Optional httpx transport, mainly for tests.
        year_field: ``publication_year`` or ``publication_date`` filtering.
    """

    def __init__(
        self,
        store: FixtureStore | None = None,
        mailto: str | None = None,
        rate: float = 5.0,
        transport: httpx.BaseTransport | None = None,
        base_url: str = BASE_URL,
        max_attempts: int = 3,
        backoff: float = 1.0,
        timeout: float = 30.0,
        year_field: str = "publication_year",
        year_range: tuple[int, int] = (1900, 2100),
        sleep: Callable[[float], None] = time.sleep,
        limiter: TokenBucket | None = None,
    ):
        if year_field not in ("publication_year", "publication_date"):
            raise ValueError("year_field must be publication_year or publication_date")
        self.store = store
        self.mode = store.mode if store is not None else "live"
        self.mailto = mailto if mailto is not None else os.environ.get(MAILTO_ENV)
        self.base_url = base_url
        self.max_attempts = max_attempts
        self.backoff = backoff
        self.timeout = timeout
        self.year_field = year_field
        self.year_range = year_range
        self._transport = transport
        self._sleep = sleep
        self._limiter = limiter or TokenBucket(rate, sleep=sleep)
        self._http: httpx.Client | None = None
        self._http_lock = threading.Lock()
        self.network_calls = 0

    def __enter__(self) -> "OpenAlexClient":
        return self

    def __exit__(self, *exc: object) -> None:
        self.close()

    def close(self) -> None:
        if self._http is not None:
            self._http.close()
            self._http = None

    def _client(self) -> httpx.Client:
        with self._http_lock:
            if self._http is None:
                agent = "collabatlas/0.1"
                if self.mailto:
                    agent += f" (mailto:{self.mailto})"
                self._http = httpx.Client(
                    transport=self._transport,
                    timeout=self.timeout,
                    headers={"User-Agent": agent},
                )
            return self._http

    # -- raw access ---------------------------------------------------------

    def _download(self, query: ApiQuery) -> bytes:
        url = ApiQuery(query.endpoint, query.filters, query.group_by,
                       self.mailto or query.mailto, query.cursor, query.per_page,
                       query.select).url(self.base_url)
        last_error: Exception | None = None
        for attempt in range(self.max_attempts):
            if attempt:
                self._sleep(self.backoff * 2 ** (attempt - 1))
            self._limiter.acquire()
            self.network_calls += 1
            try:
                resp = self._client().get(url)
            except httpx.TransportError as exc:
                last_error = exc
                log.warning("transport error on %s (attempt %d): %s", url, attempt + 1, exc)
                continue
            if resp.status_code in RETRY_STATUS:
                last_error = FetchError(f"HTTP {resp.status_code} for {url}")
                log.warning("HTTP %d on %s (attempt %d)", resp.status_code, url, attempt + 1)
                continue
            if resp.status_code != 200:
                raise FetchError(f"HTTP {resp.status_code} for {url}")
            return resp.content
        raise FetchError(f"giving up on {url} after {self.max_attempts} attempts") from last_error

    def get_body(self, query: ApiQuery) -> bytes:
        if self.store is not None and self.mode != "live":
            body = self.store.get(query)
            if body is not None:
                return body
            if self.mode == "replay":
                raise ReplayMissError(f"no fixture for {query.canonical()}")
        body = self._download(query)
        if self.store is not None and self.mode == "record":
            self.store.put(query, body)
        return body

    def get_json(self, query: ApiQuery) -> dict[str, Any]:
        body = self.get_body(query)
        try:
            doc = json.loads(body)
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise MalformedResponseError(f"invalid JSON for {query.canonical()}") from exc
        if not isinstance(doc, dict):
            raise MalformedResponseError(f"expected a JSON object for {query.canonical()}")
        return doc

    def iter_results(self, query: ApiQuery) -> Iterator[dict[str, Any]]:
        """Walk every page of a listing with cursor paging."""
        if query.group_by is not None:
            raise ValueError("cannot page through a group_by query")
        page = query.with_cursor("*")
        seen: set[str] = set()
        while True:
            doc = self.get_json(page)
            results = doc.get("results")
            if not isinstance(results, list):
                raise MalformedResponseError(f"missing results for {page.canonical()}")
            yield from results
            cursor = (doc.get("meta") or {}).get("next_cursor")
            if not results or not cursor or cursor in seen:
                return
            seen.add(cursor)
            page = query.with_cursor(cursor)

    # -- operations ---------------------------------------------------------

    def fetch_work_count(self, query: ApiQuery) -> int:
        if query.endpoint != "works":
            raise ValueError("work counts come from the works endpoint")
        doc = self.get_json(query)
        count = (doc.get("meta") or {}).get("count")
        if not isinstance(count, int) or isinstance(count, bool) or count < 0:
            raise MalformedResponseError(f"bad meta.count for {query.canonical()}: {count!r}")
        return count

    def fetch_top_authors(self, query: ApiQuery, limit: int = MAX_GROUPS - 1) -> list[GroupedCount]:
        """Author groups by descending count, ties by id, unknown group removed."""
        if query.endpoint != "works" or query.group_by != AUTHOR_KEY:
            raise ValueError(f"top authors need a works query grouped by {AUTHOR_KEY}")
        keys = {k for k, _ in query.filters}
        if not keys & {YEAR_KEY, "from_publication_date"}:
            raise ValueError("top authors need a year filter")
        doc = self.get_json(query)
        return parse_groups(doc, limit=limit, source=query.canonical())

    def fetch_author_country_set(self, author_id: str, year: int) -> set[str]:
        """Countries of the author's own institutions over that year's works."""
        author = short_id(author_id)
        if not re.match(r"^A\d+$", author):
            raise ValueError(f"malformed author id {author_id!r}")
        lo, hi = self.year_range
        if not lo <= year <= hi:
            raise ValueError(f"year {year} outside {lo}..{hi}")
        query = author_works_query(author, year, self.year_field)
        countries: set[str] = set()
        for work in self.iter_results(query):
            countries |= author_countries_in_work(work, author)
        return countries


def parse_groups(doc: dict[str, Any], limit: int = MAX_GROUPS - 1, source: str = "") -> list[GroupedCount]:
    groups = doc.get("group_by")
    if not isinstance(groups, list):
        raise MalformedResponseError(f"missing group_by for {source}")
    if len(groups) > MAX_GROUPS:
        raise MalformedResponseError(f"{len(groups)} groups exceeds the {MAX_GROUPS} cap")
    out = []
    unknown = 0
    for g in groups:
        try:
            key, count = str(g["key"]), g["count"]
        except (KeyError, TypeError) as exc:
            raise MalformedResponseError(f"bad group entry {g!r} in {source}") from exc
        if not isinstance(count, int) or count < 0:
            raise MalformedResponseError(f"bad group count {count!r} in {source}")
        if key.lower() == UNKNOWN_KEY or short_id(key).lower() == UNKNOWN_KEY:
            unknown += 1
            continue
        out.append(GroupedCount(short_id(key), count))
    if unknown > 1:
        raise MalformedResponseError(f"{unknown} unknown groups in {source}")
    out.sort(key=lambda g: (-g.count, g.group_key))
    return out[:limit]


def author_countries_in_work(work: dict[str, Any], author: str) -> set[str]:
    countries: set[str] = set()
    for authorship in work.get("authorships") or []:
        aid = ((authorship or {}).get("author") or {}).get("id")
        if not aid or short_id(aid) != author:
            continue
        for inst in authorship.get("institutions") or []:
            code = (inst or {}).get("country_code")
            if code:
                countries.add(code.upper())
    return countries


# -- query builders ---------------------------------------------------------

def year_filters(period: tuple[int, int], year_field: str = "publication_year") -> list[tuple[str, str]]:
    start, end = period
    if end < start:
        raise ValueError("empty year range")
    if year_field == "publication_date":
        return [("from_publication_date", f"{start}-01-01"),
                ("to_publication_date", f"{end}-12-31")]
    return [(YEAR_KEY, str(start) if start == end else f"{start}-{end}")]


def count_query(
    concept_ids: Sequence[str],
    period: tuple[int, int],
    country_groups: Sequence[Sequence[str]],
    year_field: str = "publication_year",
) -> ApiQuery:
    """Works in the concepts/period with at least one country from every group."""
    filters = year_filters(period, year_field)
    if concept_ids:
        filters.append((CONCEPT_KEY, "|".join(concept_ids)))
    for group in country_groups:
        filters.append((COUNTRY_KEY, "|".join(sorted(c.upper() for c in group))))
    return ApiQuery("works", tuple(filters), per_page=1, select="id")


def top_authors_query(
    concept_ids: Sequence[str], year: int, year_field: str = "publication_year"
) -> ApiQuery:
    filters = year_filters((year, year), year_field)
    if concept_ids:
        filters.append((CONCEPT_KEY, "|".join(concept_ids)))
    return ApiQuery("works", tuple(filters), group_by=AUTHOR_KEY)


def author_works_query(author: str, year: int, year_field: str = "publication_year") -> ApiQuery:
    filters = year_filters((year, year), year_field) + [(AUTHOR_KEY, short_id(author))]
    return ApiQuery("works", tuple(filters), per_page=200, select="id,authorships")
