"""A small in-memory stand-in for the OpenAlex works endpoint.

It evaluates the filter syntax the client emits (comma = AND, pipe = OR),
``group_by=authorships.author.id`` and cursor paging over an explicit
synthetic corpus, so every count it serves can be recomputed by brute force.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from urllib.parse import parse_qs, urlsplit

import httpx

OA = "https://openalex.org/"


@dataclass
class Work:
    id: str
    year: int
    concepts: frozenset[str]
    # (author id or None, institution country codes or None for unknown)
    authorships: list[tuple[str | None, list[str | None]]]

    @property
    def countries(self) -> set[str]:
        return {c for _, cs in self.authorships for c in cs if c}

    def to_json(self) -> dict:
        return {
            "id": OA + self.id,
            "publication_year": self.year,
            "authorships": [
                {
                    "author": {"id": OA + a if a else None},
                    "institutions": [{"country_code": c} for c in cs],
                }
                for a, cs in self.authorships
            ],
        }


@dataclass
class World:
    works: list[Work] = field(default_factory=list)

    def matching(self, filters: list[tuple[str, set[str]]]) -> list[Work]:
        return [w for w in self.works if all(_match(w, k, v) for k, v in filters)]


def _years(values: set[str]) -> set[int]:
    out = set()
    for v in values:
        if "-" in v and not v.startswith("-"):
            a, b = v.split("-", 1)
            out.update(range(int(a), int(b) + 1))
        else:
            out.add(int(v))
    return out


def _match(w: Work, key: str, values: set[str]) -> bool:
    if key == "publication_year":
        return w.year in _years(values)
    if key == "from_publication_date":
        return w.year >= int(min(values)[:4])
    if key == "to_publication_date":
        return w.year <= int(max(values)[:4])
    if key == "concepts.id":
        return not w.concepts.isdisjoint(values)
    if key in ("authorships.institutions.country_code", "institutions.country_code"):
        return not w.countries.isdisjoint({v.upper() for v in values})
    if key in ("authorships.author.id", "author.id"):
        return any(a in values for a, _ in w.authorships)
    raise ValueError(f"fake does not support filter {key}")


def parse_filter(raw: str) -> list[tuple[str, set[str]]]:
    out = []
    for clause in raw.split(","):
        key, _, value = clause.partition(":")
        out.append((key, set(value.split("|"))))
    return out


class FakeOpenAlex:
    """Callable handler for ``httpx.MockTransport``."""

    def __init__(self, world: World, fail_first: int = 0, status: int = 503):
        self.world = world
        self.calls: list[str] = []
        self.fail_first = fail_first
        self.status = status

    def transport(self) -> httpx.MockTransport:
        return httpx.MockTransport(self)

    def __call__(self, request: httpx.Request) -> httpx.Response:
        self.calls.append(str(request.url))
        if self.fail_first > 0:
            self.fail_first -= 1
            return httpx.Response(self.status, text="busy")
        url = urlsplit(str(request.url))
        params = {k: v[0] for k, v in parse_qs(url.query).items()}
        filters = parse_filter(params["filter"]) if "filter" in params else []
        works = self.world.matching(filters)
        body: dict
        if params.get("group_by") == "authorships.author.id":
            counts: dict[str, int] = {}
            for w in works:
                for a in {a or "unknown" for a, _ in w.authorships}:
                    counts[a] = counts.get(a, 0) + 1
            ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
            known = [kv for kv in ranked if kv[0] != "unknown"][:199]
            groups = [{"key": OA + a, "key_display_name": a, "count": n} for a, n in known]
            if "unknown" in counts:
                groups.append({"key": "unknown", "key_display_name": "unknown",
                               "count": counts["unknown"]})
            body = {"meta": {"count": len(works), "groups_count": len(groups)},
                    "results": [], "group_by": groups}
        else:
            per_page = int(params.get("per_page", 25))
            cursor = params.get("cursor")
            offset = 0 if cursor in (None, "*") else int(cursor[1:])
            page = works[offset: offset + per_page]
            nxt = offset + per_page
            meta = {"count": len(works), "per_page": per_page}
            if cursor is not None:
                meta["next_cursor"] = f"c{nxt}" if nxt < len(works) else None
            body = {"meta": meta, "results": [w.to_json() for w in page], "group_by": []}
        return httpx.Response(200, content=json.dumps(body, sort_keys=True).encode())


NATSCI = ("C33923547", "C41008148", "C205649164", "C86803240", "C121332964",
          "C185592680", "C127413603", "C192562407", "C39432304", "C71924100")
EXTRA_COUNTRIES = ("DE", "FR", "GB", "JP", "IT", "ES", "KR", "CA", "IN", "BR", "NG")


def synthetic_world(
    years: range = range(2008, 2013),
    works_per_year: int = 160,
    n_authors: int = 60,
    seed: int = 7,
    concepts: tuple[str, ...] = NATSCI[:3],
) -> World:
    """Deterministic corpus with explicit affiliations.

    Authors have a home country and sometimes a second one, and may drift
    between years, which gives the knowledge-flow code real transitions.
    """
    rng = random.Random(seed)
    homes = ["US", "CN", "DE", "GB", "JP", "FR"]
    authors = {}
    for i in range(n_authors):
        home = rng.choice(homes)
        authors[f"A{1000 + i}"] = home
    works = []
    wid = 0
    for year in years:
        affil = {}
        for a, home in authors.items():
            codes = [home]
            r = rng.random()
            if r < 0.3:
                codes.append(rng.choice(["US", "CN", "DE", "GB", "JP"]))
            elif r < 0.4:
                codes = [rng.choice(["US", "CN"])]
            affil[a] = sorted(set(codes))
        names = sorted(authors)
        for _ in range(works_per_year):
            wid += 1
            k = rng.randint(1, 4)
            team = rng.sample(names, k)
            ships: list[tuple[str | None, list[str | None]]] = [
                (a, list(affil[a])) for a in team
            ]
            if rng.random() < 0.3:
                ships.append((None, [rng.choice(EXTRA_COUNTRIES)]))
            if rng.random() < 0.05:
                ships.append((None, [None]))
            cs = frozenset(rng.sample(concepts, rng.randint(1, min(2, len(concepts)))))
            works.append(Work(f"W{wid}", year, cs, ships))
    return World(works)
