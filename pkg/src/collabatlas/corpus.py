"""Party definitions, the level-0 discipline taxonomy and binary counting.

A work "has nationality X" when at least one of its contributors is
affiliated with an institution located in one of X's member countries.
Works are counted once per party no matter how many contributors that
party supplies, and a multinational work counts for every party it
touches.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from itertools import combinations
from pathlib import Path
from typing import Iterable, Mapping

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib


class DataIntegrityError(ValueError):
    """Raised when counts or matrices violate a structural bound."""


@dataclass(frozen=True)
class PartySpec:
    """A named aggregation of ISO 3166-1 alpha-2 country codes."""

    name: str
    members: frozenset[str]

    def __post_init__(self) -> None:
        if not self.members:
            raise ValueError(f"party {self.name!r} has no member countries")
        object.__setattr__(
            self, "members", frozenset(code.upper() for code in self.members)
        )


EU27_CODES = (
    "AT", "BE", "BG", "HR", "CY", "CZ", "DK", "EE", "FI", "FR", "DE", "GR",
    "HU", "IE", "IT", "LV", "LT", "LU", "MT", "NL", "PL", "PT", "RO", "SK",
    "SI", "ES", "SE",
)

# Top-50 producers after the US and China, in the order they are usually listed.
ROW_TOP50_CODES = (
    "GB", "JP", "DE", "FR", "CA", "IN", "IT", "AU", "ES", "BR",
    "RU", "KR", "NL", "PL", "CH", "ID", "SE", "IR", "TW", "BE",
    "TR", "DK", "IL", "MX", "AT", "NO", "FI", "ZA", "CZ", "PT",
    "GR", "MY", "SG", "EG", "NZ", "AR", "SA", "UA", "IE", "HU",
    "PK", "TH", "CO", "CL", "RO", "NG", "SK", "HR", "RS", "PH",
)

US = PartySpec("US", frozenset({"US"}))
CN = PartySpec("CN", frozenset({"CN"}))
EU27 = PartySpec("EU27", frozenset(EU27_CODES))
GB = PartySpec("GB", frozenset({"GB"}))
JP = PartySpec("JP", frozenset({"JP"}))
EU27_UK = PartySpec("EU27&UK", frozenset(EU27_CODES) | {"GB"})
ROW = PartySpec("RoW", frozenset(ROW_TOP50_CODES))

BUILTIN_PARTIES: dict[str, PartySpec] = {
    p.name: p for p in (US, CN, EU27, GB, JP, EU27_UK, ROW)
}
FIVE_PARTIES = ("US", "CN", "EU27", "GB", "JP")
TETRA_PARTIES = ("US", "CN", "EU27&UK", "JP")
TRIANGLE_PARTIES = ("US", "CN", "RoW")


@dataclass(frozen=True)
class Discipline:
    concept_id: str
    label: str
    level: int = 0
    domain_class: str = "natural_science"  # or "hss"


_NATURAL = (
    ("C33923547", "Mathematics"),
    ("C41008148", "Computer science"),
    ("C205649164", "Geography"),
    ("C86803240", "Biology"),
    ("C121332964", "Physics"),
    ("C185592680", "Chemistry"),
    ("C127413603", "Engineering"),
    ("C192562407", "Materials science"),
    ("C39432304", "Environmental science"),
    ("C71924100", "Medicine"),
)
_HSS = (
    ("C15744967", "Psychology"),
    ("C144133560", "Business"),
    ("C162324750", "Economics"),
    ("C144024400", "Sociology"),
    ("C17744445", "Political science"),
    ("C127313418", "Geology"),
    ("C95457728", "History"),
    ("C138885662", "Philosophy"),
    ("C142362112", "Art"),
)

DISCIPLINES: dict[str, Discipline] = {
    cid: Discipline(cid, label, 0, "natural_science") for cid, label in _NATURAL
}
DISCIPLINES.update(
    {cid: Discipline(cid, label, 0, "hss") for cid, label in _HSS}
)
NATURAL_SCIENCE_IDS = tuple(cid for cid, _ in _NATURAL)

# Pseudo-disciplines: "all" carries no concept filter, "natural_sciences"
# ORs the ten natural-science concepts together at the API level.
ALL_SCOPE = "all"
NATSCI_SCOPE = "natural_sciences"
SCOPES = (ALL_SCOPE, NATSCI_SCOPE)


def scope_label(scope: str) -> str:
    if scope == ALL_SCOPE:
        return "All disciplines"
    if scope == NATSCI_SCOPE:
        return "Natural sciences"
    return DISCIPLINES[scope].label


def concept_ids_for(scope: str) -> tuple[str, ...]:
    """Concept ids a scope filters on; empty for the unfiltered scope."""
    if scope == ALL_SCOPE:
        return ()
    if scope == NATSCI_SCOPE:
        return NATURAL_SCIENCE_IDS
    if scope not in DISCIPLINES:
        raise KeyError(f"unknown discipline {scope!r}")
    return (scope,)


def resolve_discipline(token: str) -> str:
    """Map a concept id (any case, with or without the C prefix) or label to a scope key."""
    if token in SCOPES:
        return token
    key = token.strip()
    upper = key.upper()
    if not upper.startswith("C"):
        upper = "C" + upper
    if upper in DISCIPLINES:
        return upper
    for cid, disc in DISCIPLINES.items():
        if disc.label.lower() == key.lower():
            return cid
    raise KeyError(f"unknown discipline {token!r}")


Period = tuple[int, int]


def period_label(period: Period) -> str:
    start, end = period
    return str(start) if start == end else f"{start}-{end}"


def annual_periods(start: int, end: int) -> list[Period]:
    return [(y, y) for y in range(start, end + 1)]


def binned_periods(start: int, end: int, width: int = 5) -> list[Period]:
    """Consecutive ``width``-year bins from ``start``; the last bin may be short."""
    if width < 1:
        raise ValueError("bin width must be positive")
    return [(y, min(y + width - 1, end)) for y in range(start, end + 1, width)]


def nationality_of(work_countries: Iterable[str], party: PartySpec) -> bool:
    """True when the work has at least one contributor country inside ``party``."""
    return not party.members.isdisjoint(c.upper() for c in work_countries)


def _pair_key(x: str, y: str) -> tuple[str, str]:
    return (x, y) if x <= y else (y, x)


@dataclass
class WorkCounts:
    """Per-party and pairwise joint work counts for one scope and period.

    ``singles[X]`` is |S_X| and ``joints[(X, Y)]`` is |S_X ∩ S_Y| with the
    pair stored in sorted order.
    """

    discipline: str
    period: Period
    singles: dict[str, int] = field(default_factory=dict)
    joints: dict[tuple[str, str], int] = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.joints = {_pair_key(*k): v for k, v in self.joints.items()}
        self.validate()

    def validate(self) -> None:
        for name, n in self.singles.items():
            if n < 0:
                raise DataIntegrityError(f"negative count for {name}: {n}")
        for (x, y), n in self.joints.items():
            if n < 0:
                raise DataIntegrityError(f"negative joint count for {x}/{y}: {n}")
            bound = min(self.singles.get(x, n), self.singles.get(y, n))
            if n > bound:
                raise DataIntegrityError(
                    f"joint count {x}/{y}={n} exceeds min single count {bound}"
                )

    @property
    def parties(self) -> list[str]:
        return list(self.singles)

    def single(self, x: str) -> int:
        try:
            return self.singles[x]
        except KeyError:
            raise KeyError(f"party {x!r} missing from counts") from None

    def joint(self, x: str, y: str) -> int:
        try:
            return self.joints[_pair_key(x, y)]
        except KeyError:
            raise KeyError(f"joint count {x}/{y} missing from counts") from None


def union_size(counts: WorkCounts, x: str, y: str) -> int:
    """|S_X ∪ S_Y| by inclusion-exclusion."""
    if x == y:
        raise ValueError("union_size needs two distinct parties")
    sx, sy, both = counts.single(x), counts.single(y), counts.joint(x, y)
    if both > min(sx, sy) or min(sx, sy, both) < 0:
        raise DataIntegrityError(
            f"inconsistent counts for {x}/{y}: |X|={sx} |Y|={sy} |X∩Y|={both}"
        )
    return sx + sy - both


def counts_from_works(
    works: Iterable[Iterable[str]],
    parties: Iterable[PartySpec],
    discipline: str = ALL_SCOPE,
    period: Period = (0, 0),
) -> WorkCounts:
    """Binary-count an explicit corpus of works given as country-code sets."""
    parties = list(parties)
    names = [p.name for p in parties]
    singles = dict.fromkeys(names, 0)
    joints = {_pair_key(a, b): 0 for a, b in combinations(names, 2)}
    for countries in works:
        countries = {c.upper() for c in countries}
        hit = [p.name for p in parties if nationality_of(countries, p)]
        for name in hit:
            singles[name] += 1
        for a, b in combinations(hit, 2):
            joints[_pair_key(a, b)] += 1
    return WorkCounts(discipline, period, singles, joints)


def load_parties(path: str | Path) -> dict[str, PartySpec]:
    """Read party definitions from TOML or JSON, merged over the built-ins.

    Expected shape: ``{"parties": {"NAME": ["US", "CA"], ...}}``.
    """
    path = Path(path)
    raw = path.read_bytes()
    if path.suffix.lower() == ".json":
        data = json.loads(raw)
    else:
        data = tomllib.loads(raw.decode("utf-8"))
    return parties_from_mapping(data.get("parties", {}))


def parties_from_mapping(mapping: Mapping[str, Iterable[str]]) -> dict[str, PartySpec]:
    merged = dict(BUILTIN_PARTIES)
    for name, members in mapping.items():
        merged[name] = PartySpec(name, frozenset(members))
    return merged
