"""Run configuration read from TOML and validated before any work starts."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any

from . import corpus
from .corpus import PartySpec, tomllib


class ConfigError(ValueError):
    pass


@dataclass
class KfrConfig:
    disciplines: list[str] = field(default_factory=lambda: [corpus.NATSCI_SCOPE])
    year_start: int = 2000
    year_end: int = 2021
    cohort_size: int = 199
    min_sigma_off: int = 10
    average: str = "mean"  # or "pooled"
    parties: list[str] = field(default_factory=lambda: list(corpus.FIVE_PARTIES))


@dataclass
class GeometryConfig:
    year_start: int = 1970
    year_end: int = 2021
    width: int = 5
    tetra_parties: list[str] = field(default_factory=lambda: list(corpus.TETRA_PARTIES))
    tetra_scope: str = corpus.ALL_SCOPE
    triangle_parties: list[str] = field(default_factory=lambda: list(corpus.TRIANGLE_PARTIES))
    triangle_scope: str = corpus.NATSCI_SCOPE


@dataclass
class ScenarioConfig:
    scope: str = corpus.NATSCI_SCOPE
    pair: list[str] = field(default_factory=lambda: ["US", "CN"])
    horizon_year: int = 2030
    damping: float = 0.8
    peak_years: int = 3
    decline_rate: float | None = None
    decline_window: list[int] = field(default_factory=lambda: [2010, 2018])


@dataclass
class RunConfig:
    parties: list[str] = field(default_factory=lambda: list(corpus.FIVE_PARTIES))
    disciplines: list[str] = field(default_factory=lambda: [corpus.NATSCI_SCOPE])
    year_start: int = 1970
    year_end: int = 2021
    granularity: str = "annual"  # or "five_year"
    representation: str = "raw"  # or "rescaled"
    natsci_mode: str = "pooled"  # or "mean"
    year_field: str = "publication_year"
    offline: bool = False
    mailto: str | None = None
    rate: float = 5.0
    workers: int = 4
    fixtures_dir: str = "fixtures"
    store_dir: str = "atlas-store"
    out_dir: str = "atlas-out"
    party_defs: dict[str, list[str]] = field(default_factory=dict)
    kfr: KfrConfig = field(default_factory=KfrConfig)
    geometry: GeometryConfig = field(default_factory=GeometryConfig)
    scenarios: ScenarioConfig = field(default_factory=ScenarioConfig)
    base_dir: str = field(default=".", repr=False)

    # -- derived ------------------------------------------------------------

    def party_specs(self) -> dict[str, PartySpec]:
        return corpus.parties_from_mapping(self.party_defs)

    def resolve_path(self, value: str) -> Path:
        p = Path(value)
        return p if p.is_absolute() else Path(self.base_dir) / p

    def periods(self) -> list[corpus.Period]:
        if self.granularity == "annual":
            return corpus.annual_periods(self.year_start, self.year_end)
        return corpus.binned_periods(self.year_start, self.year_end, 5)

    def to_dict(self) -> dict[str, Any]:
        doc = asdict(self)
        for key in ("base_dir", "offline", "mailto", "out_dir", "store_dir",
                    "fixtures_dir", "workers", "rate"):
            doc.pop(key)
        return doc

    def digest(self) -> str:
        """Hash of every setting that can change an output byte."""
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]

    # -- validation ---------------------------------------------------------

    def validate(self) -> "RunConfig":
        specs = self.party_specs()

        def check_parties(names: list[str], where: str, minimum: int = 2) -> None:
            if len(names) < minimum:
                raise ConfigError(f"{where}: need at least {minimum} parties")
            if len(set(names)) != len(names):
                raise ConfigError(f"{where}: duplicate parties")
            for n in names:
                if n not in specs:
                    raise ConfigError(f"{where}: unknown party {n!r}")

        def check_years(start: int, end: int, where: str) -> None:
            if end < start:
                raise ConfigError(f"{where}: empty year range {start}..{end}")

        def check_scope(token: str, where: str) -> str:
            try:
                return corpus.resolve_discipline(token)
            except KeyError:
                raise ConfigError(f"{where}: unknown discipline {token!r}") from None

        check_parties(self.parties, "parties")
        if not self.disciplines:
            raise ConfigError("disciplines: list is empty")
        self.disciplines = [check_scope(d, "disciplines") for d in self.disciplines]
        check_years(self.year_start, self.year_end, "years")
        if self.granularity not in ("annual", "five_year"):
            raise ConfigError("granularity must be 'annual' or 'five_year'")
        if self.representation not in ("raw", "rescaled"):
            raise ConfigError("representation must be 'raw' or 'rescaled'")
        if self.natsci_mode not in ("pooled", "mean"):
            raise ConfigError("natsci_mode must be 'pooled' or 'mean'")
        if self.year_field not in ("publication_year", "publication_date"):
            raise ConfigError("year_field must be publication_year or publication_date")
        if self.rate <= 0 or self.workers < 1:
            raise ConfigError("rate and workers must be positive")

        k = self.kfr
        if not k.disciplines:
            raise ConfigError("kfr.disciplines: list is empty")
        k.disciplines = [check_scope(d, "kfr.disciplines") for d in k.disciplines]
        if corpus.ALL_SCOPE in k.disciplines:
            raise ConfigError("kfr.disciplines: cohorts are per discipline, 'all' is not allowed")
        check_years(k.year_start, k.year_end, "kfr years")
        if k.year_end == k.year_start:
            raise ConfigError("kfr years: need at least one transition")
        check_parties(k.parties, "kfr.parties")
        if not 1 <= k.cohort_size <= 199:
            raise ConfigError("kfr.cohort_size must be within 1..199")
        if k.min_sigma_off < 1:
            raise ConfigError("kfr.min_sigma_off must be positive")
        if k.average not in ("mean", "pooled"):
            raise ConfigError("kfr.average must be 'mean' or 'pooled'")

        g = self.geometry
        check_years(g.year_start, g.year_end, "geometry years")
        if g.width < 1:
            raise ConfigError("geometry.width must be positive")
        check_parties(g.tetra_parties, "geometry.tetra_parties", 4)
        if len(g.tetra_parties) != 4:
            raise ConfigError("geometry.tetra_parties must name exactly 4 parties")
        check_parties(g.triangle_parties, "geometry.triangle_parties", 3)
        if len(g.triangle_parties) != 3:
            raise ConfigError("geometry.triangle_parties must name exactly 3 parties")
        g.tetra_scope = check_scope(g.tetra_scope, "geometry.tetra_scope")
        g.triangle_scope = check_scope(g.triangle_scope, "geometry.triangle_scope")

        s = self.scenarios
        s.scope = check_scope(s.scope, "scenarios.scope")
        check_parties(s.pair, "scenarios.pair")
        if len(s.pair) != 2:
            raise ConfigError("scenarios.pair must name exactly 2 parties")
        if s.horizon_year <= self.year_end:
            raise ConfigError("scenarios.horizon_year must lie after year_end")
        if self.year_end - self.year_start < 1:
            raise ConfigError("scenarios need at least two observed years")
        if not 0 < s.damping < 1:
            raise ConfigError("scenarios.damping must lie in (0, 1)")
        if s.peak_years < 1:
            raise ConfigError("scenarios.peak_years must be at least 1")
        if s.decline_rate is not None and s.decline_rate <= 0:
            raise ConfigError("scenarios.decline_rate must be positive")
        if len(s.decline_window) != 2 or s.decline_window[1] <= s.decline_window[0]:
            raise ConfigError("scenarios.decline_window must be [start, end] with end > start")
        return self


def _section(cls: type, raw: dict[str, Any], where: str) -> Any:
    known = set(cls.__dataclass_fields__)
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"{where}: unknown keys {sorted(unknown)}")
    return cls(**raw)


def config_from_dict(raw: dict[str, Any], base_dir: str | Path = ".") -> RunConfig:
    raw = dict(raw)
    try:
        kfr = _section(KfrConfig, raw.pop("kfr", {}), "kfr")
        geometry = _section(GeometryConfig, raw.pop("geometry", {}), "geometry")
        scenarios = _section(ScenarioConfig, raw.pop("scenarios", {}), "scenarios")
        raw.pop("base_dir", None)
        cfg = _section(RunConfig, raw, "config")
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
    cfg.kfr, cfg.geometry, cfg.scenarios = kfr, geometry, scenarios
    cfg.base_dir = str(base_dir)
    try:
        cfg.party_specs()
    except ValueError as exc:
        raise ConfigError(f"party_defs: {exc}") from exc
    return cfg.validate()


def load_config(path: str | Path) -> RunConfig:
    path = Path(path)
    try:
        raw = tomllib.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"config file {path} not found") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return config_from_dict(raw, base_dir=path.resolve().parent)
