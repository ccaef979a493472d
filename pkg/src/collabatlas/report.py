"""Compute commands: turn a snapshot into CSV/JSON tables and SVG charts.

Data files depend only on the snapshot and the configuration. Run-time
facts (wall clock, host) go to a ``_run.<command>.meta.json`` sidecar.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import os
import tempfile
from datetime import datetime, timezone
from itertools import combinations
from pathlib import Path
from typing import Any, Iterable

import numpy as np

from . import corpus, geometry, kflow, scenarios, svg
from .config import ConfigError, RunConfig
from .distance import (
    DistanceMatrix,
    UndefinedDistanceError,
    build_matrix,
    rescale,
)
from .pipeline import SnapshotView, distance_scopes, kfr_scopes

log = logging.getLogger(__name__)


def scope_slug(scope: str) -> str:
    if scope in corpus.SCOPES:
        return scope
    label = corpus.DISCIPLINES[scope].label.lower().replace(" ", "_")
    return f"{scope}_{label}"


class OutputDir:
    """Writes files atomically under one directory and remembers what it wrote."""

    def __init__(self, root: Path):
        self.root = root
        self.written: list[Path] = []

    def write(self, rel: str, text: str) -> Path:
        path = self.root / rel
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
        try:
            with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
            os.replace(tmp, path)
        except BaseException:
            Path(tmp).unlink(missing_ok=True)
            raise
        self.written.append(path)
        return path

    def write_json(self, rel: str, doc: Any) -> Path:
        return self.write(rel, json.dumps(doc, indent=2, sort_keys=True) + "\n")

    def write_csv(self, rel: str, header: list[str], rows: Iterable[list[Any]],
                  preamble: Iterable[str] = ()) -> Path:
        buf = io.StringIO()
        for line in preamble:
            buf.write(f"# {line}\n")
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)
        return self.write(rel, buf.getvalue())

    def sidecar(self, command: str, snapshot_id: str, cfg: RunConfig, data_as_of: str) -> None:
        meta = {
            "command": command,
            "snapshot": snapshot_id,
            "config_digest": cfg.digest(),
            "data_as_of": data_as_of,
            "generated_at": datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ"),
            "files": sorted(str(p.relative_to(self.root)) for p in self.written),
        }
        path = self.root / f"_run.{command}.meta.json"
        path.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _num(x: float | None) -> str:
    return "" if x is None or (isinstance(x, float) and math.isnan(x)) else repr(float(x))


def _provenance(view: SnapshotView, snapshot_id: str, cfg: RunConfig) -> dict[str, Any]:
    return {"snapshot": snapshot_id, "data_as_of": view.created, "config_digest": cfg.digest()}


# -- distance -----------------------------------------------------------------

def _pair_label(x: str, y: str) -> str:
    return f"{x}-{y}"


def scope_matrices(view: SnapshotView, scope: str, periods: list[corpus.Period],
                   parties: list[str], meta: dict[str, Any]) -> dict[corpus.Period, DistanceMatrix | None]:
    out: dict[corpus.Period, DistanceMatrix | None] = {}
    for period in periods:
        counts = view.work_counts(scope, period, parties)
        try:
            out[period] = build_matrix(counts, parties, dict(meta, scope=scope))
        except UndefinedDistanceError as exc:
            log.warning("skipping %s %s: %s", scope, corpus.period_label(period), exc)
            out[period] = None
    return out


def mean_matrices(per_scope: dict[str, dict[corpus.Period, DistanceMatrix | None]],
                  parties: list[str], meta: dict[str, Any], label: str
                  ) -> dict[corpus.Period, DistanceMatrix | None]:
    periods = sorted({p for m in per_scope.values() for p in m})
    out: dict[corpus.Period, DistanceMatrix | None] = {}
    for period in periods:
        mats = [m.get(period) for m in per_scope.values()]
        if any(m is None for m in mats):
            out[period] = None
            continue
        values = np.mean([m.values for m in mats], axis=0)
        out[period] = DistanceMatrix(tuple(parties), label, period, values,
                                     metadata=dict(meta, scope=label, method="mean"))
    return out


def pair_series(matrices: dict[corpus.Period, DistanceMatrix | None], x: str, y: str,
                rescaled: bool = False) -> list[tuple[corpus.Period, float | None]]:
    out = []
    for period in sorted(matrices):
        m = matrices[period]
        if m is None:
            out.append((period, None))
            continue
        d = m[x, y]
        out.append((period, (rescale(d) if d > 0 else math.inf) if rescaled else d))
    return out


def _period_x(period: corpus.Period) -> float:
    return (period[0] + period[1]) / 2


def _write_distance_scope(out: OutputDir, slug: str, label: str,
                          matrices: dict[corpus.Period, DistanceMatrix | None],
                          parties: list[str], rescaled: bool) -> None:
    rows = []
    for period, m in sorted(matrices.items()):
        plabel = corpus.period_label(period)
        if m is not None:
            out.write(f"distance/{slug}/matrix_{plabel}.csv", m.to_csv())
            out.write(f"distance/{slug}/matrix_{plabel}.json", m.to_json())
        for x, y in combinations(parties, 2):
            if m is None:
                rows.append([plabel, _pair_label(x, y), "undefined", "undefined"])
                continue
            d = m[x, y]
            rows.append([plabel, _pair_label(x, y), _num(d), _num(rescale(d)) if d > 0 else "inf"])
    out.write_csv(f"distance/{slug}/series.csv",
                  ["period", "pair", "distance", "neg_log_distance"], rows)
    lines = []
    for x, y in combinations(parties, 2):
        pts = [(_period_x(p), v) for p, v in pair_series(matrices, x, y, rescaled)
               if v is not None and math.isfinite(v)]
        lines.append(svg.Series(_pair_label(x, y), pts))
    out.write(f"distance/{slug}/series.svg", svg.line_chart(
        lines, f"Collaboration distance: {label}",
        y_label="-ln D" if rescaled else "Jaccard distance D"))


def cmd_distance(view: SnapshotView, snapshot_id: str, cfg: RunConfig, out_root: Path,
                 rescaled: bool | None = None) -> list[Path]:
    rescaled = cfg.representation == "rescaled" if rescaled is None else rescaled
    out = OutputDir(out_root)
    meta = _provenance(view, snapshot_id, cfg)
    per_scope = {}
    for scope in distance_scopes(cfg):
        per_scope[scope] = scope_matrices(view, scope, cfg.periods(), cfg.parties, meta)
        _write_distance_scope(out, scope_slug(scope), corpus.scope_label(scope),
                              per_scope[scope], cfg.parties, rescaled)
    if cfg.natsci_mode == "mean" and corpus.NATSCI_SCOPE in cfg.disciplines:
        label = "natural_sciences_mean"
        mean = mean_matrices({s: per_scope[s] for s in corpus.NATURAL_SCIENCE_IDS},
                             cfg.parties, meta, label)
        _write_distance_scope(out, label, "Natural sciences (mean of 10)", mean,
                              cfg.parties, rescaled)
    out.sidecar("distance", snapshot_id, cfg, view.created)
    return out.written


# -- knowledge flow -------------------------------------------------------------

def _rate_rows(series: kflow.RateSeries, sigma: dict[int, int] | None = None) -> list[list[str]]:
    rows = []
    n = len(series.parties)
    for year in sorted(series.rates):
        r = series.rates[year]
        s = "" if sigma is None else str(sigma.get(year, ""))
        for i in range(n):
            for j in range(n):
                if i == j:
                    continue
                label = f"{series.parties[i]}→{series.parties[j]}"
                value = "excluded" if r is None else _num(r[i, j] * 100)
                rows.append([str(year), str(year + 1), label, s, value])
    return rows


def _rate_chart(series: kflow.RateSeries, title: str,
                pairs: list[tuple[str, str]] | None = None) -> str:
    parties = series.parties
    if pairs is None:
        pairs = [(a, b) for a in parties for b in parties if a != b]
    lines = []
    for a, b in pairs:
        pts = [(y + 1, v * 100) for y, v in sorted(series.pair(a, b).items()) if v is not None]
        lines.append(svg.Series(f"{a}→{b}", pts))
    return svg.line_chart(lines, title, y_label="knowledge flow rate (%)")


def kfr_by_scope(view: SnapshotView, cfg: RunConfig) -> dict[str, list[kflow.FlowMatrix]]:
    specs = cfg.party_specs()
    parties = [specs[n] for n in cfg.kfr.parties]
    years = list(range(cfg.kfr.year_start, cfg.kfr.year_end + 1))
    return {
        scope: kflow.cohort_series(scope, years, parties, view.top_authors, view.country_set,
                                   cfg.kfr.cohort_size, cfg.kfr.min_sigma_off)
        for scope in kfr_scopes(cfg)
    }


def natsci_kfr(per_scope: dict[str, list[kflow.FlowMatrix]], method: str) -> kflow.RateSeries:
    members = {s: per_scope[s] for s in corpus.NATURAL_SCIENCE_IDS}
    if method == "pooled":
        return kflow.pooled_rates(members)
    return kflow.mean_rates({s: kflow.rate_series(m) for s, m in members.items()})


def cmd_kfr(view: SnapshotView, snapshot_id: str, cfg: RunConfig, out_root: Path) -> list[Path]:
    out = OutputDir(out_root)
    header = ["year_from", "year_to", "pair", "sigma_off", "rate_percent"]
    per_scope = kfr_by_scope(view, cfg)
    for scope, matrices in per_scope.items():
        slug = scope_slug(scope)
        series = kflow.rate_series(matrices)
        sigma = {m.year: m.sigma_off for m in matrices}
        out.write_csv(f"kfr/{slug}.csv", header, _rate_rows(series, sigma))
        out.write_json(f"kfr/{slug}_k.json", {
            "scope": scope,
            "parties": list(series.parties),
            "transitions": [
                {"year_from": m.year, "year_to": m.year + 1, "k": m.k.tolist(),
                 "sigma_off": m.sigma_off, "excluded": m.excluded}
                for m in matrices
            ],
            **_provenance(view, snapshot_id, cfg),
        })
        out.write(f"kfr/{slug}.svg",
                  _rate_chart(series, f"Knowledge flow rate: {corpus.scope_label(scope)}"))
    if corpus.NATSCI_SCOPE in cfg.kfr.disciplines:
        method = cfg.kfr.average
        agg = natsci_kfr(per_scope, method)
        name = f"natural_sciences_{method}"
        out.write_csv(f"kfr/{name}.csv", header, _rate_rows(agg),
                      preamble=[f"natural sciences, {method} over {len(corpus.NATURAL_SCIENCE_IDS)} "
                                "disciplines"])
        us_cn = [(a, b) for a, b in (("US", "CN"), ("CN", "US"))
                 if a in agg.parties and b in agg.parties]
        if us_cn:
            out.write(f"kfr/{name}_us_cn.svg",
                      _rate_chart(agg, f"Knowledge flow rate US/CN, natural sciences ({method})", us_cn))
        others = [(a, b) for a in agg.parties for b in agg.parties
                  if a != b and (a, b) not in us_cn]
        out.write(f"kfr/{name}_others.svg",
                  _rate_chart(agg, f"Knowledge flow rate, other pairs ({method})", others))
    out.sidecar("kfr", snapshot_id, cfg, view.created)
    return out.written


# -- geometry -------------------------------------------------------------------

def cmd_geometry(view: SnapshotView, snapshot_id: str, cfg: RunConfig, out_root: Path) -> list[Path]:
    out = OutputDir(out_root)
    g = cfg.geometry
    meta = _provenance(view, snapshot_id, cfg)
    bins = corpus.binned_periods(g.year_start, g.year_end, g.width)

    tetra = scope_matrices(view, g.tetra_scope, bins, g.tetra_parties, meta)
    valid = [(p, m) for p, m in tetra.items() if m is not None]
    embeddings = [geometry.embed(m) for _, m in valid]
    aligned = geometry.align_series(embeddings)
    counts = {p: view.work_counts(g.tetra_scope, p, g.tetra_parties) for p, _ in valid}
    reference = max((c.single(n) for c in counts.values() for n in g.tetra_parties), default=1)
    snapshots, panels = [], []
    for (period, m), emb, coords in zip(valid, embeddings, aligned):
        stats = geometry.tetra_stats(m)
        radii = geometry.sphere_radii(
            [(n, counts[period].single(n)) for n in g.tetra_parties], max(reference, 1), 0.1)
        snapshots.append({
            "period": corpus.period_label(period),
            "parties": list(m.parties),
            "distances": m.values.tolist(),
            "coordinates": np.round(coords, 12).tolist(),
            "residual": emb.residual,
            "volume": stats.volume,
            "cayley_menger": stats.cm_determinant,
            "realizable": stats.realizable,
            "radii": {r.party: r.radius for r in radii},
            "counts": {r.party: r.count for r in radii},
        })
        pts = [(n, float(c[0]), float(c[1]), r.radius)
               for n, c, r in zip(m.parties, coords, radii)]
        panels.append((corpus.period_label(period), pts, list(combinations(range(4), 2))))
    out.write_json("geometry/tetrahedron.json", {
        "scope": g.tetra_scope, "reference_count": reference, "snapshots": snapshots, **meta})
    out.write("geometry/tetrahedron.svg", svg.panel_grid(
        panels, f"Four-party distances ({corpus.scope_label(g.tetra_scope)}), "
                "orthographic view of the 3-D embedding", extent=0.8))

    base_a, base_b, apex = g.triangle_parties
    tri = scope_matrices(view, g.triangle_scope, bins, g.triangle_parties, meta)
    rows, tri_panels, tri_series = [], [], {"base": [], "side_a": [], "side_b": [], "height": []}
    for period, m in sorted(tri.items()):
        if m is None:
            continue
        label = corpus.period_label(period)
        st = geometry.triangle_stats(m[base_a, base_b], m[base_a, apex], m[base_b, apex], label)
        rows.append([label, _num(st.base), _num(st.side1), _num(st.side2),
                     _num(st.height), _num(st.area), str(st.degenerate).lower()])
        x_apex = (st.side1**2 - st.side2**2) / (2 * st.base)
        pts = [(base_a, -st.base / 2, 0.0, 0.0), (base_b, st.base / 2, 0.0, 0.0),
               (apex, x_apex, st.height, 0.0)]
        tri_panels.append((label, pts, [(0, 1), (0, 2), (1, 2)]))
        x = _period_x(period)
        tri_series["base"].append((x, st.base))
        tri_series["side_a"].append((x, st.side1))
        tri_series["side_b"].append((x, st.side2))
        tri_series["height"].append((x, st.height))
    out.write_csv("geometry/triangle.csv",
                  ["period", f"d_{base_a}_{base_b}", f"d_{base_a}_{apex}", f"d_{base_b}_{apex}",
                   "height", "area", "degenerate"], rows)
    out.write("geometry/triangle.svg", svg.panel_grid(
        tri_panels, f"{base_a}-{base_b}-{apex} triangle ({corpus.scope_label(g.triangle_scope)})",
        extent=0.6))
    names = {"base": f"{base_a}-{base_b}", "side_a": f"{base_a}-{apex}",
             "side_b": f"{base_b}-{apex}", "height": "height H"}
    out.write("geometry/triangle_series.svg", svg.line_chart(
        [svg.Series(names[k], v) for k, v in tri_series.items()],
        "Triangle sides and height", y_label="Jaccard distance"))
    out.sidecar("geometry", snapshot_id, cfg, view.created)
    return out.written


# -- scenarios ------------------------------------------------------------------

def observed_pair(view: SnapshotView, cfg: RunConfig, rescaled: bool) -> list[tuple[int, float]]:
    s = cfg.scenarios
    x, y = s.pair
    obs = []
    for year in range(cfg.year_start, cfg.year_end + 1):
        counts = view.work_counts(s.scope, (year, year), s.pair)
        m = build_matrix(counts, s.pair)
        d = m[x, y]
        obs.append((year, rescale(d) if rescaled else d))
    return obs


def cmd_simulate(view: SnapshotView, snapshot_id: str, cfg: RunConfig, out_root: Path,
                 rescaled: bool | None = None) -> list[Path]:
    rescaled = cfg.representation == "rescaled" if rescaled is None else rescaled
    s = cfg.scenarios
    out = OutputDir(out_root)
    observed = observed_pair(view, cfg, rescaled)
    bounds = scenarios.RESCALED_BOUNDS if rescaled else scenarios.RAW_BOUNDS
    horizon = s.horizon_year - cfg.year_end
    rate = s.decline_rate
    rate_source = "config"
    if rate is None:
        try:
            rate = scenarios.historical_decline_rate(observed, *s.decline_window)
        except ValueError as exc:
            raise ConfigError(f"scenarios.decline_rate unset and {exc}") from None
        rate_source = f"mean yearly change {s.decline_window[0]}-{s.decline_window[1]}"
        if rate <= 0:
            raise ConfigError("historical decline rate is zero; set scenarios.decline_rate")
    pair = _pair_label(*s.pair)
    runs = [
        scenarios.project_a(observed, horizon, pair, bounds),
        scenarios.project_b(observed, horizon, s.damping, pair, bounds),
        scenarios.project_c(observed, horizon, s.peak_years, rate, s.damping, pair, bounds),
    ]
    params = {
        "pair": pair,
        "scope": s.scope,
        "representation": "rescaled" if rescaled else "raw",
        "horizon_year": s.horizon_year,
        "damping": s.damping,
        "peak_years": s.peak_years,
        "decline_rate": rate,
        "decline_rate_source": rate_source,
    }
    preamble = ["model projections, not observed data"] + [f"{k}={params[k]}" for k in sorted(params)]
    rows = [[str(y), "observed", _num(v)] for y, v in observed]
    for run in runs:
        rows += [[str(y), name, _num(v)] for y, v, name in run.projected]
    out.write_csv("simulate/scenarios.csv", ["year", "series", "value"], rows, preamble)
    out.write_json("simulate/scenarios.json", {
        "params": params,
        "note": "model projections, not observed data",
        "observed": [[y, v] for y, v in observed],
        "projected": {run.params["scenario"]: [[y, v] for y, v, _ in run.projected] for run in runs},
        **_provenance(view, snapshot_id, cfg),
    })
    lines = [svg.Series("observed", observed)]
    for run in runs:
        tail = [observed[-1]] + [(y, v) for y, v, _ in run.projected]
        lines.append(svg.Series(f"scenario {run.params['scenario']} (model)", tail, dashed=True))
    out.write("simulate/scenarios.svg", svg.line_chart(
        lines, f"{pair} distance with scenario projections ({corpus.scope_label(s.scope)})",
        y_label="-ln D" if rescaled else "Jaccard distance D",
        note="model, not observed data"))
    out.sidecar("simulate", snapshot_id, cfg, view.created)
    return out.written
