"""Illustrative projections of a bilateral distance series.

These are explicit models, not fits:

* ``project_a`` mirrors the observed series about its final year.
* ``project_b`` continues the last observed change with geometric damping.
* ``project_c`` runs ``project_b`` for a few years, then reverses at a fixed
  yearly rate.

All outputs are clamped to the codomain of the chosen representation.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

RAW_BOUNDS = (0.0, 1.0)
RESCALED_BOUNDS = (0.0, math.inf)

DEFAULT_DAMPING = 0.8
DEFAULT_PEAK_YEARS = 3


@dataclass(frozen=True)
class TrajectorySeries:
    pair: str
    observed: tuple[tuple[int, float], ...]
    projected: tuple[tuple[int, float, str], ...]
    params: dict = field(default_factory=dict)

    def values(self) -> list[float]:
        return [v for _, v, _ in self.projected]

    def to_json(self) -> str:
        doc = asdict(self)
        doc["note"] = "model projection, not observed data"
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def _check_observed(observed: Sequence[tuple[int, float]]) -> list[tuple[int, float]]:
    obs = [(int(y), float(v)) for y, v in observed]
    if len(obs) < 2:
        raise ValueError("need at least two observed points")
    years = [y for y, _ in obs]
    if any(b != a + 1 for a, b in zip(years, years[1:])):
        raise ValueError("observed years must be contiguous and increasing")
    return obs


def _check_horizon(horizon: int) -> None:
    if horizon <= 0:
        raise ValueError("horizon must be positive")


def _clamp(v: float, bounds: tuple[float, float]) -> float:
    return min(max(v, bounds[0]), bounds[1])


def project_a(
    observed: Sequence[tuple[int, float]],
    horizon: int,
    pair: str = "US-CN",
    bounds: tuple[float, float] = RAW_BOUNDS,
) -> TrajectorySeries:
    """value(end + k) = value(end - k); stops early when history runs out."""
    obs = _check_observed(observed)
    _check_horizon(horizon)
    end = obs[-1][0]
    steps = min(horizon, len(obs) - 1)
    proj = tuple(
        (end + k, _clamp(obs[-1 - k][1], bounds), "A") for k in range(1, steps + 1)
    )
    return TrajectorySeries(pair, tuple(obs), proj, {"scenario": "A", "horizon": horizon})


def _damped_path(obs: list[tuple[int, float]], steps: int, damping: float,
                 bounds: tuple[float, float]) -> list[float]:
    last = obs[-1][1]
    increment = obs[-1][1] - obs[-2][1]
    out = []
    for k in range(1, steps + 1):
        last = _clamp(last + damping**k * increment, bounds)
        out.append(last)
    return out


def project_b(
    observed: Sequence[tuple[int, float]],
    horizon: int,
    damping: float = DEFAULT_DAMPING,
    pair: str = "US-CN",
    bounds: tuple[float, float] = RAW_BOUNDS,
) -> TrajectorySeries:
    obs = _check_observed(observed)
    _check_horizon(horizon)
    if not 0 < damping < 1:
        raise ValueError("damping must lie strictly between 0 and 1")
    end = obs[-1][0]
    path = _damped_path(obs, horizon, damping, bounds)
    proj = tuple((end + k, v, "B") for k, v in enumerate(path, start=1))
    return TrajectorySeries(
        pair, tuple(obs), proj, {"scenario": "B", "horizon": horizon, "damping": damping}
    )


def project_c(
    observed: Sequence[tuple[int, float]],
    horizon: int,
    peak_years: int = DEFAULT_PEAK_YEARS,
    decline_rate: float | None = None,
    damping: float = DEFAULT_DAMPING,
    pair: str = "US-CN",
    bounds: tuple[float, float] = RAW_BOUNDS,
) -> TrajectorySeries:
    """Damped continuation for ``peak_years``, then a linear reversal.

    The reversal runs against the direction of the last observed change at
    ``decline_rate`` per year (downwards when the last change was zero).
    """
    obs = _check_observed(observed)
    _check_horizon(horizon)
    if peak_years < 1:
        raise ValueError("peak_years must be at least 1")
    if not 0 < damping < 1:
        raise ValueError("damping must lie strictly between 0 and 1")
    if decline_rate is None or decline_rate <= 0:
        raise ValueError("decline_rate must be positive")
    end = obs[-1][0]
    path = _damped_path(obs, min(horizon, peak_years), damping, bounds)
    direction = -1.0 if obs[-1][1] - obs[-2][1] >= 0 else 1.0
    last = path[-1] if path else obs[-1][1]
    for _ in range(horizon - len(path)):
        last = _clamp(last + direction * decline_rate, bounds)
        path.append(last)
    proj = tuple((end + k, v, "C") for k, v in enumerate(path, start=1))
    params = {
        "scenario": "C",
        "horizon": horizon,
        "damping": damping,
        "peak_years": peak_years,
        "decline_rate": decline_rate,
    }
    return TrajectorySeries(pair, tuple(obs), proj, params)


def mean_yearly_change(observed: Sequence[tuple[int, float]], start: int, end: int) -> float:
    """Average per-year change between two observed years (end minus start over the span)."""
    lookup = dict(observed)
    if start not in lookup or end not in lookup or end <= start:
        raise ValueError(f"need observations at {start} and {end}")
    return (lookup[end] - lookup[start]) / (end - start)


def historical_decline_rate(
    observed: Sequence[tuple[int, float]], start: int = 2010, end: int = 2018
) -> float:
    """Magnitude of the mean yearly change over ``start``..``end``."""
    return abs(mean_yearly_change(observed, start, end))
