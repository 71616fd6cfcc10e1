"""Proper scoring for quantile forecasts.

Implements the weighted interval score (WIS) in its quantile form, one-sided
empirical coverage, pairwise-aggregated relative WIS (geometric or arithmetic
aggregation across model pairs), and standardized performance ranks.
"""

from __future__ import annotations

import csv
import datetime as dt
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy.stats import rankdata

from .errors import DataError
from .forecast import ForecastKey, QuantileForecast

# A model's scores indexed by (location, forecast_date); each entry holds the
# per-horizon WIS values that were scorable for that unit.
ScoreTable = dict[str, dict[tuple[str, dt.date], list[float]]]


@dataclass(frozen=True)
class ScoreRecord:
    key: ForecastKey
    wis: float
    per_level: tuple[float, ...]


@dataclass
class RelWisTable:
    """Relative WIS per model over an index set of (location, forecast_date)."""

    theta: dict[str, float]
    rel_wis: dict[str, float]
    baseline: str
    aggregation: str
    undefined: frozenset[str] = frozenset()

    def sorted_models(self) -> list[str]:
        return sorted(self.rel_wis)


def wis_terms(levels: Sequence[float], values: Sequence[float], y: float) -> np.ndarray:
    """Per-level WIS contributions 2 * (1[y <= q_k] - tau_k) * (q_k - y)."""
    if math.isnan(y):
        raise DataError("observed value is NaN")
    q = np.asarray(values, dtype=float)
    tau = np.asarray(levels, dtype=float)
    indicator = (y <= q).astype(float)
    return 2.0 * (indicator - tau) * (q - y)


def wis(q: QuantileForecast, y: float) -> ScoreRecord:
    """Weighted interval score of one forecast against the observation y."""
    terms = wis_terms(q.levels.levels, q.values, y)
    return ScoreRecord(q.key, float(terms.mean()), tuple(float(t) for t in terms))


def coverage_rates(forecasts: Sequence[QuantileForecast],
                   truth: Sequence[float]) -> dict[float, float]:
    """One-sided empirical coverage: share of observations <= each quantile.

    All forecasts must share a level set; the comparison is inclusive.
    """
    if not forecasts:
        raise DataError("coverage_rates needs at least one forecast")
    if len(forecasts) != len(truth):
        raise DataError("forecasts and truth must align one-to-one")
    levels = forecasts[0].levels
    if any(f.levels != levels for f in forecasts):
        raise DataError("coverage_rates requires a common level set")
    values = np.array([f.values for f in forecasts], dtype=float)
    y = np.asarray(truth, dtype=float)[:, None]
    rates = (y <= values).mean(axis=0)
    return {tau: float(r) for tau, r in zip(levels.levels, rates)}


def score_table(records: Iterable[ScoreRecord]) -> ScoreTable:
    """Group score records by model and (location, forecast_date)."""
    table: ScoreTable = {}
    for rec in records:
        unit = (rec.key.location, rec.key.forecast_date)
        table.setdefault(rec.key.model_id, {}).setdefault(unit, []).append(rec.wis)
    return table


def _baseline_component(table: ScoreTable, baseline: str) -> set[str]:
    """Models connected to the baseline through shared (location, date) units."""
    reachable = {baseline}
    frontier = [baseline]
    while frontier:
        current = frontier.pop()
        units = table[current].keys()
        for m in table:
            if m not in reachable and units & table[m].keys():
                reachable.add(m)
                frontier.append(m)
    return reachable


def relative_wis(table: ScoreTable, baseline: str,
                 aggregation: str = "geometric") -> RelWisTable:
    """Pairwise-aggregated relative WIS, normalized so the baseline scores 1.

    For each model pair, the ratio of mean WIS over the units both scored is
    computed (the self-pair contributes ratio 1); ratios are combined with a
    geometric or arithmetic mean over the pairs that share at least one unit,
    then scaled by the baseline's aggregate. Models not connected to the
    baseline through shared units are reported as undefined.
    """
    if aggregation not in ("geometric", "arithmetic"):
        raise DataError(f"unknown aggregation {aggregation!r}")
    if baseline not in table:
        raise DataError(f"baseline model {baseline!r} has no scores")
    models = sorted(table)
    connected = _baseline_component(table, baseline)

    theta: dict[str, float] = {}
    for m in models:
        if m not in connected:
            continue
        log_ratios = []
        ratios = []
        for m2 in models:
            if m2 not in connected:
                continue
            shared = table[m].keys() & table[m2].keys()
            if not shared:
                continue
            num_vals = [v for u in shared for v in table[m][u]]
            den_vals = [v for u in shared for v in table[m2][u]]
            num = sum(num_vals) / len(num_vals)
            den = sum(den_vals) / len(den_vals)
            ratio = num / den
            ratios.append(ratio)
            log_ratios.append(math.log(ratio))
        if aggregation == "geometric":
            theta[m] = math.exp(sum(log_ratios) / len(log_ratios))
        else:
            theta[m] = sum(ratios) / len(ratios)

    base = theta[baseline]
    rel = {m: t / base for m, t in theta.items()}
    undefined = frozenset(m for m in models if m not in connected)
    return RelWisTable(theta=theta, rel_wis=rel, baseline=baseline,
                       aggregation=aggregation, undefined=undefined)


def standardized_rank(values: Mapping[str, float]) -> dict[str, float]:
    """Ranks on [0, 1]: 0 is the best (smallest) value, 1 the worst.

    Ties receive the mean of their ordinals before standardizing; a single
    model gets 0.5.
    """
    if not values:
        raise DataError("standardized_rank needs at least one model")
    models = sorted(values)
    if len(models) == 1:
        return {models[0]: 0.5}
    ordinals = rankdata([values[m] for m in models], method="average")
    scale = len(models) - 1
    return {m: float((o - 1.0) / scale) for m, o in zip(models, ordinals)}


def save_scores(records: Iterable[ScoreRecord], path: str | Path) -> None:
    """Score export: model,location,forecast_date,target_end_date,horizon,wis."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["model", "location", "forecast_date", "target_end_date",
                         "horizon", "wis"])
        for rec in sorted(records, key=lambda r: r.key):
            k = rec.key
            writer.writerow([k.model_id, k.location, k.forecast_date.isoformat(),
                             k.target_end_date.isoformat(), k.horizon, repr(rec.wis)])


def load_scores(path: str | Path) -> list[ScoreRecord]:
    path = Path(path)
    if not path.exists():
        raise DataError(f"score file not found: {path}")
    records = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            key = ForecastKey(row["model"], row["location"],
                              dt.date.fromisoformat(row["forecast_date"]),
                              dt.date.fromisoformat(row["target_end_date"]))
            w = float(row["wis"])
            records.append(ScoreRecord(key, w, (w,)))
    return records


def save_rel_wis(table: RelWisTable, path: str | Path) -> None:
    """Relative WIS export: model,theta,rel_wis,aggregation."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["model", "theta", "rel_wis", "aggregation"])
        for m in table.sorted_models():
            writer.writerow([m, repr(table.theta[m]), repr(table.rel_wis[m]),
                             table.aggregation])
        for m in sorted(table.undefined):
            writer.writerow([m, "", "", table.aggregation])
