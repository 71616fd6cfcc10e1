"""Quantile-wise ensemble combiners.

Component forecasts are combined level by level with a weighted mean or an
interpolated weighted median. Weights for unavailable components are zeroed
and the rest renormalized to sum to one.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping

import numpy as np

from .errors import DataError, ValidationError
from .forecast import ForecastKey, QuantileForecast

WEIGHT_SUM_TOL = 1e-12


@dataclass(frozen=True)
class WeightVector:
    """Nonnegative component weights summing to one, optionally per-stratum."""

    weights: Mapping[str, float]
    stratum: int | float | None = None

    def __post_init__(self):
        object.__setattr__(self, "weights", dict(self.weights))
        if not self.weights:
            raise ValidationError("weight vector must be nonempty")
        if any(w < 0 for w in self.weights.values()):
            raise ValidationError("weights must be nonnegative")
        total = sum(self.weights.values())
        if abs(total - 1.0) > WEIGHT_SUM_TOL:
            raise ValidationError(f"weights sum to {total}, expected 1")

    def __getitem__(self, model: str) -> float:
        return self.weights[model]

    def models(self) -> list[str]:
        return sorted(self.weights)

    @classmethod
    def uniform(cls, models: Iterable[str], stratum=None) -> "WeightVector":
        models = sorted(models)
        if not models:
            raise ValidationError("cannot build uniform weights over no models")
        w = 1.0 / len(models)
        return cls({m: w for m in models}, stratum=stratum)


# Per-model quantile values at one (location, date, target, level) cell;
# availability is encoded by key presence.
ComponentSlice = Mapping[str, float]


def effective_weights(w: WeightVector, availability: Iterable[str]) -> WeightVector:
    """Zero out missing components and renormalize the rest."""
    avail = set(availability)
    kept = {m: wt for m, wt in w.weights.items() if m in avail}
    total = sum(kept.values())
    if total <= 0:
        raise DataError("no weight mass on available components")
    scaled = {m: wt / total for m, wt in kept.items()}
    scaled.update({m: 0.0 for m in w.weights if m not in avail})
    return WeightVector(scaled, stratum=w.stratum)


def _median_column(values: np.ndarray, weights: np.ndarray,
                   interpolate: bool) -> float:
    """Weighted median of one level's values; inputs sorted by (value, model)."""
    cum = np.cumsum(weights)
    if not interpolate:
        idx = int(np.searchsorted(cum, 0.5))
        return float(values[min(idx, len(values) - 1)])
    positions = cum - weights / 2.0
    if 0.5 <= positions[0]:
        return float(values[0])
    if 0.5 >= positions[-1]:
        return float(values[-1])
    return float(np.interp(0.5, positions, values))


def combine_values(values: np.ndarray, weights: np.ndarray, method: str,
                   interpolate: bool = True) -> np.ndarray:
    """Per-level combination of a component matrix.

    `values` has one row per component (rows ordered by model id) and one
    column per quantile level; `weights` aligns with the rows and must already
    be effective (nonnegative, summing to 1). This kernel is shared by forecast
    emission and training-objective evaluation so the two agree bit for bit.
    """
    if method == "mean":
        return weights @ values
    if method != "median":
        raise DataError(f"unknown combination method {method!r}")
    mask = weights > 0.0
    vals = values[mask]
    wts = weights[mask]
    if vals.shape[0] == 0:
        raise DataError("weighted median with no positive-weight components")
    # Stable sort per column keeps model-id order on value ties because rows
    # are already ordered by model id.
    order = np.argsort(vals, axis=0, kind="stable")
    out = np.empty(values.shape[1])
    for k in range(values.shape[1]):
        idx = order[:, k]
        out[k] = _median_column(vals[idx, k], wts[idx], interpolate)
    return out


def weighted_mean_quantile(slice_: ComponentSlice, w: WeightVector) -> float:
    """Dot product of weights and component values (weights already effective)."""
    models = sorted(slice_)
    values = np.array([[slice_[m]] for m in models])
    weights = np.array([w[m] for m in models])
    return float(combine_values(values, weights, "mean")[0])


def weighted_median_quantile(slice_: ComponentSlice, w: WeightVector,
                             interpolate: bool = True) -> float:
    """Weighted median of component values with midpoint interpolation.

    Values are sorted (stable by model id on ties) and assigned midpoint mass
    positions P_m = sum_{j<m} w_j + w_m / 2; the result interpolates the
    bracketing (value, P) pairs at mass 0.5, clamping at the extremes. With
    interpolate=False, returns the smallest value whose cumulative weight
    reaches 0.5 (the limiting non-interpolated definition).
    """
    if not slice_:
        raise DataError("weighted median of an empty slice")
    models = sorted(slice_)
    values = np.array([[slice_[m]] for m in models])
    weights = np.array([w[m] for m in models])
    return float(combine_values(values, weights, "median", interpolate)[0])


def combine(forecasts: Mapping[str, QuantileForecast], w: WeightVector,
            method: str = "median", model_id: str = "ensemble",
            interpolate: bool = True) -> QuantileForecast:
    """Combine component forecasts level by level into one ensemble forecast.

    All components must share the same (location, date, target) and level set.
    The output is floored at zero and forced monotone across levels.
    """
    if not forecasts:
        raise DataError("cannot combine an empty component set")
    if method not in ("mean", "median"):
        raise DataError(f"unknown combination method {method!r}")
    items = [(m, f) for m, f in sorted(forecasts.items()) if m in w.weights]
    if not items:
        raise DataError("no component carries weight")
    _, first = items[0]
    for _, f in items[1:]:
        if f.levels != first.levels:
            raise DataError("component level sets do not match")
        if (f.key.location, f.key.forecast_date, f.key.target_end_date) != (
                first.key.location, first.key.forecast_date, first.key.target_end_date):
            raise DataError("component forecast keys do not match")
    w_eff = effective_weights(w, (m for m, _ in items))
    values = np.array([f.values for _, f in items])
    weights = np.array([w_eff[m] for m, _ in items])
    combined = combine_values(values, weights, method, interpolate=interpolate)
    out = np.maximum(combined, 0.0)
    out = np.maximum.accumulate(out)
    key = ForecastKey(model_id, first.key.location, first.key.forecast_date,
                      first.key.target_end_date)
    return QuantileForecast(key, first.levels, tuple(float(v) for v in out))
