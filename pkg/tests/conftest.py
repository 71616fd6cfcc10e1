"""Shared fixtures and independent oracle implementations for the test suite.

The oracles here deliberately avoid the library's own code paths: pinball
loss, weighted median, pairwise relative skill, and Pearson correlation are
recomputed from their definitions so the tests are a genuine cross-check.
"""

from __future__ import annotations

import datetime as dt
import math

import numpy as np
import pytest

from qens import (ForecastKey, QuantileForecast, QuantileLevelSet,
                  SubmissionSet, TruthStore)
from qens.forecast import WEEK

SAT0 = dt.date(2021, 1, 2)  # a Saturday


def sat(i: int) -> dt.date:
    """The i-th Saturday of the test calendar."""
    return SAT0 + i * WEEK


def make_forecast(model: str, loc: str, s: dt.date, h: int,
                  levels: QuantileLevelSet, values) -> QuantileForecast:
    key = ForecastKey(model, loc, s, s + h * WEEK)
    return QuantileForecast(key, levels, tuple(float(v) for v in values))


def submission_set(forecasts) -> SubmissionSet:
    subs = SubmissionSet()
    for f in forecasts:
        subs.add(f)
    return subs


@pytest.fixture
def seven() -> QuantileLevelSet:
    return QuantileLevelSet.seven()


@pytest.fixture
def three() -> QuantileLevelSet:
    return QuantileLevelSet((0.25, 0.5, 0.75))


# ---------------------------------------------------------------- oracles

def pinball_loss(tau: float, q: float, y: float) -> float:
    """Standard pinball (quantile) loss, written independently of the library."""
    if y >= q:
        return tau * (y - q)
    return (1.0 - tau) * (q - y)


def oracle_weighted_median(values, weights) -> float:
    """Interpolated weighted median recomputed from its definition.

    Components with zero weight are ignored; remaining ones are sorted by
    value and given midpoint positions; the 0.5 crossing is interpolated
    linearly and clamped at the extremes.
    """
    pairs = sorted((v, w) for v, w in zip(values, weights) if w > 0)
    vals = [v for v, _ in pairs]
    wts = [w for _, w in pairs]
    total = sum(wts)
    wts = [w / total for w in wts]
    positions = []
    acc = 0.0
    for w in wts:
        positions.append(acc + w / 2.0)
        acc += w
    if 0.5 <= positions[0]:
        return vals[0]
    if 0.5 >= positions[-1]:
        return vals[-1]
    for i in range(len(positions) - 1):
        if positions[i] <= 0.5 <= positions[i + 1]:
            span = positions[i + 1] - positions[i]
            frac = (0.5 - positions[i]) / span
            return vals[i] + frac * (vals[i + 1] - vals[i])
    raise AssertionError("unreachable")


def oracle_relative_skill(unit_scores, baseline: str,
                          aggregation: str = "geometric"):
    """Brute-force pairwise relative-skill table.

    `unit_scores` maps model -> {(location, date): [scores...]}. For each
    ordered pair (m, m'), the ratio of mean scores over their shared units is
    computed from scratch; ratios (including the self-pair, which is 1) are
    combined by geometric or arithmetic mean and normalized by the baseline.
    """
    models = sorted(unit_scores)
    theta = {}
    for m in models:
        ratios = []
        for other in models:
            shared = set(unit_scores[m]) & set(unit_scores[other])
            if not shared:
                continue
            num_scores = [s for u in shared for s in unit_scores[m][u]]
            den_scores = [s for u in shared for s in unit_scores[other][u]]
            ratios.append((sum(num_scores) / len(num_scores)) /
                          (sum(den_scores) / len(den_scores)))
        if aggregation == "geometric":
            theta[m] = math.exp(sum(math.log(r) for r in ratios) / len(ratios))
        else:
            theta[m] = sum(ratios) / len(ratios)
    return {m: theta[m] / theta[baseline] for m in models}


def oracle_pearson(x, y) -> float:
    """Pearson correlation from the definitional formula."""
    x = list(map(float, x))
    y = list(map(float, y))
    n = len(x)
    mx = sum(x) / n
    my = sum(y) / n
    cov = sum((a - mx) * (b - my) for a, b in zip(x, y))
    vx = sum((a - mx) ** 2 for a in x)
    vy = sum((b - my) ** 2 for b in y)
    return cov / math.sqrt(vx * vy)


def random_quantile_values(rng: np.random.Generator, k: int,
                           scale: float = 10.0) -> np.ndarray:
    """A random strictly increasing nonnegative quantile vector."""
    steps = rng.uniform(0.05, 1.0, size=k) * scale / k
    start = rng.uniform(0.0, scale)
    return start + np.cumsum(steps)
