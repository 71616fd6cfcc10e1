"""Synthetic scenario generator: determinism, calibration, revisions."""

import numpy as np
import pytest

from qens import (ComponentProfile, ConfigError, QuantileLevelSet, SimSpec,
                  Wave, relative_wis, score_table, simulate, wis)
from qens.simulate import persistent_skill_spec, regime_switching_spec


def small_spec(seed=0, **overrides):
    defaults = dict(
        seed=seed, n_locations=2, n_weeks=16,
        components=[ComponentProfile(name="good"),
                    ComponentProfile(name="biased", bias=1.3)],
        include_oracle=True,
    )
    defaults.update(overrides)
    return SimSpec(**defaults)


class TestSimSpec:
    def test_round_trip(self):
        spec = small_spec(seed=5)
        assert SimSpec.from_dict(spec.to_dict()).to_dict() == spec.to_dict()

    def test_invalid_probability_rejected(self):
        with pytest.raises(ConfigError):
            ComponentProfile(name="bad", missing_prob=1.5)

    def test_needs_components(self):
        with pytest.raises(ConfigError):
            SimSpec(seed=0, components=[], include_oracle=False)


class TestSimulate:
    def test_deterministic(self):
        subs1, truth1, anom1 = simulate(small_spec(seed=9))
        subs2, truth2, anom2 = simulate(small_spec(seed=9))
        assert subs1.forecasts.keys() == subs2.forecasts.keys()
        for key in subs1.forecasts:
            assert subs1.forecasts[key].values == subs2.forecasts[key].values
        assert truth1.latest() == truth2.latest()
        assert anom1 == anom2

    def test_seed_changes_output(self):
        subs1, _, _ = simulate(small_spec(seed=1))
        subs2, _, _ = simulate(small_spec(seed=2))
        diff = any(subs1.forecasts[k].values != subs2.forecasts[k].values
                   for k in subs1.forecasts.keys() & subs2.forecasts.keys())
        assert diff

    def test_snapshots_are_causal(self):
        _, truth, _ = simulate(small_spec(seed=3))
        for d in truth.snapshot_dates:
            for (_, target), _v in truth.snapshot(d).items():
                assert target <= d

    def test_truth_is_positive(self):
        _, truth, _ = simulate(small_spec(seed=4))
        assert all(v > 0 for v in truth.latest().values())

    def test_oracle_emits_generating_quantiles(self):
        # the oracle component must be exactly calibrated: empirical coverage
        # of each of its levels matches the nominal level closely
        spec = small_spec(seed=6, n_locations=4, n_weeks=35)
        subs, truth, _ = simulate(spec)
        final = truth.latest()
        levels = spec.levels.levels
        hits = np.zeros(len(levels))
        n = 0
        for key, f in subs.forecasts.items():
            if key.model_id != "oracle":
                continue
            y = final.get((key.location, key.target_end_date))
            if y is None:
                continue
            hits += [1.0 if y <= q else 0.0 for q in f.values]
            n += 1
        assert n > 300
        for tau, rate in zip(levels, hits / n):
            assert abs(rate - tau) <= 0.05

    def test_oracle_has_lowest_relative_skill(self):
        spec = small_spec(seed=8, n_locations=3, n_weeks=30,
                          components=[
                              ComponentProfile(name="okay", center_noise=0.1),
                              ComponentProfile(name="biased", bias=1.4),
                              ComponentProfile(name="wild", center_noise=0.5),
                          ])
        subs, truth, _ = simulate(spec)
        final = truth.latest()
        records = []
        for f in subs:
            y = final.get((f.key.location, f.key.target_end_date))
            if y is not None and y >= 0:
                records.append(wis(f, y))
        rel = relative_wis(score_table(records), "oracle")
        assert all(v >= 1.0 for m, v in rel.rel_wis.items())

    def test_missingness_profile(self):
        spec = small_spec(seed=10, n_weeks=30, components=[
            ComponentProfile(name="solid"),
            ComponentProfile(name="flaky", missing_prob=0.5),
        ])
        subs, _, _ = simulate(spec)
        by_model = {}
        for key in subs.forecasts:
            by_model[key.model_id] = by_model.get(key.model_id, 0) + 1
        assert by_model["flaky"] < by_model["solid"]
        assert by_model["flaky"] > 0

    def test_revisions_recorded_and_injected(self):
        spec = small_spec(seed=12, n_weeks=30, revision_prob=0.3)
        _, truth, anomalies = simulate(spec)
        assert anomalies, "expected injected revisions"
        final = truth.latest()
        for rec in anomalies:
            assert rec.kind == "revision"
            assert final[(rec.location, rec.target_end_date)] == rec.final_value
            # the snapshot at the target week shows the pre-revision value
            early = truth.snapshot(rec.target_end_date)
            assert early[(rec.location, rec.target_end_date)] == rec.initial_value


class TestScenarioConstructors:
    def test_persistent_skill_shape(self):
        spec = persistent_skill_spec()
        names = [c.name for c in spec.components]
        assert names.count("sharp") == 1
        assert all(c.skill == "constant" for c in spec.components)

    def test_regime_switching_shape(self):
        spec = regime_switching_spec()
        flips = [c for c in spec.components if c.skill == "regime_switching"]
        assert len(flips) >= 4
        assert all(c.regime_period == 6 for c in flips)
