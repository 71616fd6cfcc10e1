"""Interval scoring, relative skill, ranks, and coverage."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qens import (DataError, QuantileLevelSet, coverage_rates, relative_wis,
                  score_table, standardized_rank, wis, wis_terms)
from qens.scoring import ScoreRecord, load_scores, save_scores

from conftest import (make_forecast, oracle_relative_skill, pinball_loss,
                      random_quantile_values, sat, submission_set)


class TestWis:
    def test_exact_hit_scores_zero(self):
        assert wis_terms((0.5,), (10.0,), 10.0).tolist() == [0.0]

    def test_single_level_miss(self):  # hand-computed: 2*(0-0.5)*(10-12)
        assert wis_terms((0.5,), (10.0,), 12.0).tolist() == [2.0]

    def test_three_level_example(self):  # hand-computed term by term
        terms = wis_terms((0.25, 0.5, 0.75), (8.0, 10.0, 12.0), 10.0)
        assert terms.tolist() == [1.0, 0.0, 1.0]
        f = make_forecast("m", "loc", sat(0), 1, QuantileLevelSet((0.25, 0.5, 0.75)),
                          [8, 10, 12])
        assert wis(f, 10.0).wis == pytest.approx(2.0 / 3.0, abs=1e-15)

    def test_nan_observation_rejected(self):
        with pytest.raises(DataError):
            wis_terms((0.5,), (10.0,), float("nan"))

    @given(st.integers(0, 2 ** 32 - 1))
    @settings(max_examples=50, deadline=None)
    def test_terms_nonnegative_and_match_pinball(self, seed):
        rng = np.random.default_rng(seed)
        taus = np.sort(rng.uniform(0.01, 0.99, size=5))
        q = random_quantile_values(rng, 5)
        y = rng.uniform(-5, 25)
        terms = wis_terms(tuple(taus), tuple(q), y)
        assert np.all(terms >= 0)
        for term, tau, qk in zip(terms, taus, q):
            assert term == pytest.approx(2.0 * pinball_loss(tau, qk, y), abs=1e-12)

    @given(st.floats(-1e6, 1e6))
    @settings(max_examples=50, deadline=None)
    def test_translation_equivariance(self, c):
        taus = (0.1, 0.5, 0.9)
        q = (5.0, 10.0, 15.0)
        y = 11.0
        base = wis_terms(taus, q, y).mean()
        shifted = wis_terms(taus, tuple(v + c for v in q), y + c).mean()
        assert shifted == pytest.approx(base, abs=1e-9 * max(1.0, abs(c)))


class TestCoverage:
    def test_inclusive_comparison(self, three):
        f = make_forecast("m", "loc", sat(0), 1, three, [1, 2, 3])
        rates = coverage_rates([f], [2.0])
        assert rates[0.5] == 1.0  # y == q counts as covered
        assert rates[0.25] == 0.0

    def test_all_below(self, three):
        fs = [make_forecast("m", "loc", sat(i), 1, three, [10, 20, 30])
              for i in range(4)]
        rates = coverage_rates(fs, [1.0, 2.0, 3.0, 4.0])
        assert rates == {0.25: 1.0, 0.5: 1.0, 0.75: 1.0}

    def test_empty_rejected(self):
        with pytest.raises(DataError):
            coverage_rates([], [])


def _records(level_set, spec):
    """ScoreRecords from {model: {(loc, date): [wis per horizon]}}."""
    records = []
    for model, units in spec.items():
        for (loc, date), scores in units.items():
            for h, score in enumerate(scores, start=1):
                key = make_forecast(model, loc, date, h, level_set,
                                    [1, 2, 3]).key
                records.append(ScoreRecord(key, float(score),
                                           (float(score),) * 3))
    return records


class TestRelativeWis:
    def test_identical_models_score_one(self, three):
        spec = {"baseline": {("x", sat(0)): [2, 2, 2, 2]},
                "m": {("x", sat(0)): [2, 2, 2, 2]}}
        table = relative_wis(score_table(_records(three, spec)), "baseline")
        assert table.rel_wis["m"] == pytest.approx(1.0, abs=1e-12)

    def test_full_coverage_reduces_to_mean_ratio(self, three):
        rng = np.random.default_rng(3)
        units = [("x", sat(i)) for i in range(6)] + [("y", sat(i)) for i in range(6)]
        spec = {m: {u: list(rng.uniform(1, 10, size=4)) for u in units}
                for m in ("baseline", "a", "b", "c")}
        records = _records(three, spec)
        table = score_table(records)
        mean_wis = {m: np.mean([s for scores in table[m].values() for s in scores])
                    for m in table}
        for agg in ("geometric", "arithmetic"):
            rel = relative_wis(table, "baseline", agg)
            for m in spec:
                expected = mean_wis[m] / mean_wis["baseline"]
                assert rel.rel_wis[m] == pytest.approx(expected, abs=1e-12)

    def test_matches_brute_force_oracle_with_missingness(self, three):
        rng = np.random.default_rng(11)
        units = [(loc, sat(i)) for loc in "xyz" for i in range(4)]
        spec = {}
        for m in ("baseline", "a", "b"):
            # staggered missingness: each model skips a different subset
            kept = [u for j, u in enumerate(units)
                    if m == "baseline" or (hash((m, j)) % 3 != 0)]
            spec[m] = {u: list(rng.uniform(1, 10, size=4)) for u in kept}
        table = score_table(_records(three, spec))
        unit_scores = {m: {u: list(scores) for u, scores in table[m].items()}
                       for m in table}
        for agg in ("geometric", "arithmetic"):
            expected = oracle_relative_skill(unit_scores, "baseline", agg)
            rel = relative_wis(table, "baseline", agg)
            for m in spec:
                assert rel.rel_wis[m] == pytest.approx(expected[m], abs=1e-12)

    def test_disconnected_model_undefined(self, three):
        spec = {"baseline": {("x", sat(0)): [2.0]},
                "a": {("x", sat(0)): [1.0]},
                "lonely": {("y", sat(9)): [1.0]}}
        table = relative_wis(score_table(_records(three, spec)), "baseline")
        assert "lonely" in table.undefined
        assert "lonely" not in table.rel_wis
        assert "a" in table.rel_wis

    def test_geometric_vs_arithmetic_same_order_full_coverage(self, three):
        rng = np.random.default_rng(5)
        units = [("x", sat(i)) for i in range(8)]
        spec = {m: {u: list(rng.uniform(1, 10, size=4)) for u in units}
                for m in ("baseline", "a", "b", "c", "d")}
        table = score_table(_records(three, spec))
        geo = relative_wis(table, "baseline", "geometric").rel_wis
        ari = relative_wis(table, "baseline", "arithmetic").rel_wis
        assert sorted(geo, key=geo.get) == sorted(ari, key=ari.get)


class TestStandardizedRank:
    def test_two_models(self):
        assert standardized_rank({"a": 0.5, "b": 1.2}) == {"a": 0.0, "b": 1.0}

    def test_three_way_tie(self):
        ranks = standardized_rank({"a": 1.0, "b": 1.0, "c": 1.0})
        assert ranks == {"a": 0.5, "b": 0.5, "c": 0.5}

    def test_single_model(self):
        assert standardized_rank({"a": 3.0}) == {"a": 0.5}

    def test_five_distinct(self):
        values = {m: float(i) for i, m in enumerate("abcde")}
        ranks = standardized_rank(values)
        assert [ranks[m] for m in "abcde"] == [0.0, 0.25, 0.5, 0.75, 1.0]


class TestScoreCSV:
    def test_round_trip(self, tmp_path, three):
        f = make_forecast("m", "loc", sat(0), 2, three, [1, 2, 3])
        records = [wis(f, 2.5)]
        save_scores(records, tmp_path / "s.csv")
        loaded = load_scores(tmp_path / "s.csv")
        assert loaded[0].key == records[0].key
        assert loaded[0].wis == records[0].wis
