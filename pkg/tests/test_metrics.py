import numpy as np
import pytest

from locbench.metrics import (
    DEFAULT_THRESHOLDS,
    AccuracyThresholds,
    MetricSeries,
    average_precision,
    localized_percentage,
    localized_table,
    mean_average_precision,
    precision_at_k,
    recall_at_k,
)

from oracles.retrieval_bruteforce import (
    average_precision_brute,
    mean_average_precision_brute,
    precision_at_k_brute,
    recall_at_k_brute,
)


def random_instance(seed, n_db=20, n_queries=6, allow_empty=False):
    rng = np.random.default_rng(seed)
    db = [f"db{i:02d}" for i in range(rng.integers(4, n_db + 1))]
    rankings = {}
    relevant = {}
    for qi in range(n_queries):
        q = f"q{qi}"
        order = list(rng.permutation(db))
        rankings[q] = order[: rng.integers(1, len(db) + 1)]
        lo = 0 if allow_empty else 1
        relevant[q] = frozenset(rng.choice(db, size=rng.integers(lo, len(db)), replace=False))
    return rankings, relevant


class TestLocalizedPercentage:
    ERRORS = [(0.1, 1.0), (0.3, 3.0), None, (4.0, 8.0)]

    def test_hand_example_across_thresholds(self):
        assert localized_percentage(self.ERRORS, (0.25, 2.0)) == 25.0
        assert localized_percentage(self.ERRORS, (0.5, 5.0)) == 50.0
        assert localized_percentage(self.ERRORS, (5.0, 10.0)) == 75.0

    def test_failures_stay_in_denominator(self):
        assert localized_percentage([None, None, (0.0, 0.0)], (1.0, 1.0)) == pytest.approx(100.0 / 3.0)

    def test_comparison_is_strict(self):
        assert localized_percentage([(0.25, 1.0)], (0.25, 2.0)) == 0.0
        assert localized_percentage([(0.1, 2.0)], (0.25, 2.0)) == 0.0
        assert localized_percentage([(0.2499, 1.999)], (0.25, 2.0)) == 100.0

    def test_both_components_must_pass(self):
        assert localized_percentage([(0.1, 50.0)], (0.25, 2.0)) == 0.0
        assert localized_percentage([(50.0, 0.1)], (0.25, 2.0)) == 0.0

    def test_all_failed(self):
        assert localized_percentage([None, None], (5.0, 10.0)) == 0.0

    def test_no_queries(self):
        with pytest.raises(ValueError, match="no queries"):
            localized_percentage([], (0.25, 2.0))

    def test_table_non_decreasing(self, rng):
        for _ in range(50):
            errors = []
            for _ in range(rng.integers(1, 30)):
                if rng.random() < 0.2:
                    errors.append(None)
                else:
                    errors.append((rng.uniform(0, 8), rng.uniform(0, 15)))
            table = localized_table(errors)
            assert table == sorted(table)

    def test_default_threshold_pairs(self):
        assert tuple(DEFAULT_THRESHOLDS) == ((0.25, 2.0), (0.5, 5.0), (5.0, 10.0))

    def test_threshold_validation(self):
        with pytest.raises(ValueError, match="increase"):
            AccuracyThresholds(pairs=((0.5, 5.0), (0.25, 2.0)))
        with pytest.raises(ValueError, match="increase"):
            AccuracyThresholds(pairs=((0.25, 2.0), (0.5, 2.0)))
        with pytest.raises(ValueError, match="positive"):
            AccuracyThresholds(pairs=((0.0, 2.0),))
        with pytest.raises(ValueError, match="at least one"):
            AccuracyThresholds(pairs=())


class TestPrecisionAtK:
    def test_all_relevant(self):
        assert precision_at_k(["a", "b", "c"], {"a", "b", "c"}, 3) == 1.0

    def test_alternating(self):
        #  [R, I, R, I, I] -> 2/5
        assert precision_at_k(["r1", "i1", "r2", "i2", "i3"], {"r1", "r2"}, 5) == 0.4

    def test_empty_relevant(self):
        assert precision_at_k(["a", "b"], frozenset(), 2) == 0.0

    def test_short_ranking_keeps_denominator(self):
        assert precision_at_k(["a"], {"a"}, 4) == 0.25

    def test_k_validation(self):
        with pytest.raises(ValueError, match="k must be"):
            precision_at_k(["a"], {"a"}, 0)

    def test_matches_bruteforce(self):
        for seed in range(100):
            rankings, relevant = random_instance(seed)
            for q, ranking in rankings.items():
                for k in (1, 2, 3, 5, 10):
                    got = precision_at_k(ranking, relevant[q], k)
                    want = precision_at_k_brute(ranking, relevant[q], k)
                    assert got == want

    def test_cumulative_hits_non_decreasing(self):
        for seed in range(30):
            rankings, relevant = random_instance(seed)
            for q, ranking in rankings.items():
                counts = [precision_at_k(ranking, relevant[q], k) * k for k in range(1, 12)]
                assert all(b >= a - 1e-12 for a, b in zip(counts, counts[1:]))


class TestRecallAtK:
    def test_perfect_top_one(self):
        rankings = {"q0": ["a", "b"], "q1": ["b", "a"]}
        relevant = {"q0": {"a"}, "q1": {"b"}}
        assert recall_at_k(rankings, relevant, 1) == 1.0

    def test_half_hit(self):
        rankings = {
            "q0": ["a", "b"],
            "q1": ["a", "b"],
            "q2": ["b", "a"],
            "q3": ["b", "a"],
        }
        relevant = {"q0": {"a"}, "q1": {"a"}, "q2": {"a"}, "q3": {"a"}}
        assert recall_at_k(rankings, relevant, 1) == 0.5

    def test_empty_relevant_excluded(self):
        rankings = {"q0": ["a"], "q1": ["b"]}
        relevant = {"q0": {"a"}, "q1": frozenset()}
        assert recall_at_k(rankings, relevant, 1) == 1.0

    def test_all_excluded(self):
        with pytest.raises(ValueError, match="empty relevant set"):
            recall_at_k({"q0": ["a"]}, {"q0": frozenset()}, 1)

    def test_saturation_at_full_database(self):
        # k covering the whole ranking: every eligible query whose
        # ranking contains any relevant image scores a hit
        for seed in range(20):
            rankings, _ = random_instance(seed)
            full = {q: list(r) for q, r in rankings.items()}
            relevant = {q: frozenset(r[:1]) for q, r in full.items()}
            assert recall_at_k(full, relevant, 50) == 1.0

    def test_non_decreasing_in_k(self):
        for seed in range(30):
            rankings, relevant = random_instance(seed)
            vals = [recall_at_k(rankings, relevant, k) for k in range(1, 15)]
            assert all(b >= a for a, b in zip(vals, vals[1:]))

    def test_matches_bruteforce(self):
        for seed in range(100):
            rankings, relevant = random_instance(seed)
            for k in (1, 2, 4, 8):
                assert recall_at_k(rankings, relevant, k) == recall_at_k_brute(rankings, relevant, k)

    def test_k_validation(self):
        with pytest.raises(ValueError, match="k must be"):
            recall_at_k({"q": ["a"]}, {"q": {"a"}}, 0)


class TestAveragePrecision:
    def test_perfect_prefix(self):
        assert average_precision(["a", "b", "c"], {"a", "b", "c"}) == 1.0

    def test_single_hit_at_rank_two(self):
        assert average_precision(["x", "a"], {"a"}) == 0.5

    def test_unreached_relevant_counts_as_miss(self):
        # one of two relevant images never appears in the ranking
        assert average_precision(["a"], {"a", "zzz"}) == 0.5

    def test_empty_relevant(self):
        with pytest.raises(ValueError, match="empty relevant set"):
            average_precision(["a"], frozenset())

    def test_matches_bruteforce(self):
        for seed in range(100):
            rankings, relevant = random_instance(seed)
            for q, ranking in rankings.items():
                got = average_precision(ranking, relevant[q])
                want = average_precision_brute(ranking, relevant[q])
                assert got == pytest.approx(want, abs=1e-12)


class TestMeanAveragePrecision:
    def test_mean_over_queries(self):
        rankings = {"q0": ["a"], "q1": ["x", "a"]}
        relevant = {"q0": {"a"}, "q1": {"a"}}
        assert mean_average_precision(rankings, relevant) == 0.75

    def test_empty_relevant_skipped_with_warning(self):
        rankings = {"q0": ["a"], "q1": ["b"]}
        relevant = {"q0": {"a"}, "q1": frozenset()}
        with pytest.warns(UserWarning, match="skipped 1"):
            got = mean_average_precision(rankings, relevant)
        assert got == 1.0

    def test_all_empty(self):
        with pytest.warns(UserWarning, match="skipped"):
            with pytest.raises(ValueError, match="empty relevant set"):
                mean_average_precision({"q0": ["a"]}, {"q0": frozenset()})

    def test_matches_bruteforce(self):
        for seed in range(100):
            rankings, relevant = random_instance(seed)
            got = mean_average_precision(rankings, relevant)
            want = mean_average_precision_brute(rankings, relevant)
            assert got == pytest.approx(want, abs=1e-12)


class TestMetricSeries:
    def test_on_grid_orders_values(self):
        s = MetricSeries("P@k", {1: 0.5, 5: 0.7, 10: 0.9})
        assert s.on_grid([10, 1]) == [0.9, 0.5]

    def test_missing_k_raises(self):
        s = MetricSeries("P@k", {1: 0.5})
        with pytest.raises(KeyError):
            s.on_grid([2])
