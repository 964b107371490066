import numpy as np
import pytest

from jitrisk.dataset import ValidationError
from jitrisk.rebalance import (
    DEConfig,
    SmoteConfig,
    _validation_fitness,
    de_optimize,
    minkowski_distance,
    smote_oversample,
    tune_and_rebalance,
)
from conftest import make_matrix


class TestMinkowski:
    def test_zero_for_equal(self):
        assert minkowski_distance([1, 2, 3], [1, 2, 3]) == 0.0

    def test_euclidean(self):
        assert minkowski_distance([0, 0], [3, 4], r=2) == pytest.approx(5.0)

    def test_manhattan(self):
        assert minkowski_distance([0, 0], [3, 4], r=1) == pytest.approx(7.0)

    def test_dimension_mismatch(self):
        with pytest.raises(ValidationError):
            minkowski_distance([1], [1, 2])


def two_minority_three_majority():
    # minority rows at (0,0) and (0,2) in a 2-column token space
    rows = [{1: 2.0}, {}, {0: 1.0}, {0: 3.0}, {0: 5.0}]
    labels = [True, True, False, False, False]
    return make_matrix(rows, labels, vocab_size=2)


class TestSmote:
    def test_interpolation_matches_replayed_rng(self):
        # minority points (0,0) and (0,2); k=1 so each one's neighbor is
        # the other; replay the documented draw order to derive the gap
        fm, y = two_minority_three_majority()
        cfg = SmoteConfig(k_neighbors=1)
        out, y2 = smote_oversample(fm, y, cfg, seed=99)

        rng = np.random.default_rng(99)
        base = int(rng.integers(0, 2, size=1)[0])
        _slot = rng.integers(0, 1, size=1)
        gap = float(rng.random(1)[0])
        minority_y = [2.0, 0.0]  # row order in the fixture
        base_y = minority_y[base]
        other_y = minority_y[1 - base]
        expected_y = base_y + gap * (other_y - base_y)

        assert out.n_rows == fm.n_rows + 1
        synth = out.combined()[fm.n_rows].toarray().ravel()
        assert synth[1] == pytest.approx(expected_y)
        assert synth[0] == 0.0
        assert y2[-1]

    def test_already_balanced_unchanged(self):
        fm, y = make_matrix([{0: 1.0}, {0: 2.0}, {1: 1.0}, {1: 2.0}],
                            [True, True, False, False])
        out, y2 = smote_oversample(fm, y, SmoteConfig(), seed=0)
        assert out is fm and np.array_equal(y2, y)

    def test_k_clamped_to_minority_minus_one(self, caplog):
        fm, y = two_minority_three_majority()
        with caplog.at_level("WARNING"):
            out, y2 = smote_oversample(fm, y, SmoteConfig(k_neighbors=5), seed=1)
        assert "clamping" in caplog.text
        assert int(y2.sum()) == 3  # raised to majority count

    def test_minority_of_one_rejected(self):
        fm, y = make_matrix([{0: 1.0}, {1: 1.0}, {1: 2.0}], [True, False, False])
        with pytest.raises(ValidationError, match="minority"):
            smote_oversample(fm, y, SmoteConfig(k_neighbors=1), seed=0)

    def test_counts_balance_within_one(self, rng):
        for trial in range(20):
            n_min = int(rng.integers(2, 8))
            n_maj = int(rng.integers(n_min + 1, 25))
            rows = [{0: float(rng.integers(1, 9))} for _ in range(n_min + n_maj)]
            labels = [True] * n_min + [False] * n_maj
            ratio = float(rng.uniform(0.5, 1.0))
            cfg = SmoteConfig(k_neighbors=min(3, n_min - 1), target_ratio=ratio)
            fm, y = make_matrix(rows, labels)
            _, y2 = smote_oversample(fm, y, cfg, seed=trial)
            n_min2 = int(np.sum(y2))
            n_maj2 = int(np.sum(~np.asarray(y2)))
            if round(ratio * n_maj) > n_min:  # a deficit existed
                assert abs(n_min2 - ratio * n_maj2) <= 1
            else:  # oversampling never removes minority rows
                assert n_min2 == n_min and n_maj2 == n_maj

    def test_betweenness_of_synthetics(self, rng):
        dims = 4
        n_min, n_maj = 5, 17
        rows = [
            {c: float(rng.integers(0, 6)) for c in range(dims) if rng.random() < 0.7}
            for _ in range(n_min + n_maj)
        ]
        labels = [True] * n_min + [False] * n_maj
        fm, y = make_matrix(rows, labels, vocab_size=dims)
        out, y2 = smote_oversample(fm, y, SmoteConfig(k_neighbors=3), seed=5)
        dense = out.combined().toarray()
        minority = dense[:n_min]
        synthetics = dense[fm.n_rows:]
        for s in synthetics:
            between_some_pair = any(
                np.all(s >= np.minimum(a, b) - 1e-12)
                and np.all(s <= np.maximum(a, b) + 1e-12)
                for i, a in enumerate(minority)
                for b in minority[i:]
            )
            assert between_some_pair

    def test_bit_reproducible(self):
        fm, y = two_minority_three_majority()
        a, ya = smote_oversample(fm, y, SmoteConfig(k_neighbors=1), seed=7)
        b, yb = smote_oversample(fm, y, SmoteConfig(k_neighbors=1), seed=7)
        assert np.array_equal(a.combined().toarray(), b.combined().toarray())
        assert np.array_equal(ya, yb)

    def test_majority_undersample_option(self):
        fm, y = two_minority_three_majority()
        cfg = SmoteConfig(k_neighbors=1, majority_fraction=2 / 3)
        out, y2 = smote_oversample(fm, y, cfg, seed=3)
        assert int(np.sum(~y2)) == 2
        assert int(np.sum(y2)) == 2  # oversampled to the reduced majority


class TestDEOptimize:
    def test_finds_quadratic_peak(self):
        # exhaustive scan over the integer domain is the oracle
        oracle_best = max(range(1, 21), key=lambda k: -((k - 7) ** 2))
        result = de_optimize(lambda k: -((k - 7) ** 2), DEConfig(seed=3))
        assert result.best_k == oracle_best == 7

    def test_never_evaluates_out_of_bounds(self):
        seen = []

        def fitness(k):
            seen.append(k)
            return float(k)

        de_optimize(fitness, DEConfig(seed=11))
        assert seen and all(1 <= k <= 20 for k in seen)

    def test_constant_fitness_returns_first_evaluated(self):
        result = de_optimize(lambda k: 1.0, DEConfig(seed=5))
        assert result.best_k == result.trace[0].k
        assert 1 <= result.best_k <= 20

    def test_zero_generations_uses_initial_population(self):
        result = de_optimize(lambda k: float(k), DEConfig(generations=0, seed=2))
        assert all(ev.generation == 0 for ev in result.trace)
        assert len(result.trace) == 10
        assert result.best_k == max(ev.k for ev in result.trace)

    def test_memoizes_integer_candidates(self):
        calls = []

        def fitness(k):
            calls.append(k)
            return 0.0

        de_optimize(fitness, DEConfig(seed=4))
        assert len(calls) == len(set(calls))

    def test_config_validation(self):
        with pytest.raises(ValidationError):
            DEConfig(mutation_factor=2.5)
        with pytest.raises(ValidationError):
            DEConfig(crossover_probability=1.5)


def separable_imbalanced(n=60, seed=0):
    """Minority carries token 0, majority token 1, mild noise in token 2."""
    rng = np.random.default_rng(seed)
    rows, labels = [], []
    for i in range(n):
        defective = rng.random() < 0.2
        row = {2: float(rng.integers(0, 4))}
        if defective:
            row[0] = float(rng.integers(1, 4))
        else:
            row[1] = float(rng.integers(1, 4))
        rows.append(row)
        labels.append(defective)
    if sum(labels) < 4:  # keep the inner split two-class
        for i in range(4):
            rows[i][0] = 1.0
            labels[i] = True
    return make_matrix(rows, labels, vocab_size=3)


class TestTuneAndRebalance:
    def test_chosen_k_close_to_grid_oracle(self):
        fm, y = separable_imbalanced()
        tuned = tune_and_rebalance(fm, y, de=DEConfig(generations=2, seed=1), seed=1,
                                   surrogate_trees=20)
        # grid oracle over the whole integer domain, same fitness
        from jitrisk.dataset import ceil_fraction

        cut = ceil_fraction(len(y), 0.8)
        fitness = _validation_fitness(
            _take(fm, range(cut)), y[:cut], _take(fm, range(cut, len(y))), y[cut:],
            SmoteConfig(), seed=1, surrogate_trees=20, threads=1,
        )
        grid_best = max(fitness(k) for k in range(1, 21))
        assert tuned.report["best_fitness"] >= grid_best - 0.02

    def test_balanced_input_any_k_is_noop(self):
        rows = [{0: 1.0}, {0: 2.0}, {1: 1.0}, {1: 2.0}] * 4
        labels = [True, True, False, False] * 4
        fm, y = make_matrix(rows, labels)
        tuned = tune_and_rebalance(fm, y, de=DEConfig(generations=1, seed=0), seed=0,
                                   surrogate_trees=5)
        assert tuned.matrix.n_rows == fm.n_rows

    def test_deterministic_chosen_k(self):
        fm, y = separable_imbalanced(seed=3)
        kwargs = dict(de=DEConfig(generations=2, seed=9), seed=9, surrogate_trees=10)
        a = tune_and_rebalance(fm, y, **kwargs)
        b = tune_and_rebalance(fm, y, **kwargs)
        assert a.config.k_neighbors == b.config.k_neighbors
        assert a.report == b.report
        assert np.array_equal(a.matrix.combined().toarray(), b.matrix.combined().toarray())

    def test_stratified_fallback_when_validation_single_class(self, caplog):
        # all defective commits early in time: the tail slice is one-class
        rows = [{0: 1.0}] * 6 + [{1: 1.0}] * 14
        labels = [True] * 6 + [False] * 14
        fm, y = make_matrix(rows, labels)
        with caplog.at_level("WARNING"):
            tuned = tune_and_rebalance(fm, y, de=DEConfig(generations=1, seed=0),
                                       seed=0, surrogate_trees=5)
        assert tuned.report["validation_split"] == "stratified"

    def test_single_class_rejected(self):
        fm, y = make_matrix([{0: 1.0}] * 6, [True] * 6)
        with pytest.raises(ValidationError):
            tune_and_rebalance(fm, y, de=DEConfig(seed=0), seed=0)


def _take(fm, idx):
    from jitrisk.rebalance import _take_rows

    return _take_rows(fm, np.asarray(list(idx)))
