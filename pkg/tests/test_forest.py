import numpy as np
import pytest

from jitrisk.dataset import METRIC_COUNT, ValidationError
from jitrisk.features import Vocabulary
from jitrisk.forest import (
    ForestModel,
    Tree,
    classify,
    fit_forest,
    fit_tree,
    load_model,
    predict_proba,
    predict_proba_batch,
    save_model,
)
from conftest import make_matrix


def leaf_tree(clean: int, defective: int) -> Tree:
    return Tree(
        feature=np.array([-1]),
        threshold=np.array([0.0]),
        left=np.array([-1]),
        right=np.array([-1]),
        count_clean=np.array([clean]),
        count_defective=np.array([defective]),
    )


def leaf_model(*fractions: tuple[int, int]) -> ForestModel:
    vocab = Vocabulary({})
    return ForestModel(
        trees=[leaf_tree(c, d) for c, d in fractions],
        vocabulary=vocab,
        feature_count=METRIC_COUNT,
        seed=0,
    )


class TestFitTree:
    def test_single_class_gives_single_leaf(self, rng):
        tree = fit_tree(np.array([[0.0], [1.0], [2.0]]), [True, True, True], rng)
        assert tree.n_nodes == 1
        assert tree.root.is_leaf
        assert tree.root.class_counts == (0, 3)

    def test_one_dimensional_split_at_midpoint(self, rng):
        # hand Gini: parent = 0.5, both children pure, gain = 0.5
        tree = fit_tree(np.array([[0.0], [1.0]]), [False, True], rng)
        assert tree.root.feature_index == 0
        assert tree.root.threshold == 0.5
        assert tree.root.left.is_leaf and tree.root.left.class_counts == (1, 0)
        assert tree.root.right.is_leaf and tree.root.right.class_counts == (0, 1)

    def test_constant_features_mixed_labels_single_leaf(self, rng):
        X = np.array([[3.0, 3.0]] * 4)
        tree = fit_tree(X, [True, False, True, False], rng)
        assert tree.n_nodes == 1
        assert tree.root.class_counts == (2, 2)

    def test_duplicated_rows_leave_structure_unchanged(self):
        X = np.array([[0.0, 1.0], [1.0, 0.0], [2.0, 2.0], [3.0, 1.0]])
        y = [False, True, False, True]
        t1 = fit_tree(X, y, np.random.default_rng(0))
        t2 = fit_tree(np.vstack([X, X]), y * 2, np.random.default_rng(0))
        assert np.array_equal(t1.feature, t2.feature)
        assert np.array_equal(t1.threshold, t2.threshold)

    def test_all_zero_column_never_split(self, rng):
        X = np.zeros((20, 3))
        X[:, 1] = np.arange(20.0)
        y = [v >= 10 for v in range(20)]
        tree = fit_tree(X, y, rng)
        used = set(tree.feature.tolist()) - {-1}
        assert 0 not in used and 2 not in used


def planted_matrix(n=80, seed=0):
    """Linearly separable: defective rows carry token 0, clean token 1."""
    rng = np.random.default_rng(seed)
    rows, labels = [], []
    for _ in range(n):
        defective = bool(rng.random() < 0.5)
        rows.append({0 if defective else 1: float(rng.integers(1, 5))})
        labels.append(defective)
    labels[0], labels[1] = True, False  # both classes guaranteed
    rows[0], rows[1] = {0: 1.0}, {1: 1.0}
    return make_matrix(rows, labels, vocab_size=2)


class TestFitForest:
    def test_planted_separable_training_accuracy(self):
        fm, y = planted_matrix()
        model = fit_forest(fm, y, n_trees=20, seed=1)
        proba = predict_proba_batch(model, fm)
        assert np.array_equal(proba >= 0.5, y)
        # single-tree oracle over all features agrees on the same data
        tree_model = fit_forest(fm, y, n_trees=1, seed=1, max_features=fm.feature_count)
        tree_proba = predict_proba_batch(tree_model, fm)
        assert np.array_equal(tree_proba >= 0.5, y)

    def test_single_tree_equals_fit_tree_on_one_bootstrap(self):
        fm, y = planted_matrix(seed=2)
        model = fit_forest(fm, y, n_trees=1, seed=9)
        # replay the per-tree recipe: rng = default_rng(seed ^ 0), bootstrap,
        # then grow with the same generator
        rng = np.random.default_rng(9 ^ 0)
        idx = rng.integers(0, fm.n_rows, size=fm.n_rows)
        X = fm.combined()
        tree = fit_tree(X[idx], np.asarray(y)[idx], rng)
        assert np.array_equal(model.trees[0].feature, tree.feature)
        assert np.array_equal(model.trees[0].threshold, tree.threshold)

    def test_same_seed_identical_predictions(self):
        fm, y = planted_matrix(seed=3)
        probe, _ = planted_matrix(seed=4)
        p1 = predict_proba_batch(fit_forest(fm, y, n_trees=8, seed=5), probe)
        p2 = predict_proba_batch(fit_forest(fm, y, n_trees=8, seed=5), probe)
        assert np.array_equal(p1, p2)

    def test_threads_do_not_change_the_model(self):
        fm, y = planted_matrix(seed=6)
        a = fit_forest(fm, y, n_trees=8, seed=5, threads=1)
        b = fit_forest(fm, y, n_trees=8, seed=5, threads=4)
        for ta, tb in zip(a.trees, b.trees):
            assert np.array_equal(ta.feature, tb.feature)
            assert np.array_equal(ta.threshold, tb.threshold)

    def test_single_class_rejected(self):
        fm, _ = planted_matrix()
        with pytest.raises(ValidationError, match="single class"):
            fit_forest(fm, [True] * fm.n_rows, n_trees=2, seed=0)


class TestPredict:
    def test_all_trees_pure_defective(self):
        model = leaf_model((0, 3), (0, 1))
        assert predict_proba(model, np.zeros(METRIC_COUNT)) == 1.0

    def test_all_trees_pure_clean(self):
        model = leaf_model((2, 0), (5, 0))
        assert predict_proba(model, np.zeros(METRIC_COUNT)) == 0.0

    def test_mean_of_leaf_fractions(self):
        model = leaf_model((3, 1), (1, 3))  # 0.25 and 0.75
        assert predict_proba(model, np.zeros(METRIC_COUNT)) == 0.5

    def test_probability_within_leaf_fraction_range(self):
        model = leaf_model((4, 1), (1, 4), (1, 1))  # 0.2, 0.8, 0.5
        p = predict_proba(model, np.zeros(METRIC_COUNT))
        assert 0.2 <= p <= 0.8

    def test_tree_order_invariance(self):
        a = leaf_model((3, 1), (1, 3), (1, 1))
        b = leaf_model((1, 1), (1, 3), (3, 1))
        row = np.zeros(METRIC_COUNT)
        assert predict_proba(a, row) == pytest.approx(predict_proba(b, row), abs=1e-15)

    def test_dimension_mismatch(self):
        model = leaf_model((1, 1))
        with pytest.raises(ValidationError, match="dimension"):
            predict_proba(model, np.zeros(METRIC_COUNT + 1))

    def test_classify_boundary_convention(self):
        model = leaf_model((1, 1))  # probability 0.5 everywhere
        row = np.zeros(METRIC_COUNT)
        assert classify(model, row, threshold=0.5) is True
        assert classify(model, row, threshold=0.51) is False
        assert classify(model, row, threshold=0.0) is True

    def test_classify_049(self):
        model = leaf_model((51, 49))
        assert classify(model, np.zeros(METRIC_COUNT)) is False


class TestPersistence:
    def test_round_trip(self, tmp_path):
        fm, y = planted_matrix(seed=8)
        model = fit_forest(fm, y, n_trees=5, seed=2)
        path = tmp_path / "model.json"
        save_model(model, path)
        loaded = load_model(path)
        assert loaded.feature_count == model.feature_count
        assert loaded.seed == model.seed
        probe = fm.combined()
        assert np.array_equal(
            predict_proba_batch(model, probe), predict_proba_batch(loaded, probe)
        )
        for ta, tb in zip(model.trees, loaded.trees):
            assert np.array_equal(ta.threshold, tb.threshold)

    def test_magic_checked(self, tmp_path):
        path = tmp_path / "bogus.json"
        path.write_text('{"magic": "something-else"}')
        with pytest.raises(ValidationError, match="not a jitrisk"):
            load_model(path)

    def test_version_checked(self, tmp_path):
        path = tmp_path / "old.json"
        path.write_text('{"magic": "jitrisk-forest", "format_version": 99}')
        with pytest.raises(ValidationError, match="version"):
            load_model(path)


class TestTreeValidation:
    def test_out_of_range_child_rejected(self, tmp_path):
        import json

        from jitrisk.features import Vocabulary

        tree = leaf_tree(1, 1)
        model = ForestModel([tree], Vocabulary({}), METRIC_COUNT, seed=0)
        path = tmp_path / "m.json"
        save_model(model, path)
        doc = json.loads(path.read_text())
        doc["trees"][0]["feature"] = [3]  # internal node, children still -1
        path.write_text(json.dumps(doc))
        with pytest.raises(ValidationError, match="child index"):
            load_model(path)

    def test_unequal_arrays_rejected(self, tmp_path):
        import json

        from jitrisk.features import Vocabulary

        model = ForestModel([leaf_tree(1, 1)], Vocabulary({}), METRIC_COUNT, seed=0)
        path = tmp_path / "m.json"
        save_model(model, path)
        doc = json.loads(path.read_text())
        doc["trees"][0]["threshold"] = [0.0, 0.0]
        path.write_text(json.dumps(doc))
        with pytest.raises(ValidationError, match="unequal"):
            load_model(path)
