"""Tests for the bagged-tree classifier, proximities, and importance."""

from __future__ import annotations

import numpy as np
import pytest

from hydrofeat import _forest_fast
from hydrofeat.errors import (
    DegenerateLabelsError,
    EmptyMatrixError,
    MatrixError,
    SchemaMismatchError,
)
from hydrofeat.forest import (
    Forest,
    Tree,
    fit_classifier,
    gini_importance,
    load_forest,
    oob_accuracy,
    predict,
    proximity,
    save_forest,
    synthetic_contrast,
    vote_fractions,
)


def xor_data(seed: int, n: int = 400, sigma: float = 0.1):
    """Four tight clusters at the unit-square corners, XOR-labeled."""
    rng = np.random.default_rng(seed)
    centers = np.array([[0, 0], [1, 1], [0, 1], [1, 0]], float)
    labels = np.array([0, 0, 1, 1])
    which = rng.integers(0, 4, n)
    return centers[which] + sigma * rng.standard_normal((n, 2)), labels[which]


def blob_data(seed: int, n: int = 200):
    """Two well-separated Gaussian blobs."""
    rng = np.random.default_rng(seed)
    half = n // 2
    a = rng.standard_normal((half, 2)) * 0.5
    b = rng.standard_normal((n - half, 2)) * 0.5 + 5.0
    X = np.vstack([a, b])
    y = np.concatenate([np.zeros(half, int), np.ones(n - half, int)])
    return X, y


def trees_equal(f: Forest, g: Forest) -> bool:
    if f.n_trees != g.n_trees:
        return False
    return all(
        np.array_equal(a.feature, b.feature)
        and np.array_equal(a.threshold, b.threshold)
        and np.array_equal(a.left, b.left)
        and np.array_equal(a.right, b.right)
        and np.array_equal(a.counts, b.counts)
        for a, b in zip(f.trees, g.trees)
    )


class TestFit:
    def test_training_accuracy_on_separable_blobs(self):
        X, y = blob_data(0)
        f = fit_classifier(X, y, n_trees=50, seed=1)
        assert np.mean(predict(f, X) == y) == 1.0

    def test_xor_oob_accuracy(self):
        X, y = xor_data(1)
        f = fit_classifier(X, y, n_trees=200, seed=2)
        assert oob_accuracy(f) >= 0.95

    def test_same_seed_identical_forests(self):
        X, y = xor_data(2)
        probe = np.random.default_rng(3).uniform(-0.2, 1.2, size=(50, 2))
        f = fit_classifier(X, y, n_trees=40, seed=11)
        g = fit_classifier(X, y, n_trees=40, seed=11)
        assert trees_equal(f, g)
        assert np.array_equal(predict(f, probe), predict(g, probe))

    def test_different_seeds_differ(self):
        X, y = xor_data(3)
        f = fit_classifier(X, y, n_trees=10, seed=1)
        g = fit_classifier(X, y, n_trees=10, seed=2)
        assert not trees_equal(f, g)

    def test_thread_count_does_not_change_fit(self):
        X, y = xor_data(4, n=200)
        f1 = fit_classifier(X, y, n_trees=30, seed=5, parallelism=1)
        f8 = fit_classifier(X, y, n_trees=30, seed=5, parallelism=8)
        assert trees_equal(f1, f8)
        assert np.array_equal(f1.oob_votes, f8.oob_votes)
        assert np.array_equal(f1.importance, f8.importance)

    def test_min_node_size_respected(self):
        X, y = xor_data(5, sigma=0.4)
        f = fit_classifier(X, y, n_trees=20, seed=6, min_node_size=5)
        for tree in f.trees:
            leaves = tree.feature == -1
            assert (tree.counts[leaves].sum(axis=1) >= 5).all()

    def test_string_labels_round_trip(self):
        X, y = blob_data(6)
        names = np.where(y == 0, "cold", "warm")
        f = fit_classifier(X, names, n_trees=25, seed=7)
        got = predict(f, X)
        assert set(got.tolist()) <= {"cold", "warm"}
        assert np.mean(got == names) == 1.0

    def test_degenerate_labels_rejected(self):
        X, _ = blob_data(7)
        with pytest.raises(DegenerateLabelsError):
            fit_classifier(X, np.zeros(len(X), int), n_trees=5, seed=1)

    def test_bad_inputs_rejected(self):
        X, y = blob_data(8)
        with pytest.raises(EmptyMatrixError):
            fit_classifier(np.empty((0, 2)), np.empty(0, int), n_trees=5, seed=1)
        bad = X.copy()
        bad[0, 0] = np.nan
        with pytest.raises(MatrixError):
            fit_classifier(bad, y, n_trees=5, seed=1)
        with pytest.raises(MatrixError):
            fit_classifier(X, y, n_trees=5, mtry=3, seed=1)  # mtry > p
        with pytest.raises(MatrixError):
            fit_classifier(X, y, n_trees=5, seed=-1)
        with pytest.raises(MatrixError):
            fit_classifier(X, y[:-1], n_trees=5, seed=1)


class TestPredict:
    def test_blob_centers(self):
        X, y = blob_data(9)
        f = fit_classifier(X, y, n_trees=50, seed=3)
        got = predict(f, np.array([[0.0, 0.0], [5.0, 5.0]]))
        assert got.tolist() == [0, 1]

    def test_single_tree_forest_equals_leaf_vote(self):
        X, y = xor_data(10, n=100)
        f = fit_classifier(X, y, n_trees=1, seed=4)
        tree = f.trees[0]
        lids = _forest_fast.leaf_ids(
            X, tree.feature, tree.threshold, tree.left, tree.right
        )
        expected = np.asarray(f.classes)[tree.vote[lids]]
        assert np.array_equal(predict(f, X), expected)

    def test_vote_fractions_sum_to_one(self):
        X, y = xor_data(11, n=150)
        f = fit_classifier(X, y, n_trees=33, seed=5)
        vf = vote_fractions(f, X)
        np.testing.assert_allclose(vf.sum(axis=1), 1.0, atol=1e-12)
        assert ((vf >= 0) & (vf <= 1)).all()

    def test_tie_broken_by_lowest_class(self):
        leaf0 = Tree(
            feature=np.array([-1]),
            threshold=np.array([0.0]),
            left=np.array([-1]),
            right=np.array([-1]),
            counts=np.array([[3, 0]]),
        )
        leaf1 = Tree(
            feature=np.array([-1]),
            threshold=np.array([0.0]),
            left=np.array([-1]),
            right=np.array([-1]),
            counts=np.array([[0, 3]]),
        )
        f = Forest(
            trees=(leaf0, leaf1),
            classes=("a", "b"),
            n_features=2,
            mtry=1,
            seed=0,
            min_node_size=1,
        )
        assert predict(f, np.zeros((1, 2)))[0] == "a"

    def test_prediction_invariant_to_tree_order(self):
        X, y = xor_data(12, n=120)
        f = fit_classifier(X, y, n_trees=21, seed=6)
        reversed_forest = Forest(
            trees=tuple(reversed(f.trees)),
            classes=f.classes,
            n_features=f.n_features,
            mtry=f.mtry,
            seed=f.seed,
            min_node_size=f.min_node_size,
        )
        probe = np.random.default_rng(7).uniform(-0.2, 1.2, (40, 2))
        assert np.array_equal(predict(f, probe), predict(reversed_forest, probe))

    def test_schema_mismatch(self):
        X, y = blob_data(13)
        f = fit_classifier(X, y, n_trees=5, seed=1)
        with pytest.raises(SchemaMismatchError):
            predict(f, np.zeros((2, 3)))


class TestProximity:
    def test_diagonal_and_symmetry_exact(self):
        X, y = xor_data(14, n=80)
        f = fit_classifier(X, y, n_trees=37, seed=8)
        pm = proximity(f, X)
        assert np.all(pm.values.diagonal() == 1.0)
        assert np.array_equal(pm.values, pm.values.T)
        assert pm.values.min() >= 0.0 and pm.values.max() <= 1.0

    def test_duplicated_rows_have_unit_proximity(self):
        X, y = blob_data(15)
        X2 = np.vstack([X, X[:1]])  # row n duplicates row 0
        f = fit_classifier(X, y, n_trees=20, seed=9)
        pm = proximity(f, X2)
        assert pm.values[0, -1] == 1.0

    def test_blobs_within_exceeds_between(self):
        X, y = blob_data(16)
        f = fit_classifier(X, y, n_trees=50, seed=10)
        pm = proximity(f, X)
        within = (pm.values[:100, :100].mean() + pm.values[100:, 100:].mean()) / 2
        between = pm.values[:100, 100:].mean()
        assert within >= 2 * between

    def test_dissimilarity_complement(self):
        X, y = blob_data(17)
        f = fit_classifier(X, y, n_trees=10, seed=11)
        pm = proximity(f, X)
        np.testing.assert_array_equal(pm.dissimilarity(), 1.0 - pm.values)


class TestImportance:
    def test_informative_feature_ranked_first(self):
        rng = np.random.default_rng(18)
        X = rng.standard_normal((300, 10))
        y = (X[:, 7] > 0).astype(int)
        f = fit_classifier(X, y, n_trees=100, seed=12)
        imp = gini_importance(f)
        assert int(np.argmax(imp)) == 7

    def test_constant_feature_never_split_importance_zero(self):
        rng = np.random.default_rng(19)
        X = rng.standard_normal((200, 4))
        X[:, 2] = 1.0  # constant: no valid threshold exists
        y = (X[:, 0] > 0).astype(int)
        f = fit_classifier(X, y, n_trees=60, seed=13)
        imp = gini_importance(f)
        assert imp[2] == 0.0

    def test_scores_nonnegative_finite(self):
        X, y = xor_data(20, n=150)
        f = fit_classifier(X, y, n_trees=40, seed=14)
        imp = gini_importance(f)
        assert np.isfinite(imp).all()
        assert (imp >= 0).all()


class TestSyntheticContrast:
    def test_shape_and_balance(self):
        rng = np.random.default_rng(21)
        X = rng.standard_normal((50, 4))
        Xd, yd = synthetic_contrast(X, seed=1)
        assert Xd.shape == (100, 4)
        assert (yd[:50] == 1).all() and (yd[50:] == 2).all()

    def test_real_rows_unchanged_and_marginals_subset(self):
        rng = np.random.default_rng(22)
        X = rng.standard_normal((40, 3))
        Xd, _ = synthetic_contrast(X, seed=2)
        assert np.array_equal(Xd[:40], X)
        for j in range(3):
            assert set(Xd[40:, j]) <= set(X[:, j])

    def test_deterministic(self):
        rng = np.random.default_rng(23)
        X = rng.standard_normal((30, 2))
        a, _ = synthetic_contrast(X, seed=3)
        b, _ = synthetic_contrast(X, seed=3)
        assert np.array_equal(a, b)

    def test_correlated_features_separable(self):
        rng = np.random.default_rng(24)
        base = rng.standard_normal((200, 1))
        X = np.hstack([base + 0.05 * rng.standard_normal((200, 1)) for _ in range(5)])
        Xd, yd = synthetic_contrast(X, seed=4)
        f = fit_classifier(Xd, yd, n_trees=150, seed=15)
        assert oob_accuracy(f) >= 0.8

    def test_empty_rejected(self):
        with pytest.raises(EmptyMatrixError):
            synthetic_contrast(np.empty((0, 3)), seed=1)


class TestMonotoneInvariance:
    def test_tree_structure_survives_monotone_column_transforms(self):
        # Split choices depend only on the order statistics of the in-bag
        # sample, so strictly increasing per-column transforms leave every
        # tree's topology, split features, and in-bag partition identical.
        # Thresholds (midpoints between adjacent values) do move, which can
        # reroute rows that fall inside an in-bag gap of a tree they are
        # out-of-bag for — so full-matrix proximities are only approximately
        # preserved, while structure and training predictions are exact.
        X, y = xor_data(25, n=150)
        transformed = X.copy()
        transformed[:, 0] = np.exp(transformed[:, 0])  # strictly increasing
        transformed[:, 1] = transformed[:, 1] ** 3  # strictly increasing
        f = fit_classifier(X, y, n_trees=40, seed=16)
        g = fit_classifier(transformed, y, n_trees=40, seed=16)
        assert all(
            np.array_equal(a.feature, b.feature)
            and np.array_equal(a.left, b.left)
            and np.array_equal(a.right, b.right)
            and np.array_equal(a.counts, b.counts)
            for a, b in zip(f.trees, g.trees)
        )
        assert np.array_equal(predict(f, X), predict(g, transformed))

    def test_in_bag_routing_identical_under_transform(self):
        X, y = xor_data(27, n=100)
        transformed = X.copy()
        transformed[:, 1] = np.expm1(transformed[:, 1])
        f = fit_classifier(X, y, n_trees=10, seed=18)
        g = fit_classifier(transformed, y, n_trees=10, seed=18)
        for t, (tf, tg) in enumerate(zip(f.trees, g.trees)):
            boot = np.random.default_rng(
                np.random.SeedSequence([18, t])
            ).integers(0, 100, 100)
            lf = _forest_fast.leaf_ids(
                X[boot], tf.feature, tf.threshold, tf.left, tf.right
            )
            lg = _forest_fast.leaf_ids(
                transformed[boot], tg.feature, tg.threshold, tg.left, tg.right
            )
            assert np.array_equal(lf, lg)


class TestSerialization:
    def test_round_trip(self, tmp_path):
        X, y = xor_data(26, n=120)
        f = fit_classifier(X, y, n_trees=15, seed=17)
        path = tmp_path / "forest.json"
        save_forest(f, path)
        g = load_forest(path)
        assert trees_equal(f, g)
        assert g.classes == f.classes
        assert np.array_equal(predict(f, X), predict(g, X))
        assert np.array_equal(g.importance, f.importance)
        assert oob_accuracy(g) == oob_accuracy(f)

    def test_version_mismatch_rejected(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text('{"format_version": 999, "trees": []}\n')
        with pytest.raises(SchemaMismatchError):
            load_forest(path)

    def test_forest_without_oob_record(self):
        leaf = Tree(
            feature=np.array([-1]),
            threshold=np.array([0.0]),
            left=np.array([-1]),
            right=np.array([-1]),
            counts=np.array([[1, 1]]),
        )
        bare = Forest(
            trees=(leaf,),
            classes=(0, 1),
            n_features=1,
            mtry=1,
            seed=0,
            min_node_size=1,
        )
        with pytest.raises(MatrixError):
            oob_accuracy(bare)
        with pytest.raises(MatrixError):
            gini_importance(bare)
