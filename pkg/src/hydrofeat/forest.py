"""Bagged classification trees grown from scratch.

Bootstrap-resampled CART trees with per-node feature subsampling, majority
voting, out-of-bag accuracy, co-leaf proximity matrices, node-weighted
impurity importance, and the real-vs-synthetic contrast construction that
turns the ensemble into an unsupervised dissimilarity learner.

Determinism contract: every randomized quantity for tree t is drawn from a
generator seeded by (seed, t), so a fitted forest depends only on the data
and the seed — never on thread count or scheduling.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import _forest_fast as _fast
from .errors import (
    DegenerateLabelsError,
    EmptyMatrixError,
    MatrixError,
    SchemaMismatchError,
)

__all__ = [
    "Tree",
    "Forest",
    "ProximityMatrix",
    "fit_classifier",
    "predict",
    "vote_fractions",
    "proximity",
    "gini_importance",
    "oob_accuracy",
    "synthetic_contrast",
    "save_forest",
    "load_forest",
]

FOREST_FORMAT_VERSION = 1


def _as_values(X) -> tuple[np.ndarray, tuple[str, ...] | None]:
    """Accept a feature matrix (ids/names/values) or a plain 2-d array."""
    names = getattr(X, "names", None)
    values = getattr(X, "values", X)
    values = np.ascontiguousarray(values, dtype=float)
    if values.ndim != 2:
        raise MatrixError(f"expected a 2-d sample matrix, got shape {values.shape}")
    return values, (tuple(names) if names is not None else None)


@dataclass(frozen=True)
class Tree:
    """One grown tree as flat arrays indexed by node id (root = 0).

    `feature[v] == -1` marks a leaf; otherwise rows with
    x[feature[v]] <= threshold[v] go to `left[v]`, the rest to `right[v]`.
    `counts[v]` are the training-sample class counts at v and `vote[v]` is
    the majority class code (lowest code on ties).
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    counts: np.ndarray

    @property
    def vote(self) -> np.ndarray:
        return np.argmax(self.counts, axis=1)

    @property
    def n_nodes(self) -> int:
        return int(self.feature.shape[0])


@dataclass(frozen=True)
class Forest:
    """A fitted ensemble plus its training diagnostics."""

    trees: tuple[Tree, ...]
    classes: tuple
    n_features: int
    mtry: int
    seed: int
    min_node_size: int
    feature_names: tuple[str, ...] | None = None
    importance: np.ndarray | None = None
    oob_votes: np.ndarray | None = None
    y_codes: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    @property
    def n_trees(self) -> int:
        return len(self.trees)

    def __post_init__(self):
        if self.n_trees < 1:
            raise MatrixError("a forest needs at least one tree")
        if len(self.classes) < 2:
            raise DegenerateLabelsError("a forest needs at least two classes")


@dataclass(frozen=True)
class ProximityMatrix:
    """Co-leaf frequencies: values[i, j] = fraction of trees routing rows
    i and j to the same terminal node.  Symmetric with unit diagonal."""

    values: np.ndarray
    n_trees: int

    def __post_init__(self):
        v = self.values
        if v.ndim != 2 or v.shape[0] != v.shape[1]:
            raise MatrixError(f"proximity must be square, got {v.shape}")

    def dissimilarity(self) -> np.ndarray:
        return 1.0 - self.values


def _encode_labels(y) -> tuple[np.ndarray, tuple]:
    y = np.asarray(y)
    classes = np.unique(y)
    if classes.shape[0] < 2:
        raise DegenerateLabelsError(
            f"need at least 2 classes, got {classes.shape[0]}"
        )
    codes = np.searchsorted(classes, y).astype(np.int64)
    return codes, tuple(classes.tolist())


def fit_classifier(
    X,
    y,
    n_trees: int = 5000,
    mtry: int | None = None,
    *,
    seed: int,
    min_node_size: int = 1,
    parallelism: int = 1,
) -> Forest:
    """Fit a bagged ensemble of Gini-impurity CART trees.

    Each tree sees n bootstrap draws (with replacement) of the n training
    rows and considers `mtry` features (default floor(sqrt(p))) at every
    node, grown until leaves are pure or smaller than 2 * min_node_size.
    Out-of-bag votes are accumulated per row for `oob_accuracy`.
    """
    values, names = _as_values(X)
    n, p = values.shape
    if n == 0:
        raise EmptyMatrixError("cannot fit on an empty matrix")
    if not np.isfinite(values).all():
        raise MatrixError("matrix has missing entries; impute before fitting")
    codes, classes = _encode_labels(y)
    if codes.shape[0] != n:
        raise MatrixError(f"{codes.shape[0]} labels for {n} rows")
    if n_trees < 1:
        raise MatrixError("n_trees must be >= 1")
    if min_node_size < 1:
        raise MatrixError("min_node_size must be >= 1")
    if mtry is None:
        mtry = max(1, int(np.sqrt(p)))
    if not 1 <= mtry <= p:
        raise MatrixError(f"mtry must be in [1, {p}], got {mtry}")
    seed = int(seed)
    if seed < 0:
        raise MatrixError("seed must be a nonnegative integer")

    n_classes = len(classes)
    max_nodes = 2 * n + 1

    def grow(t: int):
        rng = np.random.default_rng(np.random.SeedSequence([seed, t]))
        boot = rng.integers(0, n, size=n).astype(np.int64)
        feat_rand = rng.integers(0, 2**31, size=max_nodes * mtry).astype(np.int64)
        feature = np.empty(max_nodes, np.int64)
        threshold = np.empty(max_nodes, np.float64)
        left = np.empty(max_nodes, np.int64)
        right = np.empty(max_nodes, np.int64)
        counts = np.zeros((max_nodes, n_classes), np.int64)
        imp = np.zeros(p, np.float64)
        n_nodes = _fast.grow_tree(
            values,
            codes,
            boot.copy(),
            feat_rand,
            mtry,
            min_node_size,
            n_classes,
            feature,
            threshold,
            left,
            right,
            counts,
            imp,
        )
        tree = Tree(
            feature=feature[:n_nodes].copy(),
            threshold=threshold[:n_nodes].copy(),
            left=left[:n_nodes].copy(),
            right=right[:n_nodes].copy(),
            counts=counts[:n_nodes].copy(),
        )
        inbag = np.zeros(n, dtype=bool)
        inbag[boot] = True
        oob_rows = np.nonzero(~inbag)[0]
        return tree, imp, oob_rows

    workers = max(1, int(parallelism))
    if workers == 1:
        grown = [grow(t) for t in range(n_trees)]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            grown = list(pool.map(grow, range(n_trees)))

    trees = tuple(g[0] for g in grown)
    importance = np.zeros(p)
    oob_votes = np.zeros((n, n_classes), np.int64)
    for tree, imp, oob_rows in grown:
        importance += imp
        if oob_rows.shape[0]:
            lids = _fast.leaf_ids(
                values[oob_rows], tree.feature, tree.threshold, tree.left, tree.right
            )
            np.add.at(oob_votes, (oob_rows, tree.vote[lids]), 1)
    importance /= n_trees

    return Forest(
        trees=trees,
        classes=classes,
        n_features=p,
        mtry=int(mtry),
        seed=seed,
        min_node_size=int(min_node_size),
        feature_names=names,
        importance=importance,
        oob_votes=oob_votes,
        y_codes=codes,
    )


def _check_schema(forest: Forest, values: np.ndarray, names) -> None:
    if values.shape[1] != forest.n_features:
        raise SchemaMismatchError(
            f"forest was trained on {forest.n_features} features, "
            f"got {values.shape[1]}"
        )
    if (
        names is not None
        and forest.feature_names is not None
        and names != forest.feature_names
    ):
        raise SchemaMismatchError("feature names differ from the training schema")


def _vote_counts(forest: Forest, values: np.ndarray) -> np.ndarray:
    n = values.shape[0]
    tally = np.zeros((n, len(forest.classes)), np.int64)
    rows = np.arange(n)
    for tree in forest.trees:
        lids = _fast.leaf_ids(
            values, tree.feature, tree.threshold, tree.left, tree.right
        )
        np.add.at(tally, (rows, tree.vote[lids]), 1)
    return tally


def predict(forest: Forest, X) -> np.ndarray:
    """Majority-vote class labels; ties go to the lowest class index."""
    values, names = _as_values(X)
    _check_schema(forest, values, names)
    tally = _vote_counts(forest, values)
    return np.asarray(forest.classes)[np.argmax(tally, axis=1)]


def vote_fractions(forest: Forest, X) -> np.ndarray:
    """Per-class fractions of trees voting each class; rows sum to 1."""
    values, names = _as_values(X)
    _check_schema(forest, values, names)
    return _vote_counts(forest, values) / forest.n_trees


def proximity(forest: Forest, X) -> ProximityMatrix:
    """Fraction of trees that route each pair of rows to the same leaf.

    Integer pair counts are accumulated per tree and merged in tree order,
    so the result is exactly reproducible regardless of how the forest was
    grown or how many threads were used.
    """
    values, names = _as_values(X)
    _check_schema(forest, values, names)
    n = values.shape[0]
    counts = np.zeros((n, n), np.int64)
    for tree in forest.trees:
        lids = _fast.leaf_ids(
            values, tree.feature, tree.threshold, tree.left, tree.right
        )
        _fast.prox_accumulate(lids, counts)
    return ProximityMatrix(values=counts / forest.n_trees, n_trees=forest.n_trees)


def gini_importance(forest: Forest) -> np.ndarray:
    """Node-weighted Gini impurity decrease per feature, averaged over
    trees; nonnegative, zero for features never split on."""
    if forest.importance is None:
        raise MatrixError("forest carries no importance record")
    return forest.importance


def oob_accuracy(forest: Forest) -> float:
    """Accuracy of out-of-bag majority votes against the training labels,
    over the rows that received at least one out-of-bag vote."""
    if forest.oob_votes is None or forest.y_codes is None:
        raise MatrixError("forest carries no out-of-bag record")
    voted = forest.oob_votes.sum(axis=1) > 0
    if not voted.any():
        raise MatrixError("no row was ever out of bag; grow more trees")
    pred = np.argmax(forest.oob_votes[voted], axis=1)
    return float(np.mean(pred == forest.y_codes[voted]))


def synthetic_contrast(X, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Double a dataset with marginal-resampled synthetic rows.

    Class 1 = the real rows; class 2 = an equal number of synthetic rows
    whose every column is sampled independently (with replacement) from
    that column's observed values, which preserves all marginals but
    destroys the dependence between columns.
    """
    values, _ = _as_values(X)
    n, p = values.shape
    if n == 0:
        raise EmptyMatrixError("cannot build a contrast for an empty matrix")
    rng = np.random.default_rng(int(seed))
    synthetic = np.empty_like(values)
    for j in range(p):
        synthetic[:, j] = values[rng.integers(0, n, size=n), j]
    doubled = np.vstack([values, synthetic])
    labels = np.concatenate([np.ones(n, np.int64), np.full(n, 2, np.int64)])
    return doubled, labels


def save_forest(forest: Forest, path) -> None:
    """Serialize to a versioned JSON container (exact float round-trip)."""
    payload = {
        "format_version": FOREST_FORMAT_VERSION,
        "classes": list(forest.classes),
        "n_features": forest.n_features,
        "mtry": forest.mtry,
        "seed": forest.seed,
        "min_node_size": forest.min_node_size,
        "feature_names": (
            list(forest.feature_names) if forest.feature_names is not None else None
        ),
        "importance": (
            forest.importance.tolist() if forest.importance is not None else None
        ),
        "oob_votes": (
            forest.oob_votes.tolist() if forest.oob_votes is not None else None
        ),
        "y_codes": forest.y_codes.tolist() if forest.y_codes is not None else None,
        "trees": [
            {
                "feature": t.feature.tolist(),
                "threshold": t.threshold.tolist(),
                "left": t.left.tolist(),
                "right": t.right.tolist(),
                "counts": t.counts.tolist(),
            }
            for t in forest.trees
        ],
    }
    with open(path, "w") as fh:
        json.dump(payload, fh)
        fh.write("\n")


def load_forest(path) -> Forest:
    with open(path) as fh:
        payload = json.load(fh)
    version = payload.get("format_version")
    if version != FOREST_FORMAT_VERSION:
        raise SchemaMismatchError(f"unsupported forest container version {version!r}")
    trees = tuple(
        Tree(
            feature=np.asarray(t["feature"], np.int64),
            threshold=np.asarray(t["threshold"], np.float64),
            left=np.asarray(t["left"], np.int64),
            right=np.asarray(t["right"], np.int64),
            counts=np.asarray(t["counts"], np.int64),
        )
        for t in payload["trees"]
    )
    return Forest(
        trees=trees,
        classes=tuple(payload["classes"]),
        n_features=int(payload["n_features"]),
        mtry=int(payload["mtry"]),
        seed=int(payload["seed"]),
        min_node_size=int(payload["min_node_size"]),
        feature_names=(
            tuple(payload["feature_names"])
            if payload.get("feature_names") is not None
            else None
        ),
        importance=(
            np.asarray(payload["importance"], float)
            if payload.get("importance") is not None
            else None
        ),
        oob_votes=(
            np.asarray(payload["oob_votes"], np.int64)
            if payload.get("oob_votes") is not None
            else None
        ),
        y_codes=(
            np.asarray(payload["y_codes"], np.int64)
            if payload.get("y_codes") is not None
            else None
        ),
    )
