"""Unsupervised clustering of stations and spatial label interpolation.

Pipeline: the feature matrix is doubled with marginal-resampled synthetic
rows, a bagged-tree classifier learns to tell real from synthetic, the
co-leaf proximities of the real rows become a dissimilarity, and k-medoid
partitioning (PAM) yields the station clusters.  The same forest's
impurity importances rank the features; a second classifier trained on
(latitude, longitude) interpolates cluster labels over a regular grid.
"""

from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    ClusterError,
    DegenerateLabelsError,
    MatrixError,
    PamNonconvergenceWarning,
)
from .forest import (
    Forest,
    fit_classifier,
    gini_importance,
    proximity,
    synthetic_contrast,
    vote_fractions,
)
from .statlearn import _check_dissimilarity

__all__ = [
    "ClusterAssignment",
    "GridPrediction",
    "pam",
    "unsupervised_cluster",
    "rank_features_for_clustering",
    "spatial_interpolate",
    "adjusted_rand_index",
    "write_clusters_csv",
    "write_importance_csv",
    "write_grid_geojson",
]

PAM_MAX_SWAPS = 500


@dataclass(frozen=True)
class ClusterAssignment:
    """Cluster labels 1..k for every station, with the medoid stations."""

    ids: tuple[str, ...]
    labels: np.ndarray
    medoid_indices: tuple[int, ...]
    params: dict = field(default_factory=dict)
    forest: Forest | None = None

    def __post_init__(self):
        k = len(self.medoid_indices)
        if self.labels.shape != (len(self.ids),):
            raise ClusterError(
                f"{self.labels.shape[0]} labels for {len(self.ids)} stations"
            )
        present = set(self.labels.tolist())
        if present != set(range(1, k + 1)):
            raise ClusterError(f"expected exactly clusters 1..{k}, got {present}")
        for c, m in enumerate(self.medoid_indices, start=1):
            if self.labels[m] != c:
                raise ClusterError(f"medoid {m} is not a member of cluster {c}")

    @property
    def k(self) -> int:
        return len(self.medoid_indices)

    @property
    def medoid_ids(self) -> tuple[str, ...]:
        return tuple(self.ids[m] for m in self.medoid_indices)

    def as_dict(self) -> dict[str, int]:
        return {sid: int(lab) for sid, lab in zip(self.ids, self.labels)}


@dataclass(frozen=True)
class GridPrediction:
    """Predicted cluster labels over a regular lat/lon lattice."""

    lats: np.ndarray
    lons: np.ndarray
    labels: np.ndarray
    votes: np.ndarray
    classes: tuple
    grid_step: float
    bbox: tuple[float, float, float, float]
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.labels.shape != (self.lats.shape[0], self.lons.shape[0]):
            raise ClusterError(
                f"label lattice {self.labels.shape} does not match "
                f"{self.lats.shape[0]} x {self.lons.shape[0]} axes"
            )


def _nearest_medoid_labels(d: np.ndarray, medoids: np.ndarray) -> np.ndarray:
    """Assign each point to its nearest medoid (1-based cluster labels).

    Medoids always belong to their own cluster; other ties go to the
    medoid with the lowest point index (argmin's first-minimum rule over
    medoids sorted ascending).
    """
    dist = d[:, medoids]
    labels = np.argmin(dist, axis=1) + 1
    for c, m in enumerate(medoids, start=1):
        labels[m] = c
    return labels


def _pam_cost(d: np.ndarray, medoids: np.ndarray) -> float:
    return float(d[:, medoids].min(axis=1).sum())


def pam(d: np.ndarray, k: int, max_swaps: int = PAM_MAX_SWAPS):
    """Partition around medoids: BUILD initialization then SWAP descent.

    Returns (medoids, labels): `medoids` are point indices sorted
    ascending, `labels` assigns each point the 1-based index of its
    nearest medoid.  All ties break toward the lowest point index.  If the
    swap phase is still improving after `max_swaps` iterations, the best
    partition found so far is returned with a PamNonconvergenceWarning.
    """
    d = _check_dissimilarity(d)
    n = d.shape[0]
    if not 1 <= k <= n:
        raise ClusterError(f"k must be in [1, {n}], got {k}")

    # BUILD: first the point with smallest total dissimilarity, then
    # greedily the point yielding the largest cost decrease.
    totals = d.sum(axis=1)
    medoids = [int(np.argmin(totals))]
    nearest = d[:, medoids[0]].copy()
    while len(medoids) < k:
        gains = np.maximum(nearest[None, :] - d, 0.0).sum(axis=1)
        gains[medoids] = -np.inf
        best = int(np.argmax(gains))
        medoids.append(best)
        nearest = np.minimum(nearest, d[:, best])

    medoid_set = sorted(medoids)
    cost = _pam_cost(d, np.asarray(medoid_set))

    # SWAP: replace (medoid, non-medoid) pairs while the total cost drops.
    for _ in range(max_swaps):
        best_cost = cost
        best_swap = None
        non_medoids = [h for h in range(n) if h not in medoid_set]
        for mi, m in enumerate(medoid_set):
            trial = list(medoid_set)
            for h in non_medoids:
                trial[mi] = h
                c = _pam_cost(d, np.asarray(trial))
                if c < best_cost - 1e-12:
                    best_cost = c
                    best_swap = (mi, h)
            trial[mi] = m
        if best_swap is None:
            break
        mi, h = best_swap
        medoid_set[mi] = h
        medoid_set.sort()
        cost = best_cost
    else:
        warnings.warn(
            f"medoid swaps still improving after {max_swaps} iterations; "
            "returning the best partition found",
            PamNonconvergenceWarning,
            stacklevel=2,
        )

    medoids = np.asarray(sorted(medoid_set), dtype=int)
    return medoids, _nearest_medoid_labels(d, medoids)


def unsupervised_cluster(
    m,
    k: int = 5,
    n_trees: int = 5000,
    *,
    seed: int,
    parallelism: int = 1,
) -> ClusterAssignment:
    """Cluster stations by how a forest tells them apart from noise.

    The matrix is doubled with synthetic rows drawn from each feature's
    marginal, a classifier is trained to separate real from synthetic,
    and the real rows' co-leaf proximity defines the dissimilarity
    (1 - proximity) partitioned by k medoids.
    """
    values = np.asarray(getattr(m, "values", m), dtype=float)
    ids = getattr(m, "ids", None)
    if ids is None:
        ids = tuple(str(i) for i in range(values.shape[0]))
    if not np.isfinite(values).all():
        raise MatrixError("matrix has missing entries; impute before clustering")
    if values.shape[0] < k:
        raise ClusterError(f"need at least k={k} rows, got {values.shape[0]}")

    doubled, contrast_labels = synthetic_contrast(values, seed=seed)
    forest = fit_classifier(
        doubled,
        contrast_labels,
        n_trees=n_trees,
        seed=seed,
        parallelism=parallelism,
    )
    prox = proximity(forest, values)
    medoids, labels = pam(prox.dissimilarity(), k)
    return ClusterAssignment(
        ids=tuple(ids),
        labels=labels,
        medoid_indices=tuple(int(v) for v in medoids),
        params={"k": int(k), "n_trees": int(n_trees), "seed": int(seed)},
        forest=forest,
    )


def rank_features_for_clustering(m, source) -> list[tuple[str, float]]:
    """Features ranked by their importance to the real-vs-synthetic forest.

    `source` is either the contrast forest itself or a ClusterAssignment
    carrying one.  Returns (name, score) pairs sorted by descending score,
    ties broken by feature position.
    """
    forest = source.forest if isinstance(source, ClusterAssignment) else source
    if forest is None:
        raise ClusterError("no contrast forest available for ranking")
    scores = gini_importance(forest)
    names = forest.feature_names or getattr(m, "names", None)
    if names is None:
        names = tuple(f"feature_{j}" for j in range(scores.shape[0]))
    if len(names) != scores.shape[0]:
        raise MatrixError(
            f"{len(names)} names for {scores.shape[0]} importance scores"
        )
    ranking = sorted(range(len(names)), key=lambda j: (-scores[j], j))
    return [(names[j], float(scores[j])) for j in ranking]


def _grid_axis(lo: float, hi: float, step: float) -> np.ndarray:
    count = int(np.floor((hi - lo) / step + 1e-9)) + 1
    return lo + step * np.arange(count)


def spatial_interpolate(
    stations,
    grid_step: float = 0.5,
    n_trees: int = 5000,
    *,
    seed: int,
    bbox: tuple[float, float, float, float] | None = None,
    parallelism: int = 1,
) -> GridPrediction:
    """Predict the cluster label of every node of a lat/lon lattice.

    `stations` is an (n, 3) array-like of (lat, lon, label) rows.  A
    classifier is trained on the two coordinates and evaluated at every
    lattice node of the bounding box (default: the stations' bounding box
    padded by 2 degrees, clipped to valid coordinates) with spacing
    `grid_step` degrees.
    """
    data = np.asarray(stations, dtype=float)
    if data.ndim != 2 or data.shape[1] != 3:
        raise ClusterError(f"expected (n, 3) of (lat, lon, label), got {data.shape}")
    if grid_step <= 0:
        raise ClusterError(f"grid_step must be positive, got {grid_step}")
    coords = data[:, :2]
    labels = data[:, 2]
    if not np.isfinite(data).all():
        raise ClusterError("station rows must be finite")
    if np.unique(labels).shape[0] < 2:
        raise DegenerateLabelsError("need at least two distinct cluster labels")

    if bbox is None:
        bbox = (
            max(-90.0, float(coords[:, 0].min()) - 2.0),
            min(90.0, float(coords[:, 0].max()) + 2.0),
            max(-180.0, float(coords[:, 1].min()) - 2.0),
            min(180.0, float(coords[:, 1].max()) + 2.0),
        )
    lat_lo, lat_hi, lon_lo, lon_hi = (float(v) for v in bbox)
    if lat_hi < lat_lo or lon_hi < lon_lo:
        raise ClusterError(f"malformed bounding box {bbox}")

    forest = fit_classifier(
        coords,
        labels.astype(np.int64),
        n_trees=n_trees,
        seed=seed,
        parallelism=parallelism,
    )

    lats = _grid_axis(lat_lo, lat_hi, float(grid_step))
    lons = _grid_axis(lon_lo, lon_hi, float(grid_step))
    nodes = np.column_stack(
        [np.repeat(lats, lons.shape[0]), np.tile(lons, lats.shape[0])]
    )
    fractions = vote_fractions(forest, nodes)
    codes = np.argmax(fractions, axis=1)
    classes = np.asarray(forest.classes)
    grid_labels = classes[codes].reshape(lats.shape[0], lons.shape[0]).astype(int)
    votes = fractions.reshape(lats.shape[0], lons.shape[0], len(forest.classes))

    return GridPrediction(
        lats=lats,
        lons=lons,
        labels=grid_labels,
        votes=votes,
        classes=forest.classes,
        grid_step=float(grid_step),
        bbox=(lat_lo, lat_hi, lon_lo, lon_hi),
        params={"n_trees": int(n_trees), "seed": int(seed)},
    )


def adjusted_rand_index(a, b) -> float:
    """Chance-corrected agreement between two partitions of the same items.

    1 for identical partitions (up to label permutation), about 0 for
    independent ones; both trivial-partition edge cases (every pair of
    index counts producing a zero denominator) return 1.0 when the
    partitions agree exactly and 0.0 otherwise.
    """
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape or a.ndim != 1:
        raise ClusterError("partitions must be equal-length 1-d label arrays")
    n = a.shape[0]
    if n == 0:
        raise ClusterError("cannot compare empty partitions")
    _, ai = np.unique(a, return_inverse=True)
    _, bi = np.unique(b, return_inverse=True)
    contingency = np.zeros((ai.max() + 1, bi.max() + 1), dtype=np.int64)
    np.add.at(contingency, (ai, bi), 1)

    def comb2(x):
        return x * (x - 1) / 2.0

    sum_ij = comb2(contingency).sum()
    sum_a = comb2(contingency.sum(axis=1)).sum()
    sum_b = comb2(contingency.sum(axis=0)).sum()
    total = comb2(n)
    expected = sum_a * sum_b / total if total > 0 else 0.0
    max_index = 0.5 * (sum_a + sum_b)
    if max_index == expected:
        return 1.0 if np.array_equal(ai, bi) else 0.0
    return float((sum_ij - expected) / (max_index - expected))


def write_clusters_csv(assignment: ClusterAssignment, coords, path) -> None:
    """`id,lat,lon,label` rows; `coords` maps station id -> (lat, lon).
    Stations absent from `coords` get empty coordinate fields."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "lat", "lon", "label"])
        for sid, label in zip(assignment.ids, assignment.labels):
            pair = coords.get(sid)
            if pair is None:
                writer.writerow([sid, "", "", int(label)])
            else:
                lat, lon = pair
                writer.writerow([sid, repr(float(lat)), repr(float(lon)), int(label)])


def write_importance_csv(ranked: list[tuple[str, float]], path) -> None:
    """`rank,feature,score` rows, rank 1 = most important."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["rank", "feature", "score"])
        for rank, (name, score) in enumerate(ranked, start=1):
            writer.writerow([rank, name, repr(float(score))])


def write_grid_geojson(grid: GridPrediction, path) -> None:
    """GeoJSON FeatureCollection of lattice points with label + vote fields."""
    features = []
    for i, lat in enumerate(grid.lats):
        for j, lon in enumerate(grid.lons):
            properties = {"label": int(grid.labels[i, j])}
            for c, cls in enumerate(grid.classes):
                properties[f"vote_{cls}"] = float(grid.votes[i, j, c])
            features.append(
                {
                    "type": "Feature",
                    "geometry": {
                        "type": "Point",
                        "coordinates": [float(lon), float(lat)],
                    },
                    "properties": properties,
                }
            )
    payload = {"type": "FeatureCollection", "features": features}
    with open(path, "w") as fh:
        json.dump(payload, fh)
        fh.write("\n")
