"""Multivariate summaries of a feature matrix.

Auto-scaling, principal component analysis with variance-explained and
per-feature contribution percentages, Pearson correlation matrices with
two-sided significance tests, and the complete-linkage leaf ordering used
to arrange correlation displays.
"""

from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .errors import (
    AllConstantColumnsError,
    MalformedDissimilarityError,
    MatrixError,
    ZeroVarianceColumnError,
)
from .extractor import FeatureMatrix

__all__ = [
    "PcaResult",
    "CorrelationReport",
    "autoscale",
    "pca",
    "correlation_report",
    "hclust_order",
    "write_pca_json",
    "write_corr_csv",
]


@dataclass(frozen=True)
class PcaResult:
    """Principal components of an auto-scaled feature matrix.

    `component_loadings` is p x K with orthonormal columns; `eigenvalues`
    are the component variances (squared singular values / (n - 1)),
    non-increasing; `variance_explained` are their proportions of the
    total; `contributions[j, k]` is the percentage of component k carried
    by feature j (100 * loading^2, so each column sums to 100).  `scores`
    holds the row coordinates: centered matrix = scores @ loadings.T.
    """

    names: tuple[str, ...]
    component_loadings: np.ndarray
    eigenvalues: np.ndarray
    variance_explained: np.ndarray
    contributions: np.ndarray
    scores: np.ndarray

    def __post_init__(self):
        p = len(self.names)
        k = self.eigenvalues.shape[0]
        if self.component_loadings.shape != (p, k):
            raise MatrixError(
                f"loadings shape {self.component_loadings.shape} != ({p}, {k})"
            )
        if self.contributions.shape != (p, k):
            raise MatrixError(
                f"contributions shape {self.contributions.shape} != ({p}, {k})"
            )


@dataclass(frozen=True)
class CorrelationReport:
    """Pairwise Pearson correlations with two-sided p-values.

    `order` is the permutation of column indices given by complete-linkage
    clustering on (1 - r), suitable for arranging a correlogram so that
    highly correlated features sit together.
    """

    names: tuple[str, ...]
    r: np.ndarray
    p: np.ndarray
    order: np.ndarray
    alpha: float = 0.05
    meta: dict = field(default_factory=dict)

    def significant_mask(self) -> np.ndarray:
        """True where the correlation is significant at level alpha."""
        return self.p < self.alpha


def autoscale(m: FeatureMatrix) -> FeatureMatrix:
    """Standardize every column to mean 0, sd 1 (divisor n - 1).

    Columns with zero variance carry no information for PCA or
    correlation; they are dropped with a warning.  Missing entries must be
    imputed first.
    """
    values = np.asarray(m.values, dtype=float)
    if values.shape[0] < 2:
        raise MatrixError("auto-scaling needs at least 2 rows")
    if not np.isfinite(values).all():
        raise MatrixError("matrix has missing entries; impute before auto-scaling")

    sd = values.std(axis=0, ddof=1)
    # An exactly-constant column can still show a tiny nonzero sd through
    # rounding in the mean, so constancy is detected by range.
    keep = (np.ptp(values, axis=0) > 0.0) & (sd > 0.0)
    dropped = [name for name, k in zip(m.names, keep) if not k]
    if not keep.any():
        raise AllConstantColumnsError("every column is constant")
    if dropped:
        warnings.warn(
            f"dropping {len(dropped)} zero-variance column(s): {', '.join(dropped)}",
            UserWarning,
            stacklevel=2,
        )

    kept = values[:, keep]
    scaled = (kept - kept.mean(axis=0)) / sd[keep]
    meta = dict(m.meta)
    meta["autoscale"] = {"dropped": dropped}
    return FeatureMatrix(
        ids=m.ids,
        values=scaled,
        meta=meta,
        names=tuple(name for name, k in zip(m.names, keep) if k),
    )


def pca(m: FeatureMatrix) -> PcaResult:
    """Principal component analysis via SVD of the column-centered matrix.

    Expects auto-scaled input (each retained column mean 0, sd 1), though
    the matrix is re-centered defensively.  Rank deficiency is not an
    error: trailing components simply have (near-)zero eigenvalues.
    """
    values = np.asarray(m.values, dtype=float)
    n, p = values.shape
    if n < 2:
        raise MatrixError("PCA needs at least 2 rows")
    if not np.isfinite(values).all():
        raise MatrixError("matrix has missing entries; impute before PCA")

    centered = values - values.mean(axis=0)
    u, s, vt = np.linalg.svd(centered, full_matrices=False)
    # Sign convention: make each loading column's largest-magnitude entry
    # positive so results are stable artifacts (SVD signs are arbitrary).
    loadings = vt.T
    scores = u * s
    for k in range(loadings.shape[1]):
        j = int(np.argmax(np.abs(loadings[:, k])))
        if loadings[j, k] < 0:
            loadings[:, k] = -loadings[:, k]
            scores[:, k] = -scores[:, k]

    eigenvalues = s**2 / (n - 1)
    total = float(eigenvalues.sum())
    if total <= 0.0:
        raise AllConstantColumnsError("matrix has no variance to decompose")
    return PcaResult(
        names=m.names,
        component_loadings=loadings,
        eigenvalues=eigenvalues,
        variance_explained=eigenvalues / total,
        contributions=100.0 * loadings**2,
        scores=scores,
    )


def correlation_report(m: FeatureMatrix, alpha: float = 0.05) -> CorrelationReport:
    """Pairwise Pearson correlations, two-sided p-values, display order.

    p-values come from the exact t test: t = r * sqrt((n - 2) / (1 - r^2))
    with n - 2 degrees of freedom.  The display order arranges columns by
    complete-linkage clustering on the dissimilarity (1 - r).
    """
    values = np.asarray(m.values, dtype=float)
    n, p = values.shape
    if n < 4:
        raise MatrixError("correlation report needs at least 4 rows")
    if not np.isfinite(values).all():
        raise MatrixError("matrix has missing entries; impute before correlating")
    degenerate = (np.ptp(values, axis=0) == 0.0) | (
        values.std(axis=0, ddof=1) == 0.0
    )
    bad = [name for name, is_bad in zip(m.names, degenerate) if is_bad]
    if bad:
        raise ZeroVarianceColumnError(
            f"zero-variance column(s): {', '.join(bad)}"
        )

    r = np.corrcoef(values, rowvar=False)
    r = 0.5 * (r + r.T)  # exact symmetry despite rounding in the matmul
    r = np.clip(r, -1.0, 1.0)
    np.fill_diagonal(r, 1.0)

    with np.errstate(divide="ignore", invalid="ignore"):
        t = r * np.sqrt((n - 2) / (1.0 - r**2))
    pvals = 2.0 * stats.t.sf(np.abs(t), df=n - 2)
    pvals = np.where(np.abs(r) == 1.0, 0.0, pvals)
    np.fill_diagonal(pvals, 0.0)

    order = hclust_order(1.0 - r)
    return CorrelationReport(
        names=m.names,
        r=r,
        p=pvals,
        order=order,
        alpha=float(alpha),
        meta={"linkage": "complete", "distance": "1 - r"},
    )


def _check_dissimilarity(d: np.ndarray) -> np.ndarray:
    d = np.asarray(d, dtype=float)
    if d.ndim != 2 or d.shape[0] != d.shape[1]:
        raise MalformedDissimilarityError(f"expected a square matrix, got {d.shape}")
    if not np.isfinite(d).all():
        raise MalformedDissimilarityError("dissimilarities must be finite")
    scale = max(1.0, float(np.abs(d).max())) if d.size else 1.0
    if np.abs(d - d.T).max(initial=0.0) > 1e-12 * scale:
        raise MalformedDissimilarityError("matrix is not symmetric")
    if np.abs(np.diagonal(d)).max(initial=0.0) > 1e-12 * scale:
        raise MalformedDissimilarityError("diagonal must be zero")
    if d.min(initial=0.0) < -1e-12 * scale:
        raise MalformedDissimilarityError("dissimilarities must be nonnegative")
    d = 0.5 * (d + d.T)
    np.fill_diagonal(d, 0.0)
    return np.maximum(d, 0.0)


def hclust_order(d: np.ndarray, linkage: str = "complete") -> np.ndarray:
    """Leaf order of agglomerative complete-linkage clustering.

    Clusters are merged pairwise by smallest inter-cluster distance (the
    maximum pairwise dissimilarity under complete linkage).  Ties are
    broken by the lowest cluster indices, where a cluster is indexed by
    its smallest member; on a merge the lower-indexed cluster's leaves
    precede the higher-indexed one's.  The returned permutation of
    0..p-1 is the final left-to-right leaf sequence.
    """
    if linkage != "complete":
        raise ValueError(f"unsupported linkage {linkage!r}")
    d = _check_dissimilarity(d)
    p = d.shape[0]
    if p == 0:
        return np.empty(0, dtype=int)

    # Each cluster is an ordered leaf list keyed by its smallest member.
    clusters: list[list[int]] = [[i] for i in range(p)]
    while len(clusters) > 1:
        best = None
        best_pair = None
        for a in range(len(clusters)):
            for b in range(a + 1, len(clusters)):
                dist = max(d[i, j] for i in clusters[a] for j in clusters[b])
                if best is None or dist < best:
                    best = dist
                    best_pair = (a, b)
        a, b = best_pair
        clusters[a] = clusters[a] + clusters[b]
        del clusters[b]
        # Keep clusters sorted by smallest member so tie-breaks stay
        # index-based after merges.
        clusters.sort(key=lambda leaves: leaves[0])
    return np.asarray(clusters[0], dtype=int)


def write_pca_json(result: PcaResult, path, version: str | None = None) -> None:
    """Serialize a PCA result: eigenvalues, variance explained, and the
    per-component feature contributions ranked largest first."""
    components = []
    for k in range(result.eigenvalues.shape[0]):
        contrib = result.contributions[:, k]
        ranking = sorted(
            range(len(result.names)), key=lambda j: (-contrib[j], j)
        )
        components.append(
            {
                "component": k + 1,
                "eigenvalue": float(result.eigenvalues[k]),
                "variance_explained": float(result.variance_explained[k]),
                "contributions": [
                    {"feature": result.names[j], "contribution": float(contrib[j])}
                    for j in ranking
                ],
            }
        )
    payload = {
        "eigenvalues": [float(v) for v in result.eigenvalues],
        "variance_explained": [float(v) for v in result.variance_explained],
        "components": components,
    }
    if version is not None:
        payload["version"] = version
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")


def write_corr_csv(report: CorrelationReport, path) -> None:
    """Serialize a correlation report as one CSV holding both matrices.

    Columns: `matrix` (r or p), `feature`, then one column per feature.
    Rows and columns are arranged in the clustering display order.
    """
    order = report.order
    names = [report.names[i] for i in order]
    r = report.r[np.ix_(order, order)]
    p = report.p[np.ix_(order, order)]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["matrix", "feature"] + names)
        for tag, mat in (("r", r), ("p", p)):
            for name, row in zip(names, mat):
                writer.writerow([tag, name] + [repr(float(v)) for v in row])
