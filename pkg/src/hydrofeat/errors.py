"""Exception taxonomy.

Every error raised on a documented failure path derives from
:class:`HydrofeatError` so callers (the feature extractor, the CLI) can
distinguish expected data/numerics problems from genuine bugs.
"""

from __future__ import annotations


class HydrofeatError(Exception):
    """Base class for all documented failure modes."""


# ---------------------------------------------------------------------------
# series / correlation primitives


class SeriesError(HydrofeatError):
    """Problems with a series or a series-level operation."""


class InvalidSeriesError(SeriesError):
    """Series violates a structural invariant (NaN values, wrong shape, ...)."""


class TooShortError(SeriesError):
    """Series is shorter than the operation requires."""


class ZeroVarianceError(SeriesError):
    """Operation is undefined on a constant series."""


class LagTooLargeError(SeriesError):
    """Requested lag is out of range for the series length."""


class DegeneratePacfError(SeriesError):
    """Durbin-Levinson recursion left the stationary region."""


# ---------------------------------------------------------------------------
# decomposition


class DecompositionError(HydrofeatError):
    pass


class StlFailureError(DecompositionError):
    """STL inner loop could not complete."""


class NonconvergentLoessError(DecompositionError):
    """A local regression window produced a degenerate fit."""


# ---------------------------------------------------------------------------
# feature computations


class FeatureError(HydrofeatError):
    """A single feature could not be computed; the extractor maps this to a
    missing value rather than aborting the vector."""


class UndefinedFeatureError(FeatureError):
    """Feature has no defined value on this input (e.g. no template matches)."""


class SegmentTooLongError(FeatureError):
    """Requested local segment does not fit in the series."""


class FitFailureError(FeatureError):
    """A model fit underlying a feature failed."""


class OptimizerFailureError(FitFailureError):
    """Numerical optimizer returned an unusable solution."""


class GarchNonconvergenceError(FitFailureError):
    pass


class SingularDesignError(FitFailureError):
    """Regression design matrix is rank deficient."""


class DegenerateFitError(FitFailureError):
    """Fit is formally computable but meaningless (e.g. zero fluctuation)."""


# ---------------------------------------------------------------------------
# feature matrices / statistics


class MatrixError(HydrofeatError):
    pass


class EmptyMatrixError(MatrixError):
    pass


class SchemaMismatchError(MatrixError):
    """Feature matrix columns do not match the canonical feature list."""


class AllMissingColumnError(MatrixError):
    """A column has no observed values, so imputation is impossible."""


class AllConstantColumnsError(MatrixError):
    """Every column is constant; scaling would produce an empty matrix."""


class ZeroVarianceColumnError(MatrixError):
    """Correlation is undefined for a constant column."""


class RankDeficientError(MatrixError):
    pass


class MalformedDissimilarityError(MatrixError):
    """Dissimilarity matrix is not square, symmetric and zero-diagonal."""


# ---------------------------------------------------------------------------
# clustering


class ClusterError(HydrofeatError):
    pass


class DegenerateLabelsError(ClusterError):
    """Labels cannot support the requested operation (e.g. a single class)."""


class PamNonconvergenceWarning(UserWarning):
    """PAM hit its swap iteration cap; best configuration so far is returned."""


# ---------------------------------------------------------------------------
# ingest


class IngestError(HydrofeatError):
    pass


class MalformedLineError(IngestError):
    """A fixed-width or CSV line does not parse; carries the line number."""

    def __init__(self, message: str, line_number: int | None = None):
        super().__init__(message)
        self.line_number = line_number


class UnknownElementError(IngestError):
    pass


class BadHeaderError(IngestError):
    pass


class BadDateError(IngestError):
    pass


class DuplicateObservationError(IngestError):
    pass


class DuplicateStationError(IngestError):
    pass


class CoordinateOutOfRangeError(IngestError):
    pass


class EmptyRecordError(IngestError):
    pass
