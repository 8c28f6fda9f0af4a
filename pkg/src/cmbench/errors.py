"""Exception taxonomy shared across the toolkit.

Estimation failure is deliberately NOT an exception (see estimate.EstimationResult):
success rate is itself a reported metric. Exceptions here mark contract
violations and unusable inputs.
"""


class CmBenchError(Exception):
    """Base class for all toolkit errors."""


# ---- geometry / numerics ----------------------------------------------------

class DegeneratePoint(CmBenchError):
    """Homogeneous depth of a projected point is numerically zero."""


class SingularMatrix(CmBenchError):
    """Matrix inverse requested below the determinant threshold."""


class DegenerateQuad(CmBenchError):
    """Warped frame corners are non-finite; no overlap polygon exists."""


class DegenerateConfiguration(CmBenchError):
    """Point configuration too degenerate for a model fit (collinear/duplicate)."""


class SamplingExhausted(CmBenchError):
    """Rejection sampling hit its draw cap; sampler params are inconsistent."""


# ---- metrics ----------------------------------------------------------------

class EmptyInput(CmBenchError):
    """Metric called on an empty error list."""


class NoSuccesses(CmBenchError):
    """Median requested but no pair was evaluated successfully."""


class MissingTag(CmBenchError):
    """Scene-balanced aggregation needs scene and split tags on every pair."""


# ---- gate -------------------------------------------------------------------

class UnknownProvider(CmBenchError):
    """Embedding provider id not registered."""


class DimensionMismatch(CmBenchError):
    """Vector dimensions disagree (fusion inputs, model vs descriptor, files)."""


class AllBranchesFailed(CmBenchError):
    """Every preprocessing branch failed RANSAC; oracle label undefined."""


class NonFiniteLoss(CmBenchError):
    """Training loss became NaN/Inf; aborted with diagnostics."""


# ---- ingest / reports -------------------------------------------------------

class ParseError(CmBenchError):
    """File-level parse failure; carries path and line number when known."""

    def __init__(self, message, path=None, line=None):
        super().__init__(message)
        self.path = path
        self.line = line


class SchemaViolation(CmBenchError):
    """Record violates a schema; carries the offending field."""

    def __init__(self, message, path=None, line=None, field=None):
        super().__init__(message)
        self.path = path
        self.line = line
        self.field = field


class DuplicateId(CmBenchError):
    """Same pair_id appears twice in one manifest."""


class MisalignedLists(CmBenchError):
    """Thermal and satellite ground-truth point lists differ in length."""


class NonPositiveScale(CmBenchError):
    """meters_per_pixel must be > 0."""


class CapExceeded(CmBenchError):
    """Match record holds more correspondences than the configured cap."""


class FingerprintMismatch(CmBenchError):
    """Report merge across incompatible config fingerprints without --force."""
