"""
Typed errors shared by the library and the command-line surface.

Every error carries the exit status the CLI reports for it, the same way
route handlers raise an exception carrying its HTTP status and detail.

Example:
    raise NoExceedancesError(y_n=12.5)
"""
from typing import Optional


class ExitStatus:
    """Stable process exit statuses."""
    OK = 0
    INTERNAL = 1
    CONFIG = 2
    DEGENERATE = 3
    PRECONDITION = 4
    VALIDATION_FAILED = 5


class ProptailError(Exception):
    """Base error: a human readable detail plus the exit status to report."""

    exit_status: int = ExitStatus.INTERNAL

    def __init__(self, detail: str):
        super().__init__(detail)
        self.detail = detail


class ConfigError(ProptailError):
    """A configuration key is missing or malformed."""

    exit_status = ExitStatus.CONFIG

    def __init__(self, field: str, detail: str):
        super().__init__(f"{field}: {detail}")
        self.field = field


class ModelSpecError(ProptailError):
    """A tail model, skedasis or covariate specification is invalid."""

    exit_status = ExitStatus.CONFIG

    def __init__(self, detail: str, point: Optional[tuple] = None):
        if point is not None:
            detail = f"{detail} (at x={point})"
        super().__init__(detail)
        self.point = point


class MisalignedSupportError(ProptailError):
    exit_status = ExitStatus.CONFIG


class EstimationError(ProptailError):
    """An estimator cannot be evaluated on the given data."""

    exit_status = ExitStatus.DEGENERATE


class NoExceedancesError(EstimationError):
    def __init__(self, y_n: float):
        super().__init__(f"no observation exceeds the threshold y_n={y_n!r}")
        self.y_n = y_n


class EmptyWindowError(EstimationError):
    def __init__(self, x: tuple, h: float, min_bandwidth: float):
        super().__init__(
            f"no covariate within sup-distance {h!r} of x={x}; "
            f"smallest bandwidth capturing a point is {min_bandwidth!r}"
        )
        self.min_bandwidth = min_bandwidth


class DegenerateSampleError(EstimationError):
    """Sample is empty or the requested order statistic does not exist."""


class InsufficientExceedancesError(EstimationError):
    pass


class PreconditionError(ProptailError):
    """A rate sanity proxy or replication minimum is violated."""

    exit_status = ExitStatus.PRECONDITION

    def __init__(self, proxy: str, detail: str):
        super().__init__(f"{proxy}: {detail}")
        self.proxy = proxy


class UnsupportedConfigurationError(ProptailError):
    exit_status = ExitStatus.PRECONDITION


class DegenerateEstimateWarning(UserWarning):
    """Hill estimate equal to zero (every exceedance equals the threshold)."""


class OutsideSupportError(ProptailError, ValueError):
    """A covariate point lies outside the declared covariate support."""

    exit_status = ExitStatus.CONFIG
