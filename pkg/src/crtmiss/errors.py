"""Exception taxonomy shared across the package.

Every domain failure raises a subclass of :class:`CrtmissError` so callers
(and the command line front end) can distinguish bad inputs from bugs.
"""


class CrtmissError(Exception):
    """Base class for all domain errors raised by this package."""


class ParameterError(CrtmissError):
    """A model or design parameter violates a stated constraint."""


class DegenerateDesignError(CrtmissError):
    """Too few usable clusters (or observations) to run an analysis."""


class SingularDesignError(CrtmissError):
    """A regression design matrix is rank deficient."""


class DegenerateVarianceError(CrtmissError):
    """A variance estimate needed by a test statistic is zero or undefined."""


class FullyMissingClusterError(CrtmissError):
    """A cluster has no observed outcomes where at least one is required."""


class ConvergenceError(CrtmissError):
    """An iterative fit failed to converge to a usable optimum."""


class SamplerDivergenceError(CrtmissError):
    """A posterior sampler produced a non-finite state."""


class CellFailureError(CrtmissError):
    """Too many replicate-level failures for a simulation cell to report."""
