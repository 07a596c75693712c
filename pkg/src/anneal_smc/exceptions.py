"""Exception and warning types raised across the package."""


class AnnealSMCError(Exception):
    """Base class of every error raised by this package."""


class InvalidInputError(ValueError, AnnealSMCError):
    """Arguments violate a documented precondition."""


class DegenerateEnsembleError(RuntimeError, AnnealSMCError):
    """All weights (or priority scores) of an ensemble are zero."""


class PropagationError(RuntimeError, AnnealSMCError):
    """A proposal produced non-finite states during propagation."""

    def __init__(self, t, message=None):
        self.t = t
        super().__init__(message or f"proposal returned non-finite samples at t={t}")


class SingularFitError(RuntimeError, AnnealSMCError):
    """A fitted covariance is singular even after jitter regularization."""


class BandwidthError(RuntimeError, AnnealSMCError):
    """Kernel weights underflowed for every donor particle."""

    def __init__(self, bandwidth):
        self.bandwidth = bandwidth
        super().__init__(
            f"all kernel weights underflow with b1={bandwidth!r}; widen the bandwidth"
        )


class UnsupportedModelError(TypeError, AnnealSMCError):
    """An algorithm was applied to a model outside its domain."""


class ConvergenceError(RuntimeError, AnnealSMCError):
    """An iterative solver exhausted its iteration budget."""


class WeightCollapseWarning(RuntimeWarning):
    """The effective sample size stayed at one for several consecutive steps."""
