"""Exception hierarchy shared by all gradcode modules."""


class GradCodeError(Exception):
    """Base class for every error raised by this package."""


class DimensionMismatch(GradCodeError):
    pass


class UnknownDesign(GradCodeError):
    pass


class SizeOverflow(GradCodeError):
    pass


class CapExceeded(GradCodeError):
    """An enumeration or construction would exceed its configured cap.

    ``count`` carries the exact size that was requested.
    """

    def __init__(self, message: str, count: int | None = None, cap: int | None = None):
        super().__init__(message)
        self.count = count
        self.cap = cap


class Infeasible(GradCodeError):
    """Parameters violate a feasibility condition; ``condition`` names which one."""

    def __init__(self, condition: str, message: str | None = None):
        super().__init__(message or f"infeasible parameters: {condition} does not hold")
        self.condition = condition


class InvalidParams(GradCodeError):
    pass


class NumericalFailure(GradCodeError):
    pass


class NotAnFRC(GradCodeError):
    pass


class ShapeMismatch(GradCodeError):
    pass


class InternalInconsistency(GradCodeError):
    pass


class PolicyInfeasible(GradCodeError):
    pass


class ConfigError(GradCodeError):
    pass
