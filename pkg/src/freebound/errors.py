"""Exception types raised by freebound operations."""


class FreeboundError(Exception):
    """Base class for every error raised by this package."""


class MassTooSmall(FreeboundError):
    pass


class OutOfRange(FreeboundError):
    pass


class TailNotIntegrable(FreeboundError):
    pass


class CoverInvariantViolated(FreeboundError):
    pass


class EpsilonOutOfRange(FreeboundError):
    pass


class SupportOverlap(FreeboundError):
    pass


class TruncationTooSevere(FreeboundError):
    pass


class NonIntegerMass(FreeboundError):
    pass


class Infeasible(FreeboundError):
    pass


class CubeMassExceedsOne(FreeboundError):
    pass


class DensityExceedsPacking(FreeboundError):
    pass


class NotApplicable(FreeboundError):
    pass


class NotRepresentable(FreeboundError):
    pass


class IntegerMass(FreeboundError):
    pass


class TooLarge(FreeboundError):
    pass


class NotConverged(FreeboundError):
    pass
