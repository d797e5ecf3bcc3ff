"""Exception hierarchy shared by all modules."""


class SyncToolkitError(Exception):
    """Base class for every error raised by the toolkit."""


class ShapeMismatch(SyncToolkitError, ValueError):
    pass


# graphs
class BoundTooSmall(SyncToolkitError, ValueError):
    pass


class ZeroNotSimple(SyncToolkitError):
    pass


# certificates
class NotNeutrallyStable(SyncToolkitError):
    pass


class NotSchur(SyncToolkitError):
    pass


# structure
class NotUniformRankOne(SyncToolkitError):
    pass


class NotLeftInvertible(SyncToolkitError):
    pass


class DetectabilityLost(SyncToolkitError):
    pass


class NotHurwitz(SyncToolkitError, ValueError):
    pass


# synthesis
class PreconditionFailed(SyncToolkitError):
    """A design assumption does not hold; ``assumption`` names it."""

    def __init__(self, assumption, detail=""):
        self.assumption = assumption
        self.detail = detail
        msg = f"precondition failed: {assumption}"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)


class ObserverDesignFailed(SyncToolkitError):
    pass


class GainTooLarge(SyncToolkitError):
    """Requested gain exceeds its certified bound and no override was given."""


class EpsilonTooLarge(GainTooLarge):
    pass


class DeltaTooLarge(GainTooLarge):
    pass


# simulation / verification
class Divergence(SyncToolkitError):
    def __init__(self, msg, trajectory=None):
        super().__init__(msg)
        self.trajectory = trajectory


class SpectrumMismatch(SyncToolkitError):
    pass


class NotSiso(SyncToolkitError, ValueError):
    pass
