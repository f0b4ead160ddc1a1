"""Exception types raised across the package."""


class PolicyDeltaError(ValueError):
    """Base class for every validation or estimation failure."""


class InvalidRecord(PolicyDeltaError):
    pass


class EmptyDataset(PolicyDeltaError):
    pass


class NonFinitePropensity(PolicyDeltaError):
    """Propensity is non-finite, <= 0 or > 1."""


class UnknownArmLabel(PolicyDeltaError):
    pass


class ActionOutOfRange(PolicyDeltaError):
    pass


class WrongFraming(PolicyDeltaError):
    pass


class EmptyArm(PolicyDeltaError):
    pass


class InvalidPolicy(PolicyDeltaError):
    pass


class NonFiniteExpectedReward(PolicyDeltaError):
    pass


class EmptyInput(PolicyDeltaError):
    pass


class InsufficientData(PolicyDeltaError):
    pass


class ActionAwareModelRejected(PolicyDeltaError):
    pass


class ZeroVariancePredictor(PolicyDeltaError):
    pass


class ZeroVarianceOutcome(PolicyDeltaError):
    pass


class ZeroPropensity(PolicyDeltaError):
    pass


class DegenerateWeights(PolicyDeltaError):
    pass


class UnknownActionSet(PolicyDeltaError):
    pass


class InvalidAllocation(PolicyDeltaError):
    pass


class InvalidConfig(PolicyDeltaError):
    """Bad synthetic/sweep configuration. ``key`` names the offending entry."""

    def __init__(self, message: str, key: str | None = None):
        super().__init__(message)
        self.key = key
