"""Exception hierarchy.

Domain errors are caller mistakes (bad arguments). Dynamical terminations
are legitimate model outcomes: the beat generator stops firing or its drive
leaves the oscillatory range.
"""


class DomainError(ValueError):
    """Argument outside the domain of a closed-form quantity."""


class AlreadyFiredError(DomainError):
    """The tone would arrive after the beat generator has already spiked."""


class DynamicsTermination(RuntimeError):
    """Base class for trajectories that cannot be continued."""

    reason = "terminated"


class StalledError(DynamicsTermination):
    """Effective drive too small for the beat generator to reach threshold."""

    reason = "stalled"


class DivergentError(DynamicsTermination):
    """Drive fell to (or below) 1, or blew up."""

    reason = "divergent"
