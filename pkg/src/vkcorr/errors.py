"""Error types shared across the engine.

Every guard failure maps to one of these so that the CLI can translate
them into exit codes and remediation hints without string matching.
"""


class VkcorrError(Exception):
    """Base class for all engine errors."""


class MarginExhausted(VkcorrError):
    """A stencil or mollification kernel would read outside the sampled box."""

    def __init__(self, needed: float, available: float, what: str = "operation"):
        self.needed = needed
        self.available = available
        super().__init__(
            f"{what} needs {needed:.6g} of margin but only {available:.6g} remains; "
            f"increase the grid margin"
        )


class OutsideBall(VkcorrError):
    """Input field violates the closeness precondition of the decomposition."""


class NonPositiveCoefficient(VkcorrError):
    """A squared amplitude dropped below its positivity floor (sigma too small)."""


class ResolutionGuard(VkcorrError):
    """Requested oscillation frequency is not resolvable on the configured grid."""


class GuardExceeded(VkcorrError):
    """A measured error field exceeded its predicted bound by the configured slack."""


class UnknownSuite(VkcorrError):
    """verify was asked for a check suite that does not exist."""


class ConfigError(VkcorrError):
    """Malformed or contradictory run configuration."""
