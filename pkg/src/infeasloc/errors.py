"""Exception types raised across the package."""


class InfeasLocError(Exception):
    """Base class for all package errors."""


class MalformedCase(InfeasLocError):
    """Case file text could not be parsed (syntax error or missing table)."""


class InvalidTopology(InfeasLocError):
    """Case parsed but the network it describes is unusable.

    Carries the structured diagnostics that triggered it in ``diagnostics``.
    """

    def __init__(self, message, diagnostics=()):
        super().__init__(message)
        self.diagnostics = list(diagnostics)


class InvalidAlpha(InfeasLocError, ValueError):
    pass


class VoltageCollapse(InfeasLocError):
    """A bus voltage magnitude fell below the evaluation floor."""

    def __init__(self, buses, v_floor):
        self.buses = list(buses)
        self.v_floor = v_floor
        super().__init__(
            f"|V| < {v_floor:g} pu at {len(self.buses)} bus(es), first internal index {self.buses[0]}"
        )


class SingularMatrix(InfeasLocError):
    pass


class KTooLarge(UserWarning):
    """Sparse goal exceeded the number of injection buses and was clamped."""
