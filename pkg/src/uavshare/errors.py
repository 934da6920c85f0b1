class ValidationError(ValueError):
    """Invalid configuration or scenario. ``field`` names the offending entry."""

    def __init__(self, field, message):
        self.field = field
        super().__init__(f"{field}: {message}")


class SingularityError(ValueError):
    """Two endpoints of a link coincide, so the path-loss gain is undefined."""


class InfeasibleAllocation(RuntimeError):
    """The emergency center cannot produce an allocation (battery too low)."""

    def __init__(self, message, uav=None):
        self.uav = uav
        super().__init__(message)


class OracleGuardError(ValueError):
    """Problem is too large for a brute-force reference."""
