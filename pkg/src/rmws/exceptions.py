"""Exception types raised across the package."""


class ConfigError(ValueError):
    """Invalid system configuration or mismatched array dimensions."""


class QueueUnstable(ArithmeticError):
    """An M/M/1 queue would have arrival rate >= service rate.

    ``margin`` is ``y*F*dt - z*n*c`` (task-cycles per interval); it is
    non-positive when raised.
    """

    def __init__(self, server, service, margin):
        self.server = server
        self.service = service
        self.margin = margin
        super().__init__(
            f"queue of service {service} on server {server} is unstable "
            f"(margin {margin:.6g})"
        )


class InfeasibleDemand(RuntimeError):
    """No stable allocation exists for the demand routed to ``server``."""

    def __init__(self, server, message=None):
        self.server = server
        super().__init__(message or f"demand routed to server {server} cannot be stabilised")


class NegativeGamma(RuntimeError):
    """Storage cost alone exhausts the budget of a server hosting services."""

    def __init__(self, server, gamma):
        self.server = server
        self.gamma = gamma
        super().__init__(f"server {server} has no compute budget left (gamma={gamma:.6g})")


class TooLarge(ValueError):
    """Enumeration guard tripped."""


class DegenerateInstance(ValueError):
    """A probe instance has no interior feasible point."""


class NonConvergence(RuntimeError):
    """An iterative oracle hit its iteration cap."""
