"""Exception types shared across the solver stack."""


class SolverError(Exception):
    """Base class for all solver-specific failures."""


class ShapeMismatch(SolverError):
    """Array dimensions disagree with the declared user/subcarrier counts."""


class DivisionByZeroOffload(SolverError):
    """A user offloads work but has zero uplink rate or zero edge CPU."""


class InfeasibleUser(SolverError):
    """The offload-ratio interval of a user is empty under the current resources.

    Carries both interval ends so callers can inspect how the deadline failed.
    """

    def __init__(self, user, lower, upper):
        self.user = user
        self.lower = lower
        self.upper = upper
        super().__init__(
            f"user {user}: offload-ratio interval empty (lower={lower:.6g}, upper={upper:.6g})"
        )


class DeadlineUnreachable(SolverError):
    """No uplink rate can meet the deadline: edge compute alone exceeds the slot."""

    def __init__(self, user, edge_cpu, offloaded_cycles, slot):
        self.user = user
        self.edge_cpu = edge_cpu
        self.offloaded_cycles = offloaded_cycles
        self.slot = slot
        super().__init__(
            f"user {user}: slot*edge_cpu={slot * edge_cpu:.6g} <= offloaded cycles "
            f"{offloaded_cycles:.6g}; deadline unreachable at any rate"
        )


class EmptyRate(SolverError):
    """A user offloads work but holds no subcarriers (zero achievable rate)."""

    def __init__(self, user):
        self.user = user
        super().__init__(f"user {user}: offloading with zero achievable uplink rate")


class NoFeasiblePrimal(SolverError):
    """The dual loop finished without ever visiting a feasible allocation."""

    def __init__(self, message, context=None):
        self.context = context or {}
        super().__init__(message)


class InfeasibleInstance(SolverError):
    """A user cannot meet its deadline even after being granted idle capacity."""

    def __init__(self, user, lower, upper):
        self.user = user
        self.lower = lower
        self.upper = upper
        super().__init__(
            f"user {user}: deadline unmeetable even with idle edge capacity "
            f"(lower={lower:.6g}, upper={upper:.6g})"
        )


class TooLarge(SolverError):
    """Instance exceeds the exhaustive search limits."""


class BadSpec(SolverError):
    """Scenario or sweep description is malformed."""
