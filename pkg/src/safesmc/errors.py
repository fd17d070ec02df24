"""Exception types raised by the controller, the simulator and the CLI."""

from __future__ import annotations


class SafeSMCError(Exception):
    """Base class for all package errors."""


class InvalidParameters(SafeSMCError, ValueError):
    """A constructor invariant does not hold."""

    def __init__(self, problems: list[str]):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


class SingularMatrix(SafeSMCError):
    """A matrix that must be inverted is (numerically) singular."""

    def __init__(self, which: str, rcond: float):
        self.which = which
        self.rcond = rcond
        super().__init__(f"{which} is singular (reciprocal condition {rcond:.3e})")


class InfeasibleSafeguard(SafeSMCError):
    """No scalar u_s on the selected channel satisfies a_j*u - b*|u| >= c.

    Raised when c > 0 and -b <= a_j <= b. When raised by the simulator,
    ``t`` holds the simulation time and ``result`` the partial run.
    """

    def __init__(self, a_j: float, b: float, c: float, j: int, t: float | None = None):
        self.a_j = a_j
        self.b = b
        self.c = c
        self.j = j
        self.t = t
        self.result = None
        super().__init__(a_j, b, c, j)

    def __str__(self) -> str:
        # t is attached by the simulator after construction
        where = "" if self.t is None else f" at t={self.t:.6g}s"
        return (f"safeguard infeasible on channel {self.j}{where}: "
                f"a_j={self.a_j:.6g}, b={self.b:.6g}, c={self.c:.6g}")


class DegenerateDenominator(SafeSMCError):
    """The closed-form branch denominator is too close to zero."""

    def __init__(self, denominator: float, j: int, t: float | None = None):
        self.denominator = denominator
        self.j = j
        self.t = t
        self.result = None
        super().__init__(denominator, j)

    def __str__(self) -> str:
        where = "" if self.t is None else f" at t={self.t:.6g}s"
        return f"degenerate safeguard denominator {self.denominator:.3e} on channel {self.j}{where}"


class ChannelDegenerate(SafeSMCError):
    """Argmax channel selection found every |a_i| below the threshold."""


class NonFiniteState(SafeSMCError):
    """The integrated state became NaN or infinite."""

    def __init__(self, t: float, field: str):
        self.t = t
        self.field = field
        self.result = None
        super().__init__(f"non-finite {field} at t={t:.6g}s")


class EmptyTrajectory(SafeSMCError):
    """An operation that needs at least one record received none."""


class ConfigError(SafeSMCError):
    """A scenario configuration file could not be parsed or validated."""
