"""Exception types raised across the package."""

from __future__ import annotations


class MobisynthError(Exception):
    """Base class for all package errors."""


class OsmParseError(MobisynthError):
    """Malformed OSM XML. Carries the 1-based line and column of the fault."""

    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        self.line = line
        self.column = column
        where = f" (line {line}, column {column})" if line is not None else ""
        super().__init__(f"{message}{where}")


class OsmWarning(UserWarning):
    """Recoverable problem found while ingesting an extract."""


class IdentityError(MobisynthError):
    """An identity could not be constructed from the given catalogue/config."""


class TransitionWarning(UserWarning):
    """Transitional mass out of a significant state exceeded 1 and was clamped."""


class DeadStateError(MobisynthError):
    """The state machine reached a state without outgoing transitions."""


class RouteSamplingError(MobisynthError):
    """No acceptable day route could be drawn."""


class InfeasibleError(MobisynthError):
    """A linear program has no feasible point.

    ``violated`` lists the names of constraints that could not be satisfied
    together with the rest of the system.
    """

    def __init__(self, message: str, violated: tuple[str, ...] = ()):
        self.violated = tuple(violated)
        detail = f": {', '.join(self.violated)}" if self.violated else ""
        super().__init__(f"{message}{detail}")


class UnboundedError(MobisynthError):
    """A linear program's objective is unbounded."""


class ScheduleError(MobisynthError):
    """A schedule failed its constraint audit."""


class RoutingError(MobisynthError):
    """Base class for graph routing failures."""


class NoRouteError(RoutingError):
    """The destination is unreachable from the source."""


class ProviderError(MobisynthError):
    """Base class for traffic provider failures."""


class TransportError(ProviderError):
    """Network-level failure talking to the directions service."""


class QuotaError(ProviderError):
    """The directions service refused the request for quota or permission reasons."""

    def __init__(self, message: str, retry_after: float | None = None):
        self.retry_after = retry_after
        super().__init__(message)


class ZeroResultsError(ProviderError):
    """The directions service found no route."""


class PolylineDecodeError(MobisynthError):
    """An encoded polyline string is truncated or invalid."""

    def __init__(self, message: str, offset: int):
        self.offset = offset
        super().__init__(f"{message} at offset {offset}")


class StepSynthesisError(MobisynthError):
    """No step profile met the acceptance threshold within the retry budget."""

    def __init__(self, message: str, best_residual: float):
        self.best_residual = best_residual
        super().__init__(f"{message} (best residual {best_residual:.4g} m/s)")


class DaySynthesisError(MobisynthError):
    """A day could not be synthesized; ``leg`` names the failing leg when known."""

    def __init__(self, message: str, leg: str | None = None):
        self.leg = leg
        super().__init__(f"{message} [leg {leg}]" if leg else message)
