"""Exception types shared across the package.

Geometry queries raise :class:`AmbiguousProjection` near the skeleton of the
obstacle set; the caller decides whether that is fatal (tests) or should be
tie-broken (analysis sweeps).  Everything else is a plain precondition or
numerical failure.
"""

from __future__ import annotations


class SvcNavError(Exception):
    """Base class for all package-specific errors."""


class AmbiguousProjection(SvcNavError):
    """Two boundary projections are equidistant within the tie tolerance.

    Carries the candidate (distance, obstacle_index, point) triples so a
    caller may tie-break instead of aborting.
    """

    def __init__(self, message, candidates=None):
        super().__init__(message)
        self.candidates = candidates or []


class DegenerateStep(SvcNavError):
    """A finite-difference probe crossed the skeleton or changed obstacle."""


class InsideObstacle(SvcNavError):
    """Sensor origin lies inside (or on) an obstacle region."""


class OutOfRange(SvcNavError):
    """All rays saturated; no range/bearing information is available."""


class BadGradient(SvcNavError):
    """A direction passed as a unit gradient is not unit length."""


class SensorError(SvcNavError):
    """Wrapper for sensor failures propagated through the simulator."""


class NonFiniteState(SvcNavError):
    """Integration produced a non-finite state coordinate."""


class InvalidStart(SvcNavError):
    """Initial condition lies outside the practical free space."""


class NoConvergence(SvcNavError):
    """An iterative search failed to reach its tolerance."""


class SkeletonInterference(SvcNavError):
    """An equilibrium search ray left the region governed by its obstacle."""


class ParseError(SvcNavError):
    """Scenario file is not valid JSON or misses required structure."""


class ValidationError(SvcNavError):
    """Scenario content violates a schema or semantic rule.

    ``pointers`` holds JSON-pointer-style locations of every violation.
    """

    def __init__(self, message, pointers=None):
        super().__init__(message)
        self.pointers = list(pointers or [])
