"""Safety-velocity-cone reactive navigation.

A first-order robot, a limited-range scanner, and a smoothed tangent-cone
controller that projects the target-seeking velocity onto the admissible
half-space near obstacles.  The package bundles the ground-truth geometry
needed to certify safety and stability claims numerically.
"""

from .errors import (
    AmbiguousProjection,
    BadGradient,
    DegenerateStep,
    InsideObstacle,
    InvalidStart,
    NoConvergence,
    NonFiniteState,
    OutOfRange,
    ParseError,
    SensorError,
    SkeletonInterference,
    SvcNavError,
    ValidationError,
)
from .geometry import (
    CurvatureVerdict,
    ImplicitObstacle,
    OrientedDistanceResult,
    ProjectionJacobian,
    ValidationReport,
    World,
    curvature_condition,
    oriented_distance,
    oriented_distance_value,
    projection_jacobian,
    validate_world,
)

__version__ = "0.1.0"

__all__ = [
    "AmbiguousProjection",
    "BadGradient",
    "CurvatureVerdict",
    "DegenerateStep",
    "ImplicitObstacle",
    "InsideObstacle",
    "InvalidStart",
    "NoConvergence",
    "NonFiniteState",
    "OrientedDistanceResult",
    "OutOfRange",
    "ParseError",
    "ProjectionJacobian",
    "SensorError",
    "SkeletonInterference",
    "SvcNavError",
    "ValidationError",
    "ValidationReport",
    "World",
    "curvature_condition",
    "oriented_distance",
    "oriented_distance_value",
    "projection_jacobian",
    "validate_world",
    "__version__",
]
