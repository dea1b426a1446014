"""The smoothed safety-velocity-cone feedback law.

Far from obstacles (or when the target-seeking velocity already points away
from them) the controller is the plain proportional law.  Inside the
blending shell the velocity component along the obstacle normal is removed,
ramped by a scalar that reaches one on the safety margin, which makes the
switch Lipschitz instead of discontinuous.  A hard-switch variant is kept
for comparison experiments.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import BadGradient
from .sensor import RangeReading

GRADIENT_UNIT_TOL = 1e-6

MODE_NOMINAL = "nominal"
MODE_BLENDED = "blended"


@dataclass(frozen=True)
class ControllerParams:
    """Gains and margins. Requires 0 < R < eps < eps'.

    ``eps_prime <= h`` (the reach bound) is a property of the world and is
    checked by ``validate_world``; the target living inside the practical
    free space is checked at scenario load.
    """

    gain: float
    eps: float
    eps_prime: float
    robot_radius: float
    target: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "target", np.asarray(self.target, dtype=float))
        if not self.gain > 0:
            raise ValueError("gain must be positive")
        if not 0 < self.robot_radius < self.eps < self.eps_prime:
            raise ValueError(
                "margins must satisfy 0 < R < eps < eps' "
                f"(got R={self.robot_radius}, eps={self.eps}, eps'={self.eps_prime})"
            )


@dataclass(frozen=True)
class ControlOutput:
    u: np.ndarray
    mode: str
    phi: float
    grad_used: Optional[np.ndarray]


def nominal(x, params: ControllerParams) -> np.ndarray:
    """Obstacle-blind target-seeking velocity -k (x - x_d)."""
    return -params.gain * (np.asarray(x, dtype=float) - params.target)


def phi(b: float, params: ControllerParams) -> float:
    """Blending scalar: 1 on the safety margin, 0 outside the outer shell.

    The lower clamp makes the function total; the closed loop never
    evaluates the blended branch with b > eps'.
    """
    val = (params.eps_prime - b) / (params.eps_prime - params.eps)
    return min(1.0, max(0.0, val))


def project_smooth(kappa, grad, b: float, params: ControllerParams) -> np.ndarray:
    """Blended removal of the normal velocity component.

    Returns ``kappa`` unchanged when b > eps' or when kappa does not push
    towards the obstacle; otherwise subtracts ``phi(b)`` times the normal
    component.  Continuous across both switching surfaces by construction.
    """
    kappa = np.asarray(kappa, dtype=float)
    grad = np.asarray(grad, dtype=float)
    norm = float(np.linalg.norm(grad))
    if abs(norm - 1.0) > GRADIENT_UNIT_TOL:
        raise BadGradient(f"gradient norm {norm} deviates from 1")
    dot = float(kappa @ grad)
    if b > params.eps_prime or dot >= 0.0:
        return kappa.copy()
    return kappa - phi(b, params) * dot * grad


def svc_control(x, reading: RangeReading, params: ControllerParams) -> ControlOutput:
    """Full sensed feedback law at state ``x``.

    A saturated reading certifies b >= sensor range > eps', so the nominal
    branch applies without touching the (undefined) bearing.
    """
    kappa = nominal(x, params)
    if not reading.in_range:
        return ControlOutput(u=kappa, mode=MODE_NOMINAL, phi=0.0, grad_used=None)
    b = reading.rho_star
    grad = reading.gradient
    blend = phi(b, params)
    dot = float(kappa @ grad)
    if b > params.eps_prime or dot >= 0.0:
        return ControlOutput(u=kappa, mode=MODE_NOMINAL, phi=blend, grad_used=grad)
    u = kappa - blend * dot * grad
    return ControlOutput(u=u, mode=MODE_BLENDED, phi=blend, grad_used=grad)


def discontinuous_control(x, reading: RangeReading, params: ControllerParams) -> np.ndarray:
    """Hard-switch variant: full normal-component removal at b <= eps.

    Provided for A/B comparison; exhibits an output jump of |kappa.grad|
    across the margin.
    """
    kappa = nominal(x, params)
    if not reading.in_range:
        return kappa
    b = reading.rho_star
    grad = reading.gradient
    dot = float(kappa @ grad)
    if b > params.eps or dot >= 0.0:
        return kappa
    return kappa - dot * grad
