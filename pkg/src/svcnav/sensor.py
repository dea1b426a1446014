"""Simulated limited-range scanner.

2-D scans sweep a uniform polar fan; 3-D scans sweep a full theta x phi
spherical grid (theta-major sample order, poles included).  The scan is the
only information the controller may use: downstream code sees the minimum
range and its bearing.

Ray ranges are the first zero crossing of any obstacle implicit function
along the ray, clipped at the sensor range.  Two interchangeable root
searches are provided: ``exact`` (closed-form first root of the per-obstacle
ray polynomial, the default) and ``march`` (fixed-step marching with
bisection refinement to ``hit_tolerance``).  Both agree to ``hit_tolerance``
away from grazing incidence; marching may miss a graze thinner than one
step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, TextIO

import numpy as np

from ._engine import api as _api
from .errors import InsideObstacle, OutOfRange
from .geometry import World

DEFAULT_RAYS_2D = 720
DEFAULT_GRID_3D = (180, 90)
DEFAULT_HIT_TOLERANCE = 1e-6


@dataclass(frozen=True)
class ScanConfig:
    """Fan geometry and ray-casting numerics.

    ``march_step`` defaults to 1% of the range; it must stay well above
    ``hit_tolerance`` (coarse march, fine bisection).
    """

    range: float
    rays_2d: int = DEFAULT_RAYS_2D
    grid_3d: tuple = DEFAULT_GRID_3D
    march_step: Optional[float] = None
    hit_tolerance: float = DEFAULT_HIT_TOLERANCE
    method: str = "exact"

    def __post_init__(self):
        if not self.range > 0:
            raise ValueError("sensor range must be positive")
        if self.rays_2d < 8:
            raise ValueError("need at least 8 rays")
        n_theta, n_phi = self.grid_3d
        if n_theta < 8 or n_phi < 5:
            raise ValueError("3-D grid too coarse")
        if self.march_step is None:
            object.__setattr__(self, "march_step", 0.01 * self.range)
        if not self.march_step >= 10.0 * self.hit_tolerance:
            raise ValueError("march_step must be at least 10x hit_tolerance")
        if self.method not in ("exact", "march"):
            raise ValueError(f"unknown ray-cast method {self.method!r}")

    def angles_2d(self) -> np.ndarray:
        return 2.0 * np.pi * np.arange(self.rays_2d) / self.rays_2d

    def angles_3d(self):
        n_theta, n_phi = self.grid_3d
        theta = 2.0 * np.pi * np.arange(n_theta) / n_theta
        phi = -0.5 * np.pi + np.pi * np.arange(n_phi) / (n_phi - 1)
        return theta, phi


@dataclass(frozen=True)
class Scan:
    """One sensor return: per-ray ranges in [0, range] plus saturation flags.

    ``theta`` has one entry per sample; ``phi`` is None for 2-D scans.
    Sample order is fan order: 2-D by polar angle, 3-D theta-major.
    """

    origin: np.ndarray
    theta: np.ndarray
    phi: Optional[np.ndarray]
    rho: np.ndarray
    saturated: np.ndarray
    range: float

    def __len__(self) -> int:
        return self.rho.shape[0]


@dataclass(frozen=True)
class RangeReading:
    """Minimum range and bearing extracted from a scan."""

    rho_star: float
    bearing: tuple
    in_range: bool
    _gradient: np.ndarray = field(repr=False)

    @property
    def gradient(self) -> np.ndarray:
        """Bearing-derived estimate of the oriented-distance gradient.

        Undefined (raises) on a saturated reading.
        """
        if not self.in_range:
            raise OutOfRange("gradient undefined: all rays saturated")
        return self._gradient


def scan(world: World, x, config: ScanConfig) -> Scan:
    """Cast the full fan from ``x``.

    Raises :class:`InsideObstacle` when any obstacle implicit function is
    non-positive at the origin.
    """
    x = np.asarray(x, dtype=float)
    values = world.implicit_values(x)
    if np.any(values <= 0.0):
        raise InsideObstacle(f"scan origin {x} lies inside an obstacle region")
    rho, sat = _api.full_scan(world, x, config)
    if world.dimension == 2:
        theta = config.angles_2d()
        phi = None
    else:
        th, ph = config.angles_3d()
        theta = np.repeat(th, len(ph))
        phi = np.tile(ph, len(th))
    return Scan(origin=x, theta=theta, phi=phi, rho=rho, saturated=sat,
                range=config.range)


def min_range(s: Scan) -> RangeReading:
    """Minimum-range sample of a scan (ties: lowest sample index).

    The gradient estimate follows the bearing of the winning ray: in 2-D
    ``(-cos t*, -sin t*)``, in 3-D
    ``-(cos t* cos p*, sin t* cos p*, sin p*)``.
    """
    if len(s) == 0:
        raise ValueError("empty scan")
    j = int(np.argmin(s.rho))
    rho_star = float(s.rho[j])
    in_range = bool(rho_star < s.range) and not bool(s.saturated[j])
    t = float(s.theta[j])
    if s.phi is None:
        bearing = (t,)
        grad = np.array([-math.cos(t), -math.sin(t)])
    else:
        p = float(s.phi[j])
        bearing = (t, p)
        grad = -np.array([math.cos(t) * math.cos(p),
                          math.sin(t) * math.cos(p),
                          math.sin(p)])
    return RangeReading(rho_star=rho_star, bearing=bearing, in_range=in_range,
                        _gradient=grad)


def oriented_distance_from_reading(reading: RangeReading, robot_radius: float) -> float:
    """Distance estimate for the controller: the raw minimum range.

    The robot body is absorbed by the safety margin (eps > R), so no radius
    correction is applied here.
    """
    if not reading.in_range:
        raise OutOfRange("no obstacle within sensor range")
    return reading.rho_star


def scan_to_csv(s: Scan, stream: TextIO):
    """Dump a scan as CSV: ``theta[,phi],rho,saturated``."""
    if s.phi is None:
        stream.write("theta,rho,saturated\n")
        for j in range(len(s)):
            stream.write(f"{s.theta[j]:.17g},{s.rho[j]:.17g},{int(s.saturated[j])}\n")
    else:
        stream.write("theta,phi,rho,saturated\n")
        for j in range(len(s)):
            stream.write(
                f"{s.theta[j]:.17g},{s.phi[j]:.17g},{s.rho[j]:.17g},{int(s.saturated[j])}\n"
            )
