"""Array packing of worlds and scan fans for the compiled kernels.

Obstacle kind codes: 0 = ball, 1 = ellipsoid, 2 = superquartic2d,
3 = superellipse-boundary.  Parameter rows (width 6):

* ball:       [radius, 0, 0, 0, 0, 0]
* ellipsoid:  [a, b, c, r0^2, 0, 0]
* quartic:    [a, b, c, d, r0, 0]
* boundary:   [q, p, d^(2n), 2n, 0, 0]
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..geometry import World

KIND_BALL = 0
KIND_ELLIPSOID = 1
KIND_QUARTIC = 2
KIND_BOUNDARY = 3

_KIND_CODES = {
    "ball": KIND_BALL,
    "ellipsoid": KIND_ELLIPSOID,
    "superquartic2d": KIND_QUARTIC,
    "superellipse-boundary": KIND_BOUNDARY,
}


@dataclass(frozen=True)
class WorldPack:
    """Flat-array view of a world plus the scan fan geometry."""

    dim: int
    kinds: np.ndarray       # (K,) int64
    centers: np.ndarray     # (K, 3) float64
    prms: np.ndarray        # (K, 6) float64
    r_out: np.ndarray       # (K,) circumscribed radius (boundary: of the curve)
    r_in: np.ndarray        # (K,) inscribed radius
    dirs: np.ndarray        # (N, 3) unit ray directions
    n_theta: int            # fan resolution (2-D: N, 3-D: theta count)
    n_phi: int              # 0 in 2-D, phi count in 3-D

    @property
    def n_rays(self) -> int:
        return self.dirs.shape[0]


def fan_directions(dim: int, rays_2d: int, grid_3d):
    """Deterministic ray fan: uniform polar angles (2-D) or a full
    theta x phi spherical grid (3-D, poles included, theta-major order)."""
    if dim == 2:
        theta = 2.0 * np.pi * np.arange(rays_2d) / rays_2d
        d = np.zeros((rays_2d, 3))
        d[:, 0] = np.cos(theta)
        d[:, 1] = np.sin(theta)
        return d, rays_2d, 0
    n_theta, n_phi = grid_3d
    theta = 2.0 * np.pi * np.arange(n_theta) / n_theta
    phi = -0.5 * np.pi + np.pi * np.arange(n_phi) / (n_phi - 1)
    d = np.zeros((n_theta * n_phi, 3))
    for i in range(n_theta):
        ct, st = np.cos(theta[i]), np.sin(theta[i])
        rows = slice(i * n_phi, (i + 1) * n_phi)
        d[rows, 0] = ct * np.cos(phi)
        d[rows, 1] = st * np.cos(phi)
        d[rows, 2] = np.sin(phi)
    return d, n_theta, n_phi


def pack_world(world: World, rays_2d: int = 720, grid_3d=(180, 90)) -> WorldPack:
    contributors = world.contributors()
    K = len(contributors)
    kinds = np.zeros(K, dtype=np.int64)
    centers = np.zeros((K, 3))
    prms = np.zeros((K, 6))
    r_out = np.zeros(K)
    r_in = np.zeros(K)
    for row, (_, obs) in enumerate(contributors):
        kinds[row] = _KIND_CODES[obs.kind]
        centers[row, : world.dimension] = obs.center
        c = obs.coeffs
        if obs.kind == "ball":
            prms[row, 0] = c["radius"]
        elif obs.kind == "ellipsoid":
            prms[row, :4] = [c["a"], c["b"], c["c"], c["r0"] ** 2]
        elif obs.kind == "superquartic2d":
            prms[row, :5] = [c["a"], c["b"], c["c"], c["d"], c["r0"]]
        else:
            ex = int(2 * c["n"])
            if ex not in (2, 4):
                raise ValueError("exact ray casting supports boundary exponent n in {1, 2}")
            prms[row, :4] = [c["q"], c["p"], c["d"] ** ex, float(ex)]
        r_out[row] = obs.outer_radius()
        r_in[row] = obs.inner_radius()
    dirs, n_theta, n_phi = fan_directions(world.dimension, rays_2d, grid_3d)
    return WorldPack(
        dim=world.dimension,
        kinds=kinds,
        centers=centers,
        prms=prms,
        r_out=r_out,
        r_in=r_in,
        dirs=dirs,
        n_theta=n_theta,
        n_phi=n_phi,
    )
