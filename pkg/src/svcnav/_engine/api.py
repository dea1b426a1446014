"""Python-facing wrappers around the compiled kernels.

Packs are cached on the (immutable) World instance per fan resolution, so
repeated calls against the same world pay the packing cost once.
"""

from __future__ import annotations

import numpy as np

from ..geometry import World
from . import kernels as k
from .pack import WorldPack, pack_world

_METHOD_CODES = {"exact": k.METHOD_EXACT, "march": k.METHOD_MARCH}

STATUS_NAMES = {
    k.STATUS_CONVERGED: "converged",
    k.STATUS_TIMEOUT: "timeout",
    k.STATUS_BREACH: "safety_breach",
    k.STATUS_SENSOR: "sensor_error",
    k.STATUS_NONFINITE: "nonfinite",
    k.STATUS_ORACLE: "oracle_failure",
}


def get_pack(world: World, rays_2d: int = 720, grid_3d=(180, 90)) -> WorldPack:
    key = (rays_2d, tuple(grid_3d))
    cache = getattr(world, "_pack_cache", None)
    if cache is None:
        cache = {}
        object.__setattr__(world, "_pack_cache", cache)
    pk = cache.get(key)
    if pk is None:
        pk = pack_world(world, rays_2d=rays_2d, grid_3d=grid_3d)
        cache[key] = pk
    return pk


def _pad3(x) -> np.ndarray:
    out = np.zeros(3)
    x = np.asarray(x, dtype=float)
    out[: x.shape[0]] = x
    return out


def _scan_args(config):
    method = _METHOD_CODES[config.method]
    return method, config.march_step, config.hit_tolerance


def full_scan(world: World, x, config):
    """(rho, saturated) over the whole fan of ``config``."""
    pk = get_pack(world, config.rays_2d, config.grid_3d)
    p = _pad3(x)
    rho = np.empty(pk.n_rays)
    sat = np.empty(pk.n_rays, dtype=bool)
    method, mstep, mtol = _scan_args(config)
    k.scan_all(pk.kinds, pk.centers, pk.prms, pk.r_out, pk.r_in, pk.dirs,
               p[0], p[1], p[2], config.range, method, mstep, mtol, rho, sat)
    return rho, sat


def min_scan(world: World, x, config):
    """Exact (rho*, ray index) of the fan minimum; index -1 when saturated."""
    pk = get_pack(world, config.rays_2d, config.grid_3d)
    p = _pad3(x)
    method, mstep, mtol = _scan_args(config)
    return k.min_scan(pk.kinds, pk.centers, pk.prms, pk.r_out, pk.r_in, pk.dirs,
                      pk.n_theta, pk.n_phi, world.dimension,
                      p[0], p[1], p[2], config.range, method, mstep, mtol)


def b_value(world: World, x) -> float:
    """Fast oracle signed distance (cold start)."""
    pk = get_pack(world)
    p = _pad3(x)
    K = pk.kinds.shape[0]
    warm = np.zeros((K, 3))
    warm_ok = np.zeros(K, dtype=np.bool_)
    b, ok = k.world_b(pk.kinds, pk.centers, pk.prms, pk.r_out, pk.r_in,
                      p[0], p[1], p[2], warm, warm_ok)
    if not ok:
        raise RuntimeError("distance oracle failed to converge")
    return b


def field(world: World, x, params, scan_config, inner: bool = False):
    """One closed-loop control evaluation.

    Returns (u, mode, phi, b_log, status) with ``u`` trimmed to the world
    dimension.
    """
    pk = get_pack(world, scan_config.rays_2d, scan_config.grid_3d)
    p = _pad3(x)
    xd = _pad3(params.target)
    method, mstep, mtol = _scan_args(scan_config)
    ux, uy, uz, mode, phi, b_log, status = k._field(
        pk.kinds, pk.centers, pk.prms, pk.r_out, pk.r_in, pk.dirs,
        pk.n_theta, pk.n_phi, world.dimension,
        p[0], p[1], p[2], xd[0], xd[1], xd[2],
        params.gain, params.eps, params.eps_prime, scan_config.range,
        method, mstep, mtol, inner)
    u = np.array([ux, uy, uz])[: world.dimension]
    return u, mode, phi, b_log, status


def run(world: World, x0, params, scan_config, sim_config):
    """Integrate one closed-loop run; returns a dict of trimmed sample arrays."""
    pk = get_pack(world, scan_config.rays_2d, scan_config.grid_3d)
    p0 = _pad3(x0)
    xd = _pad3(params.target)
    method, mstep, mtol = _scan_args(scan_config)
    n_max = int(round(sim_config.t_max / sim_config.dt))
    out_x = np.empty((n_max + 1, 3))
    out_u = np.empty((n_max + 1, 3))
    out_b = np.empty(n_max + 1)
    out_mode = np.empty(n_max + 1, dtype=np.int8)
    out_phi = np.empty(n_max + 1)
    n, status, min_b = k.integrate_run(
        pk.kinds, pk.centers, pk.prms, pk.r_out, pk.r_in, pk.dirs,
        pk.n_theta, pk.n_phi, world.dimension,
        p0, xd, params.gain, params.eps, params.eps_prime, scan_config.range,
        method, mstep, mtol,
        sim_config.dt, n_max, sim_config.integrator == "rk4",
        sim_config.goal_tolerance, sim_config.safety_log_tolerance,
        out_x, out_u, out_b, out_mode, out_phi)
    dim = world.dimension
    return {
        "t": sim_config.dt * np.arange(n),
        "x": out_x[:n, :dim].copy(),
        "u": out_u[:n, :dim].copy(),
        "b": out_b[:n].copy(),
        "mode": out_mode[:n].copy(),
        "phi": out_phi[:n].copy(),
        "status": STATUS_NAMES[status],
        "min_b": min_b,
    }
