"""Numerical verification of the controller's stability claims.

Locates the undesired equilibria (boundary points of the practical free
space collinear with their projection and the target), evaluates the
control Jacobian there, certifies the curvature condition, and aggregates
trajectory-level safety/convergence certificates into a machine-readable
report.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
from scipy.optimize import brentq

from ._engine import api as _api
from .controller import ControllerParams, nominal
from .errors import AmbiguousProjection, NoConvergence, SkeletonInterference
from .geometry import (
    CurvatureVerdict,
    World,
    curvature_condition,
    oriented_distance,
)

log = logging.getLogger(__name__)

# Membership residuals for reported equilibria.
B_RESIDUAL_TOL = 1e-8
ANGLE_RESIDUAL_TOL = 1e-6

# Instability calls need a clearly positive real part.
INSTABILITY_EIG_TOL = 1e-6

CLASS_UNSTABLE = "unstable_confirmed"
CLASS_INCONCLUSIVE = "inconclusive"


@dataclass
class EquilibriumReport:
    """One undesired equilibrium with its local stability evidence.

    ``jacobian_u`` differentiates the margin-constrained local control form
    (the one whose spectrum carries the instability certificate);
    ``jacobian_closed_loop`` differentiates the raw blended closed-loop
    field, whose blending kink at the margin makes its radial entries
    one-sided.  Both share the sign of the largest real part.
    """

    x_bar: np.ndarray
    obstacle_index: int
    lam: float
    g_value: float
    eig_lower_bound: float
    matrix_a: np.ndarray
    jacobian_u: np.ndarray
    jacobian_closed_loop: np.ndarray
    eigenvalues: np.ndarray
    eigenvalues_closed_loop: np.ndarray
    jacobian_symmetry_defect: float
    projection_defect: float
    curvature: CurvatureVerdict
    b_residual: float
    angle_residual: float
    classification: str = CLASS_INCONCLUSIVE


@dataclass
class CertificateSuite:
    """Aggregate numerical certificate for one scenario batch."""

    scenario_label: str
    scenario_hash: str
    safety_passed: Optional[bool]
    min_b: Optional[float]
    safety_threshold: Optional[float]
    lyapunov_passed: Optional[bool]
    max_distance_increase: Optional[float]
    lyapunov_tolerance: float
    convergence_fraction: Optional[float]
    n_runs: int
    n_converged: int
    n_rejected: int
    equilibria: List[EquilibriumReport] = field(default_factory=list)
    runs: List[dict] = field(default_factory=list)

    def to_json(self, indent: int = 2) -> str:
        def eq_dict(r: EquilibriumReport) -> dict:
            return {
                "x_bar": [float(v) for v in r.x_bar],
                "obstacle_index": r.obstacle_index,
                "lambda": r.lam,
                "g_value": r.g_value,
                "eig_lower_bound": r.eig_lower_bound,
                "eigenvalues": [[float(e.real), float(e.imag)] for e in r.eigenvalues],
                "eigenvalues_closed_loop": [
                    [float(e.real), float(e.imag)] for e in r.eigenvalues_closed_loop
                ],
                "jacobian_symmetry_defect": r.jacobian_symmetry_defect,
                "projection_defect": r.projection_defect,
                "curvature": {
                    "holds": r.curvature.holds,
                    "max_eigenvalue": r.curvature.max_eigenvalue,
                    "bound": r.curvature.bound,
                },
                "b_residual": r.b_residual,
                "angle_residual": r.angle_residual,
                "classification": r.classification,
            }

        payload = {
            "schema_version": 1,
            "scenario": {"label": self.scenario_label, "hash": self.scenario_hash},
            "safety": {
                "passed": self.safety_passed,
                "min_b": self.min_b,
                "threshold": self.safety_threshold,
            },
            "lyapunov": {
                "passed": self.lyapunov_passed,
                "max_increase": self.max_distance_increase,
                "tolerance": self.lyapunov_tolerance,
            },
            "convergence": {
                "fraction": self.convergence_fraction,
                "n_runs": self.n_runs,
                "n_converged": self.n_converged,
                "n_rejected": self.n_rejected,
            },
            "equilibria": [eq_dict(r) for r in self.equilibria],
            "runs": self.runs,
        }
        return json.dumps(payload, indent=indent)


def scenario_hash(payload: dict) -> str:
    """Stable hash of a scenario's canonical JSON form."""
    canon = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()[:16]


# ---------------------------------------------------------------------------
# Equilibria search
# ---------------------------------------------------------------------------

def _grad_b(world: World, x: np.ndarray) -> np.ndarray:
    return oriented_distance(world, x).gradient


def _level_retract(world: World, x: np.ndarray, eps: float, iters: int = 60) -> np.ndarray:
    """Move along the distance gradient onto the eps level set."""
    for _ in range(iters):
        b = _api.b_value(world, x)
        if abs(b - eps) < 1e-13:
            break
        x = x + (eps - b) * _grad_b(world, x)
    return x


def _angle_defect(world: World, x: np.ndarray, x_d: np.ndarray) -> float:
    """Angle between (x - x_d) and the distance gradient at x."""
    g = _grad_b(world, x)
    v = x - x_d
    nv = np.linalg.norm(v)
    c = float(np.clip((v @ g) / nv, -1.0, 1.0))
    return math.acos(c)


def _refine_on_level_set(world: World, x: np.ndarray, x_d: np.ndarray, eps: float,
                         max_iter: int = 300):
    """Drive the tangential misalignment of (x - x_d) to zero on the level set.

    Descends the tangential component of the target offset (damped by the
    local geometry), which contracts towards the collinear point behind a
    convex obstacle; each step retracts back to the level set.
    """
    x = _level_retract(world, x, eps)
    for _ in range(max_iter):
        g = _grad_b(world, x)
        v = x - x_d
        tang = v - (v @ g) * g
        t_norm = float(np.linalg.norm(tang))
        if t_norm <= 1e-12 * max(1.0, float(np.linalg.norm(v))):
            break
        step = -min(0.5, 0.4 * eps / t_norm) * tang
        x = _level_retract(world, x + step, eps)
    else:
        raise NoConvergence("level-set alignment did not converge")
    return x


def find_equilibria(world: World, x_d, eps: float) -> List[EquilibriumReport]:
    """Locate the undesired equilibria generated by each interior obstacle.

    Seeds a ray from the target through the obstacle centre, finds the
    eps-level crossing behind the obstacle, then aligns the point on the
    level set until the target offset is parallel to the distance gradient.
    Per-obstacle search failures are logged and skipped; a secondary
    36-seed angular sweep runs when the primary seed stalls.  For ball
    obstacles the analytic location is used to cross-check the solver.
    """
    x_d = np.asarray(x_d, dtype=float)
    reports: List[EquilibriumReport] = []
    for idx, obs in enumerate(world.obstacles):
        try:
            found = _search_obstacle(world, obs, idx, x_d, eps)
        except (NoConvergence, SkeletonInterference) as exc:
            log.warning("equilibrium search for obstacle %d failed: %s", idx, exc)
            found = []
        reports.extend(found)
    return reports


def _search_obstacle(world: World, obs, idx: int, x_d: np.ndarray, eps: float):
    c = obs.center
    direction = c - x_d
    dist_c = float(np.linalg.norm(direction))
    if dist_c < 1e-12:
        raise NoConvergence("target coincides with the obstacle centre")
    e = direction / dist_c

    # bracket the eps crossing beyond the obstacle along the centroid ray
    s_lo = dist_c
    s_hi = dist_c + obs.outer_radius() + eps
    b_at = lambda s: _api.b_value(world, x_d + s * e) - eps
    f_hi = b_at(s_hi)
    grow = 0
    while f_hi < 0.0 and grow < 40:
        s_hi += 0.5 * eps
        f_hi = b_at(s_hi)
        grow += 1
    if f_hi < 0.0:
        raise NoConvergence("no eps-level crossing behind the obstacle")
    s_star = brentq(b_at, s_lo, s_hi, xtol=1e-13)
    seed = x_d + s_star * e

    candidates = []
    try:
        candidates.append(_polish_candidate(world, seed, x_d, eps))
    except (NoConvergence, AmbiguousProjection):
        pass

    need_sweep = not candidates or candidates[0][1] > ANGLE_RESIDUAL_TOL
    if need_sweep:
        for sd in _sweep_seeds(world, obs, eps, 36):
            try:
                candidates.append(_polish_candidate(world, sd, x_d, eps))
            except (NoConvergence, AmbiguousProjection):
                continue

    out = []
    taken: List[np.ndarray] = []
    for x_bar, angle in sorted(candidates, key=lambda t: t[1]):
        if angle > ANGLE_RESIDUAL_TOL:
            continue
        if any(np.linalg.norm(x_bar - t) < 1e-6 for t in taken):
            continue
        res = oriented_distance(world, x_bar)
        if res.obstacle_index != idx:
            raise SkeletonInterference(
                f"candidate of obstacle {idx} projects onto contributor {res.obstacle_index}"
            )
        lam = float(np.linalg.norm(x_bar - x_d))
        if float((x_bar - x_d) @ res.gradient) <= 0.0:
            continue
        taken.append(x_bar)
        out.append((x_bar, angle, lam, res))
    if not out:
        raise NoConvergence("no collinear point met the residual tolerances")
    return [
        _build_report(world, x_bar, idx, x_d, eps, lam, angle)
        for (x_bar, angle, lam, _res) in out
    ]


def _polish_candidate(world: World, seed: np.ndarray, x_d: np.ndarray, eps: float):
    x_bar = _refine_on_level_set(world, seed, x_d, eps)
    return x_bar, _angle_defect(world, x_bar, x_d)


def _sweep_seeds(world: World, obs, eps: float, count: int):
    """Secondary seeds spread on the obstacle's eps-shell."""
    seeds = obs.surface_seeds(count)
    out = []
    for s in seeds:
        g = obs.implicit_gradient(s)
        out.append(s + eps * g / np.linalg.norm(g))
    return out


def analytic_ball_equilibrium(center, radius: float, x_d, eps: float) -> np.ndarray:
    """Closed-form member of the equilibrium set for a ball obstacle."""
    center = np.asarray(center, dtype=float)
    x_d = np.asarray(x_d, dtype=float)
    e = center - x_d
    return center + (radius + eps) * e / np.linalg.norm(e)


# ---------------------------------------------------------------------------
# Control Jacobian at an equilibrium
# ---------------------------------------------------------------------------

def _local_control(world: World, y: np.ndarray, params: ControllerParams) -> np.ndarray:
    """Margin-constrained local control form near a blended equilibrium.

    Uses the exact boundary projection and the squared safety margin in the
    correction gain, matching the restriction of the blended law to the
    margin level set.
    """
    res = oriented_distance(world, y)
    P = res.nearest_point
    g = float((params.target - P) @ (y - P)) / params.eps ** 2 - 1.0
    return -params.gain * ((y - params.target) + g * (y - P))


def closed_loop_field(world: World, y: np.ndarray, params: ControllerParams) -> np.ndarray:
    """Blended feedback law evaluated with ground-truth geometry."""
    res = oriented_distance(world, y)
    kappa = nominal(y, params)
    dot = float(kappa @ res.gradient)
    if res.b > params.eps_prime or dot >= 0.0:
        return kappa
    blend = min(1.0, max(0.0, (params.eps_prime - res.b) / (params.eps_prime - params.eps)))
    return kappa - blend * dot * res.gradient


def control_jacobian(world: World, x_bar, params: ControllerParams,
                     step: float = 1e-6) -> np.ndarray:
    """Central finite-difference Jacobian of the control law at ``x_bar``.

    In the blended regime this differentiates the margin-constrained local
    form (smooth across the margin, so the instability spectrum is
    two-sided); at nominal-branch points it differentiates the closed-loop
    law itself (yielding -k I away from obstacles).
    """
    x_bar = np.asarray(x_bar, dtype=float)
    res = oriented_distance(world, x_bar)
    kappa = nominal(x_bar, params)
    blended = res.b <= params.eps_prime and float(kappa @ res.gradient) < 0.0
    fun = _local_control if blended else closed_loop_field
    return _fd_jacobian(lambda y: fun(world, y, params), x_bar, step)


def _fd_jacobian(fun, x: np.ndarray, step: float) -> np.ndarray:
    n = x.shape[0]
    cols = []
    for j in range(n):
        e = np.zeros(n)
        e[j] = step
        cols.append((fun(x + e) - fun(x - e)) / (2.0 * step))
    return np.stack(cols, axis=1)


def classify_equilibrium(report: EquilibriumReport) -> str:
    """Instability call from the spectrum of the local control Jacobian.

    ``inconclusive`` never claims stability; it only records that no
    clearly positive real part was found.
    """
    max_re = float(np.max(report.eigenvalues.real))
    return CLASS_UNSTABLE if max_re > INSTABILITY_EIG_TOL else CLASS_INCONCLUSIVE


def _build_report(world: World, x_bar: np.ndarray, idx: int, x_d: np.ndarray,
                  eps: float, lam: float, angle: float) -> EquilibriumReport:
    params = ControllerParams(gain=1.0, eps=eps, eps_prime=eps * 1.5 + 1e-9,
                              robot_radius=0.5 * eps, target=x_d)
    res = oriented_distance(world, x_bar)
    P = res.nearest_point
    L = float(np.linalg.norm(x_d - P))
    g_val = -L / eps - 1.0
    r = x_bar - P
    A = np.outer(r, r) / float(r @ r)
    J_loc = control_jacobian(world, x_bar, params)
    J_cl = _fd_jacobian(lambda y: closed_loop_field(world, y, params), x_bar, 1e-6)
    defect = float(np.linalg.norm(J_loc - J_loc.T))
    scale = max(1.0, float(np.linalg.norm(J_loc)))
    if defect <= 1e-4 * scale:
        eigs = np.linalg.eigvalsh(0.5 * (J_loc + J_loc.T)).astype(complex)
    else:
        eigs = np.linalg.eigvals(J_loc)
    eigs_cl = np.linalg.eigvals(J_cl)
    curv = curvature_condition(world, x_bar, x_d, eps)
    b_res = abs(_api.b_value(world, x_bar) - eps)
    report = EquilibriumReport(
        x_bar=x_bar,
        obstacle_index=idx,
        lam=lam,
        g_value=g_val,
        eig_lower_bound=-g_val * L / (eps + L),
        matrix_a=A,
        jacobian_u=J_loc,
        jacobian_closed_loop=J_cl,
        eigenvalues=eigs,
        eigenvalues_closed_loop=eigs_cl,
        jacobian_symmetry_defect=defect,
        projection_defect=curv.jacobian.symmetry_defect,
        curvature=curv,
        b_residual=b_res,
        angle_residual=angle,
    )
    report.classification = classify_equilibrium(report)
    return report


# ---------------------------------------------------------------------------
# Certificates
# ---------------------------------------------------------------------------

LYAPUNOV_TOLERANCE = 1e-9


def certify(scenario, results) -> CertificateSuite:
    """Aggregate run results and equilibrium analysis for one scenario.

    ``results`` is the output of ``simulator.batch_run``; rejected entries
    are excluded from the convergence fraction but recorded.
    """
    run_rows = []
    min_b = math.inf
    max_inc = -math.inf
    n_converged = 0
    n_rejected = 0
    n_valid = 0
    target = scenario.params.target
    for r in results:
        if r.trajectory is None:
            n_rejected += 1
            run_rows.append({
                "index": r.index,
                "status": "rejected",
                "error": r.error,
                "x0": [float(v) for v in np.asarray(r.x0, dtype=float)],
            })
            continue
        traj = r.trajectory
        n_valid += 1
        d = np.linalg.norm(traj.x - target, axis=1)
        inc = float(np.max(np.diff(d))) if len(traj) > 1 else -math.inf
        max_inc = max(max_inc, inc)
        min_b = min(min_b, traj.min_b_observed)
        if traj.terminal_status == "converged":
            n_converged += 1
        run_rows.append({
            "index": r.index,
            "status": traj.terminal_status,
            "min_b": traj.min_b_observed,
            "t_final": float(traj.t[-1]),
            "n_samples": len(traj),
            "x0": [float(v) for v in np.asarray(r.x0, dtype=float)],
        })

    eps = scenario.params.eps
    threshold = eps - scenario.sim_config.safety_log_tolerance
    have_runs = n_valid > 0
    equilibria = find_equilibria(scenario.world, target, eps)
    for rep in equilibria:
        rep.classification = classify_equilibrium(rep)
    return CertificateSuite(
        scenario_label=scenario.label,
        scenario_hash=scenario.hash(),
        safety_passed=(min_b >= threshold) if have_runs else None,
        min_b=min_b if have_runs else None,
        safety_threshold=threshold,
        lyapunov_passed=(max_inc <= LYAPUNOV_TOLERANCE) if have_runs else None,
        max_distance_increase=max_inc if have_runs else None,
        lyapunov_tolerance=LYAPUNOV_TOLERANCE,
        convergence_fraction=(n_converged / n_valid) if have_runs else None,
        n_runs=len(results),
        n_converged=n_converged,
        n_rejected=n_rejected,
        equilibria=equilibria,
        runs=run_rows,
    )
