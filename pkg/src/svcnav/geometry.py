"""Ground-truth geometry of the free space.

Implicit-surface obstacles, oriented (signed) distance, boundary projection,
finite-difference projection Jacobians, and world validity checks.

Conventions
-----------
* Every obstacle exposes an implicit function that is **positive on the free
  side**, zero on its surface and negative inside the obstacle region.  For
  the workspace boundary the "obstacle region" is the outside of the
  workspace, so its implicit function is positive inside the workspace.
* The oriented distance ``b(x)`` is positive in the free space, zero on the
  obstacle surfaces and negative inside obstacles.  Its gradient is the unit
  vector pointing from the nearest boundary point towards ``x`` (away from
  the obstacle) whenever ``x`` is in the free-space interior.
* Contributor indices: interior obstacles are numbered by their position in
  ``World.obstacles`` (0-based); the workspace boundary, when present, gets
  index ``len(World.obstacles)``.

All operations are pure functions of immutable values; per-obstacle surface
seed clouds are cached lazily and never mutated after construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import AmbiguousProjection, DegenerateStep

# Two contributors closer than this are treated as a skeleton tie.
TIE_TOLERANCE = 1e-7

# Iterative projection: convergence tolerance and iteration cap.
PROJECTION_TOL = 1e-10
PROJECTION_MAX_ITER = 200

_KINDS = ("ball", "ellipsoid", "superquartic2d", "superellipse-boundary")

# Coefficient names required per obstacle kind.
_COEFF_KEYS = {
    "ball": ("radius",),
    "ellipsoid": ("a", "b", "c", "r0"),
    "superquartic2d": ("a", "b", "c", "d", "r0"),
    "superellipse-boundary": ("q", "p", "d", "n"),
}


def _as_point(x, dim: int) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != (dim,):
        raise ValueError(f"expected a point of dimension {dim}, got shape {x.shape}")
    return x


@dataclass(frozen=True)
class ImplicitObstacle:
    """One implicit-surface obstacle (or the workspace boundary).

    Supported kinds:

    ``ball``
        ``||x - center|| <= radius`` in any dimension.
    ``ellipsoid``
        3-D family ``a*u^2 + b*v^2 + c*w^2 <= r0^2`` with
        ``(u, v, w) = x - center``.
    ``superquartic2d``
        2-D family ``a*u^2 + b*v^2 + c*u^4 + d*v^4 <= r0``.
    ``superellipse-boundary``
        Workspace boundary: the free region is
        ``q*x1^(2n) + p*x2^(2n) <= d^(2n)`` (2-D only); the obstacle region
        is the outside.

    All shape coefficients must be strictly positive; ``n`` must be a
    positive integer (1 or 2 are supported by the exact ray caster).
    """

    kind: str
    center: np.ndarray
    coeffs: dict

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown obstacle kind {self.kind!r}")
        center = np.asarray(self.center, dtype=float)
        object.__setattr__(self, "center", center)
        missing = [k for k in _COEFF_KEYS[self.kind] if k not in self.coeffs]
        if missing:
            raise ValueError(f"{self.kind} obstacle missing coefficients {missing}")
        for key in _COEFF_KEYS[self.kind]:
            if not self.coeffs[key] > 0:
                raise ValueError(f"{self.kind} coefficient {key!r} must be > 0")
        if self.kind == "superellipse-boundary":
            n = self.coeffs["n"]
            if int(n) != n or n < 1:
                raise ValueError("boundary exponent n must be a positive integer")
        if self.kind == "ellipsoid" and center.shape != (3,):
            raise ValueError("ellipsoid obstacles are 3-D")
        if self.kind in ("superquartic2d", "superellipse-boundary") and center.shape != (2,):
            raise ValueError(f"{self.kind} obstacles are 2-D")

    # -- implicit function (positive on the free side) ----------------------

    @property
    def is_boundary(self) -> bool:
        return self.kind == "superellipse-boundary"

    @property
    def dimension(self) -> int:
        return self.center.shape[0]

    def implicit(self, x) -> float | np.ndarray:
        """Implicit value at ``x`` (batched over leading axes)."""
        x = np.asarray(x, dtype=float)
        u = x - self.center
        c = self.coeffs
        if self.kind == "ball":
            return np.sqrt((u * u).sum(axis=-1)) - c["radius"]
        if self.kind == "ellipsoid":
            q = c["a"] * u[..., 0] ** 2 + c["b"] * u[..., 1] ** 2 + c["c"] * u[..., 2] ** 2
            return q - c["r0"] ** 2
        if self.kind == "superquartic2d":
            q = (
                c["a"] * u[..., 0] ** 2
                + c["b"] * u[..., 1] ** 2
                + c["c"] * u[..., 0] ** 4
                + c["d"] * u[..., 1] ** 4
            )
            return q - c["r0"]
        # superellipse-boundary: positive inside the workspace
        ex = int(2 * c["n"])
        return c["d"] ** ex - c["q"] * u[..., 0] ** ex - c["p"] * u[..., 1] ** ex

    def implicit_gradient(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        u = x - self.center
        c = self.coeffs
        if self.kind == "ball":
            r = math.sqrt(float((u * u).sum()))
            if r == 0.0:
                raise AmbiguousProjection("gradient undefined at the ball centre")
            return u / r
        if self.kind == "ellipsoid":
            return 2.0 * np.array([c["a"] * u[0], c["b"] * u[1], c["c"] * u[2]])
        if self.kind == "superquartic2d":
            return np.array(
                [
                    2 * c["a"] * u[0] + 4 * c["c"] * u[0] ** 3,
                    2 * c["b"] * u[1] + 4 * c["d"] * u[1] ** 3,
                ]
            )
        ex = int(2 * c["n"])
        return np.array(
            [-ex * c["q"] * u[0] ** (ex - 1), -ex * c["p"] * u[1] ** (ex - 1)]
        )

    def implicit_hessian(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        u = x - self.center
        c = self.coeffs
        if self.kind == "ball":
            r = math.sqrt(float((u * u).sum()))
            e = u / r
            return (np.eye(self.dimension) - np.outer(e, e)) / r
        if self.kind == "ellipsoid":
            return 2.0 * np.diag([c["a"], c["b"], c["c"]])
        if self.kind == "superquartic2d":
            return np.diag(
                [
                    2 * c["a"] + 12 * c["c"] * u[0] ** 2,
                    2 * c["b"] + 12 * c["d"] * u[1] ** 2,
                ]
            )
        ex = int(2 * c["n"])
        return np.diag(
            [
                -ex * (ex - 1) * c["q"] * u[0] ** (ex - 2),
                -ex * (ex - 1) * c["p"] * u[1] ** (ex - 2),
            ]
        )

    # -- bounding radii ------------------------------------------------------

    def outer_radius(self) -> float:
        """Radius of a centre ball guaranteed to contain the surface."""
        c = self.coeffs
        if self.kind == "ball":
            return c["radius"]
        if self.kind == "ellipsoid":
            return c["r0"] / math.sqrt(min(c["a"], c["b"], c["c"]))
        if self.kind == "superquartic2d":
            m2 = min(c["a"], c["b"])
            m4 = min(c["c"], c["d"])
            # On the surface: m2*s^2 + (m4/2)*s^4 <= r0 for s = |x - center|.
            z = (-m2 + math.sqrt(m2 * m2 + 2.0 * m4 * c["r0"])) / m4
            return math.sqrt(z)
        # largest radius of the superellipse: the direction minimising
        # q*e1^(2n) + p*e2^(2n); the minimum sits on the diagonal for n > 1
        q, p, n = c["q"], c["p"], int(c["n"])
        if n == 1:
            m = min(q, p)
        else:
            s = p ** (1.0 / (n - 1)) / (q ** (1.0 / (n - 1)) + p ** (1.0 / (n - 1)))
            m = q * s ** n + p * (1.0 - s) ** n
        return c["d"] / m ** (1.0 / (2 * n))

    def inner_radius(self) -> float:
        """Radius of a centre ball guaranteed inside the enclosed region.

        For interior obstacles this is a ball inside the obstacle; for the
        boundary it is a ball inside the workspace.
        """
        c = self.coeffs
        if self.kind == "ball":
            return c["radius"]
        if self.kind == "ellipsoid":
            return c["r0"] / math.sqrt(max(c["a"], c["b"], c["c"]))
        if self.kind == "superquartic2d":
            m2 = max(c["a"], c["b"])
            m4 = max(c["c"], c["d"])
            # a*u^2+...+d*v^4 <= m2*s^2 + m4*s^4, so the surface radius is
            # at least the root of m2*z + m4*z^2 = r0.
            z = (-m2 + math.sqrt(m2 * m2 + 4.0 * m4 * c["r0"])) / (2.0 * m4)
            return math.sqrt(z)
        return c["d"] / max(c["q"], c["p"]) ** (1.0 / (2 * c["n"]))

    # -- dense surface sampling (cached) -------------------------------------

    def surface_seeds(self, count: Optional[int] = None) -> np.ndarray:
        """Dense point cloud on the surface, used to seed projections.

        The families are star-shaped about their centre, so each direction
        carries exactly one surface point, located by bisection on the
        implicit value.
        """
        default_call = count is None
        if default_call:
            cached = getattr(self, "_seed_cache", None)
            if cached is not None:
                return cached
            count = 512 if self.dimension == 2 else 1024
        dirs = _unit_directions(self.dimension, count)
        radii = np.array([self._radial_root(e) for e in dirs])
        seeds = self.center + radii[:, None] * dirs
        if default_call:
            object.__setattr__(self, "_seed_cache", seeds)
        return seeds

    def _radial_root(self, e: np.ndarray) -> float:
        """Surface radius along unit direction ``e`` from the centre."""
        hi = self.outer_radius() * (1.0 + 1e-9)
        f_lo = float(self.implicit(self.center))
        f_hi = float(self.implicit(self.center + hi * e))
        lo = 0.0
        if f_lo == 0.0:
            return 0.0
        if f_lo * f_hi > 0.0:
            # outer_radius is conservative; expand until a sign change shows
            for _ in range(60):
                hi *= 1.5
                f_hi = float(self.implicit(self.center + hi * e))
                if f_lo * f_hi <= 0.0:
                    break
            else:
                raise RuntimeError("no surface crossing along direction")
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            f_mid = float(self.implicit(self.center + mid * e))
            if f_lo * f_mid <= 0.0:
                hi = mid
            else:
                lo = mid
            if hi - lo < 1e-14 * max(1.0, hi):
                break
        return 0.5 * (lo + hi)


def _unit_directions(dim: int, count: int) -> np.ndarray:
    if dim == 2:
        theta = np.linspace(0.0, 2.0 * np.pi, count, endpoint=False)
        return np.stack([np.cos(theta), np.sin(theta)], axis=1)
    # Fibonacci sphere: near-uniform coverage without clustering at poles.
    i = np.arange(count, dtype=float) + 0.5
    z = 1.0 - 2.0 * i / count
    r = np.sqrt(np.maximum(0.0, 1.0 - z * z))
    golden = np.pi * (3.0 - np.sqrt(5.0))
    theta = golden * i
    return np.stack([r * np.cos(theta), r * np.sin(theta), z], axis=1)


@dataclass(frozen=True)
class World:
    """Workspace boundary plus interior obstacles.

    ``reach_h`` is the user-supplied lower bound on the reach of the free
    space; it is cross-checked (by sampled separation estimates) in
    :func:`validate_world`, not computed exactly.
    """

    dimension: int
    obstacles: tuple
    boundary: Optional[ImplicitObstacle] = None
    reach_h: float = 1.0

    def __post_init__(self):
        if self.dimension not in (2, 3):
            raise ValueError("dimension must be 2 or 3")
        object.__setattr__(self, "obstacles", tuple(self.obstacles))
        for obs in self.obstacles:
            if obs.is_boundary:
                raise ValueError("boundary obstacle passed in the interior list")
            if obs.dimension != self.dimension:
                raise ValueError("obstacle dimension mismatch")
        if self.boundary is not None:
            if not self.boundary.is_boundary:
                raise ValueError("boundary must be a superellipse-boundary obstacle")
            if self.dimension != 2:
                raise ValueError("a workspace boundary is only supported in 2-D")
        if not self.reach_h > 0:
            raise ValueError("reach_h must be > 0")

    def contributors(self) -> list:
        """(index, obstacle) pairs; the boundary comes last when present."""
        out = list(enumerate(self.obstacles))
        if self.boundary is not None:
            out.append((len(self.obstacles), self.boundary))
        return out

    def implicit_values(self, x) -> np.ndarray:
        """Implicit values of every contributor at ``x`` (free side > 0)."""
        return np.array([obs.implicit(x) for _, obs in self.contributors()])

    def sampling_box(self, margin: float = 0.0) -> np.ndarray:
        """Axis-aligned box covering the free space, shape ``(2, dim)``."""
        if self.boundary is not None:
            r = self.boundary.outer_radius() + margin
            lo = self.boundary.center - r
            hi = self.boundary.center + r
        else:
            los, his = [], []
            for obs in self.obstacles:
                r = obs.outer_radius()
                los.append(obs.center - r)
                his.append(obs.center + r)
            lo = np.min(los, axis=0) - (2.0 + margin)
            hi = np.max(his, axis=0) + (2.0 + margin)
        return np.stack([lo, hi])


@dataclass(frozen=True)
class OrientedDistanceResult:
    """Signed distance to the obstacle region with projection data."""

    b: float
    nearest_point: np.ndarray
    gradient: np.ndarray
    obstacle_index: int


@dataclass(frozen=True)
class ProjectionJacobian:
    """Finite-difference Jacobian of the boundary projection map."""

    matrix: np.ndarray
    evaluation_point: np.ndarray
    step: float
    symmetry_defect: float


@dataclass(frozen=True)
class CurvatureVerdict:
    """Strong-convexity check at a point against its generating obstacle."""

    holds: bool
    max_eigenvalue: float
    bound: float
    jacobian: ProjectionJacobian


@dataclass
class ValidationReport:
    violations: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.violations

    def add(self, code: str, message: str):
        self.violations.append(f"{code}: {message}")


# ---------------------------------------------------------------------------
# Projection onto one obstacle surface
# ---------------------------------------------------------------------------

def _newton_retract(obs: ImplicitObstacle, y: np.ndarray) -> np.ndarray:
    """Pull ``y`` back onto the surface along the implicit gradient."""
    for _ in range(12):
        v = float(obs.implicit(y))
        if abs(v) < 1e-14:
            break
        g = obs.implicit_gradient(y)
        gg = float(g @ g)
        if gg == 0.0:
            break
        y = y - (v / gg) * g
    return y

def _kkt_polish(obs: ImplicitObstacle, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Newton iterations on the stationarity system (y - x = mu * grad f)."""
    n = x.shape[0]
    g = obs.implicit_gradient(y)
    mu = float((y - x) @ g) / max(float(g @ g), 1e-300)
    z = np.concatenate([y, [mu]])
    for _ in range(12):
        y = z[:n]
        mu = z[n]
        g = obs.implicit_gradient(y)
        H = obs.implicit_hessian(y)
        F = np.concatenate([y - x - mu * g, [float(obs.implicit(y))]])
        if np.linalg.norm(F) < 1e-13 * (1.0 + np.linalg.norm(y - x)):
            break
        J = np.zeros((n + 1, n + 1))
        J[:n, :n] = np.eye(n) - mu * H
        J[:n, n] = -g
        J[n, :n] = g
        try:
            z = z - np.linalg.solve(J, F)
        except np.linalg.LinAlgError:
            break
    return z[:n]


def project_to_obstacle(obs: ImplicitObstacle, x: np.ndarray):
    """Nearest point on the obstacle surface via projected-gradient descent.

    Seeded from the cached dense surface sampling, then refined by
    projected-gradient steps (tolerance ``PROJECTION_TOL``, at most
    ``PROJECTION_MAX_ITER`` iterations) and a final Newton polish of the
    stationarity system.

    Returns ``(distance, point, second_point)`` where ``second_point`` is a
    distinct near-optimal projection when one exists (skeleton evidence),
    else ``None``.  The interior families are strictly convex, so a query
    from the free side has a unique projection and a single seed suffices;
    multiple seeds are probed for boundary obstacles and for points inside
    an obstacle, where the skeleton may interfere.
    """
    seeds = obs.surface_seeds()
    d2 = ((seeds - x) ** 2).sum(axis=1)
    order = np.argsort(d2)

    r_scale = obs.outer_radius()

    def refine(y0: np.ndarray) -> np.ndarray:
        y = y0.copy()
        for _ in range(PROJECTION_MAX_ITER):
            r = y - x
            g = obs.implicit_gradient(y)
            gn = g / np.linalg.norm(g)
            tangential = r - (r @ gn) * gn
            t_norm = float(np.linalg.norm(tangential))
            if t_norm <= PROJECTION_TOL * max(1.0, np.linalg.norm(r)):
                break
            # keep surface moves below the curvature scale of the obstacle
            eta = min(1.0, 0.3 * r_scale / t_norm)
            base = float(r @ r)
            moved = False
            for _ in range(12):
                trial = _newton_retract(obs, y - eta * tangential)
                if float((trial - x) @ (trial - x)) <= base:
                    step = float(np.linalg.norm(trial - y))
                    y = trial
                    moved = step > 1e-13 * max(1.0, r_scale)
                    break
                eta *= 0.5
            if not moved:
                break
        return _kkt_polish(obs, x, y)

    unique_by_convexity = (not obs.is_boundary) and float(obs.implicit(x)) > 0.0
    min_sep = 0.05 * r_scale
    best_seed_d = math.sqrt(float(d2[order[0]]))
    # rival seeds can shift by at most the sampling quantisation when
    # refined, so seeds clearly farther than the best cannot produce a tie
    rival_cut = best_seed_d + 0.05 * r_scale
    chosen = [seeds[order[0]]]
    if not unique_by_convexity:
        for idx in order[1:]:
            if len(chosen) >= 4:
                break
            if math.sqrt(float(d2[idx])) > rival_cut:
                break
            s = seeds[idx]
            if all(np.linalg.norm(s - t) > 4.0 * min_sep for t in chosen):
                chosen.append(s)

    points = [refine(s) for s in chosen]
    dists = [float(np.linalg.norm(p - x)) for p in points]
    ranked = np.argsort(dists)
    best, best_d = points[ranked[0]], dists[ranked[0]]
    for k in ranked[1:]:
        if np.linalg.norm(points[k] - best) > min_sep:
            if abs(dists[k] - best_d) <= TIE_TOLERANCE:
                return best_d, best, points[k]
            break
    return best_d, best, None


def signed_distance_to_obstacle(obs: ImplicitObstacle, x: np.ndarray):
    """(signed distance, nearest point, rival-or-None) for one contributor."""
    d, p, rival = project_to_obstacle(obs, x)
    sign = 1.0 if float(obs.implicit(x)) >= 0.0 else -1.0
    return sign * d, p, rival


# ---------------------------------------------------------------------------
# World-level operations
# ---------------------------------------------------------------------------

def _contributor_bounds(obs: ImplicitObstacle, x: np.ndarray):
    """Cheap (lower, upper) bounds on the distance from ``x`` to the surface."""
    r = float(np.linalg.norm(x - obs.center))
    if obs.is_boundary:
        # Valid while x is inside the inscribed ball of the workspace.
        return obs.inner_radius() - r, obs.outer_radius() - r
    return r - obs.outer_radius(), r - obs.inner_radius()


def oriented_distance_value(world: World, x) -> float:
    """Total variant of :func:`oriented_distance` returning only ``b``.

    Well defined even on the skeleton (the minimum needs no unique
    projection); used for safety logging and start validation.
    """
    x = _as_point(x, world.dimension)
    return min(
        signed_distance_to_obstacle(obs, x)[0] for _, obs in _active_contributors(world, x)
    )


def _active_contributors(world: World, x: np.ndarray):
    """Contributors that can own (or tie for) the minimum signed distance."""
    contributors = world.contributors()
    values = world.implicit_values(x)
    if np.any(values <= 0.0):
        return contributors
    bounds = [_contributor_bounds(obs, x) for _, obs in contributors]
    cutoff = min(ub for _, ub in bounds) + max(TIE_TOLERANCE, 1e-6)
    return [c for c, (lb, _) in zip(contributors, bounds) if lb <= cutoff]


def oriented_distance(world: World, x) -> OrientedDistanceResult:
    """Signed distance to the obstacle region with nearest point and gradient.

    Raises :class:`AmbiguousProjection` when two contributors (or two sheets
    of one contributor) are equidistant within ``TIE_TOLERANCE``; the
    exception carries the candidates so callers may tie-break.
    """
    x = _as_point(x, world.dimension)
    entries = []
    for idx, obs in _active_contributors(world, x):
        b, p, rival = signed_distance_to_obstacle(obs, x)
        entries.append((b, idx, p))
        if rival is not None:
            entries.append((b, idx, rival))
    entries.sort(key=lambda e: e[0])
    b, idx, p = entries[0]
    if len(entries) > 1:
        b2, idx2, p2 = entries[1]
        distinct = np.linalg.norm(p2 - p) > 1e-6
        if distinct and abs(b2 - b) <= TIE_TOLERANCE:
            raise AmbiguousProjection(
                f"projection tie between contributors {idx} and {idx2}",
                candidates=[(b, idx, p), (b2, idx2, p2)],
            )
    delta = x - p
    dist = np.linalg.norm(delta)
    if dist == 0.0:
        # On the surface the one-sided normal is the implicit gradient.
        g = dict(world.contributors())[idx].implicit_gradient(x)
        grad = g / np.linalg.norm(g)
    else:
        grad = delta / dist if b >= 0 else -delta / dist
    return OrientedDistanceResult(b=float(b), nearest_point=p, gradient=grad, obstacle_index=idx)


def default_fd_step(b: float) -> float:
    """Finite-difference step balancing truncation and cancellation."""
    return max(1e-5, 1e-4 * abs(b))


def projection_jacobian(world: World, x, step: Optional[float] = None) -> ProjectionJacobian:
    """Central finite-difference Jacobian of the boundary-projection map.

    Raises :class:`DegenerateStep` when a probe point projects onto a
    different contributor (the probe crossed the skeleton).
    """
    x = _as_point(x, world.dimension)
    base = oriented_distance(world, x)
    if step is None:
        step = default_fd_step(base.b)
    n = world.dimension
    cols = []
    for j in range(n):
        e = np.zeros(n)
        e[j] = step
        try:
            plus = oriented_distance(world, x + e)
            minus = oriented_distance(world, x - e)
        except AmbiguousProjection as exc:
            raise DegenerateStep(f"probe at axis {j} hit the skeleton") from exc
        if plus.obstacle_index != base.obstacle_index or minus.obstacle_index != base.obstacle_index:
            raise DegenerateStep(f"probe at axis {j} changed contributor")
        jump = max(
            np.linalg.norm(plus.nearest_point - base.nearest_point),
            np.linalg.norm(minus.nearest_point - base.nearest_point),
        )
        if jump > 1000.0 * step:
            raise DegenerateStep(f"projection jump {jump:.3g} for step {step:.3g}")
        cols.append((plus.nearest_point - minus.nearest_point) / (2.0 * step))
    J = np.stack(cols, axis=1)
    defect = float(np.linalg.norm(J - J.T))
    return ProjectionJacobian(matrix=J, evaluation_point=x, step=step, symmetry_defect=defect)


def curvature_condition(world: World, x, x_d, eps: float) -> CurvatureVerdict:
    """Strong-convexity test of the projection Jacobian at ``x``.

    Compares the largest eigenvalue of the (symmetrized) projection Jacobian
    against ``L / (eps + L)`` with ``L`` the distance from the target to the
    projection of ``x``.
    """
    x = _as_point(x, world.dimension)
    x_d = _as_point(x_d, world.dimension)
    res = oriented_distance(world, x)
    pj = projection_jacobian(world, x)
    sym = 0.5 * (pj.matrix + pj.matrix.T)
    max_eig = float(np.linalg.eigvalsh(sym)[-1])
    L = float(np.linalg.norm(x_d - res.nearest_point))
    bound = L / (eps + L)
    return CurvatureVerdict(holds=max_eig < bound, max_eigenvalue=max_eig, bound=bound, jacobian=pj)


# ---------------------------------------------------------------------------
# World validation
# ---------------------------------------------------------------------------

def _pair_min_distance(a: ImplicitObstacle, b: ImplicitObstacle) -> float:
    """Sampled minimum surface-to-surface distance, locally refined."""
    if a.kind == "ball" and b.kind == "ball":
        return float(
            np.linalg.norm(a.center - b.center) - a.coeffs["radius"] - b.coeffs["radius"]
        )
    pa = a.surface_seeds()
    pb = b.surface_seeds()
    # Nearest sampled pair, then alternate exact projections to tighten it.
    d2 = ((pa[:, None, :] - pb[None, :, :]) ** 2).sum(axis=2)
    i, j = np.unravel_index(np.argmin(d2), d2.shape)
    ya, yb = pa[i], pb[j]
    for _ in range(8):
        _, ya, _ = project_to_obstacle(a, yb)
        _, yb, _ = project_to_obstacle(b, ya)
    return float(np.linalg.norm(ya - yb))


def validate_world(world: World, params, scan_config=None) -> ValidationReport:
    """Check margin ordering, sensor coverage and obstacle separation.

    ``params`` is a :class:`svcnav.controller.ControllerParams`;
    ``scan_config`` (optional) supplies the sensor range for the coverage
    rule.  The report carries violations instead of raising.
    """
    report = ValidationReport()
    h = world.reach_h
    R, eps, eps_p = params.robot_radius, params.eps, params.eps_prime
    if not 0 < R:
        report.add("margin", f"robot radius must be positive, got {R}")
    if not R < eps:
        report.add("margin", f"R < eps fails ({R} >= {eps})")
    if not eps < eps_p:
        report.add("margin", f"eps < eps' fails ({eps} >= {eps_p})")
    if not eps_p <= h:
        report.add("margin", f"eps' <= h fails ({eps_p} > {h})")
    if scan_config is not None and not scan_config.range > eps_p:
        report.add("sensor", f"sensor range must exceed eps' ({scan_config.range} <= {eps_p})")

    contributors = world.contributors()
    for ai in range(len(contributors)):
        for bi in range(ai + 1, len(contributors)):
            ia, a = contributors[ai]
            ib, b = contributors[bi]
            gap = _pair_min_distance(a, b)
            if not gap > 2.0 * h:
                report.add(
                    "separation",
                    f"separation <= 2h between contributors {ia} and {ib} "
                    f"(gap {gap:.6g}, 2h = {2 * h:.6g})",
                )

    if world.boundary is not None:
        for idx, obs in enumerate(world.obstacles):
            if float(world.boundary.implicit(obs.center)) <= 0.0:
                report.add("containment", f"obstacle {idx} centre outside the workspace")
            seeds = obs.surface_seeds()
            if np.min(world.boundary.implicit(seeds)) <= 0.0:
                report.add("containment", f"obstacle {idx} surface leaves the workspace")

    target = getattr(params, "target", None)
    if target is not None:
        b_target = oriented_distance_value(world, target)
        if not b_target > eps:
            report.add(
                "target",
                f"target must lie in the interior of the practical free space "
                f"(b = {b_target:.6g} <= eps = {eps})",
            )
    return report
