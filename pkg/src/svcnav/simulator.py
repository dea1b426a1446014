"""Closed-loop integration with the sensor in the loop.

``simulate`` drives the compiled engine: every integration stage performs a
fresh scan -> minimum range -> control evaluation (RK4 re-senses at all four
stages).  Safety is logged against the ground-truth oriented distance, not
the sensor estimate, so the safety record does not inherit sensor
quantisation error.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import List, Optional, TextIO

import numpy as np

from ._engine import api as _api
from .controller import MODE_BLENDED, MODE_NOMINAL, ControlOutput, ControllerParams
from .errors import InsideObstacle, InvalidStart, NoConvergence, NonFiniteState, SensorError
from .geometry import World
from .sensor import ScanConfig

_MODE_NAMES = (MODE_NOMINAL, MODE_BLENDED)

TERMINAL_STATUSES = ("converged", "timeout", "safety_breach", "sensor_error")


@dataclass(frozen=True)
class SimConfig:
    """Integration scheme and termination thresholds."""

    dt: float = 1e-3
    t_max: float = 60.0
    integrator: str = "rk4"
    goal_tolerance: float = 1e-2
    safety_log_tolerance: float = 1e-3

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not self.t_max > 0:
            raise ValueError("t_max must be positive")
        if self.integrator not in ("euler", "rk4"):
            raise ValueError(f"unknown integrator {self.integrator!r}")
        if not self.goal_tolerance > 0:
            raise ValueError("goal_tolerance must be positive")


@dataclass
class Trajectory:
    """Sample record of one closed-loop run (row i is t = i*dt).

    ``b`` holds the sensor-side distance estimate used by the controller
    (the sensor range value when the reading saturated); ``min_b_observed``
    is the ground-truth minimum oriented distance over the run.
    """

    t: np.ndarray
    x: np.ndarray
    u: np.ndarray
    b: np.ndarray
    mode: np.ndarray          # int8, indexes _MODE_NAMES
    phi: np.ndarray
    terminal_status: str
    min_b_observed: float

    def __len__(self) -> int:
        return self.t.shape[0]

    @property
    def final_state(self) -> np.ndarray:
        return self.x[-1]

    def mode_names(self) -> List[str]:
        return [_MODE_NAMES[m] for m in self.mode]


@dataclass(frozen=True)
class RunResult:
    """One batch entry; ``trajectory`` is None when the start was rejected."""

    index: int
    x0: np.ndarray
    trajectory: Optional[Trajectory]
    error: Optional[str] = None


def step(world: World, x, params: ControllerParams, scan_config: ScanConfig,
         sim_config: SimConfig):
    """One integration step; returns (x_next, ControlOutput of the state).

    RK4 re-evaluates the fully sensed closed-loop field at each stage.
    """
    x = np.asarray(x, dtype=float)
    dt = sim_config.dt

    def f(point, inner):
        u, mode, phi, b_log, status = _api.field(world, point, params, scan_config, inner)
        if status != 0:
            raise SensorError(InsideObstacle(f"stage point {point} inside an obstacle"))
        return u, mode, phi, b_log

    u1, mode, phi, _ = f(x, False)
    if sim_config.integrator == "euler":
        x_next = x + dt * u1
    else:
        k2 = f(x + 0.5 * dt * u1, True)[0]
        k3 = f(x + 0.5 * dt * k2, True)[0]
        k4 = f(x + dt * k3, True)[0]
        x_next = x + dt * (u1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0
    if not np.all(np.isfinite(x_next)):
        raise NonFiniteState(f"non-finite state after step from {x}")
    out = ControlOutput(u=u1, mode=_MODE_NAMES[mode], phi=phi, grad_used=None)
    return x_next, out


def simulate(world: World, x0, params: ControllerParams, scan_config: ScanConfig,
             sim_config: SimConfig) -> Trajectory:
    """Run the closed loop from ``x0`` until goal, horizon, or failure.

    ``x0`` must lie in the practical free space (ground-truth distance at
    least eps), otherwise :class:`InvalidStart` is raised.
    """
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (world.dimension,):
        raise InvalidStart(f"start must be a {world.dimension}-D point")
    b0 = _api.b_value(world, x0)
    if b0 < params.eps:
        raise InvalidStart(
            f"start {x0} outside the practical free space (b = {b0:.6g} < eps = {params.eps})"
        )
    reach = sim_config.dt * params.gain * float(np.linalg.norm(x0 - params.target))
    shell = params.eps_prime - params.eps
    if reach > 0.1 * shell:
        warnings.warn(
            f"dt*k*|x0 - target| = {reach:.3g} is not small against the blending "
            f"shell width {shell:.3g}; consider a smaller step",
            stacklevel=2,
        )
    res = _api.run(world, x0, params, scan_config, sim_config)
    status = res["status"]
    if status == "nonfinite":
        raise NonFiniteState("integration produced a non-finite state")
    if status == "oracle_failure":
        raise NoConvergence("ground-truth distance oracle failed during the run")
    return Trajectory(
        t=res["t"], x=res["x"], u=res["u"], b=res["b"], mode=res["mode"],
        phi=res["phi"], terminal_status=status, min_b_observed=res["min_b"],
    )


def batch_run(scenario) -> List[RunResult]:
    """Simulate every initial condition of a scenario.

    Per-run failures are captured in the result entries instead of aborting
    the batch; entries keep the order of the initial-condition list.
    """
    starts = scenario.initial_states()
    results: List[RunResult] = []
    for i, x0 in enumerate(starts):
        try:
            traj = simulate(scenario.world, x0, scenario.params,
                            scenario.scan_config, scenario.sim_config)
            results.append(RunResult(index=i, x0=x0, trajectory=traj))
        except InvalidStart as exc:
            results.append(RunResult(index=i, x0=x0, trajectory=None,
                                     error=f"rejected: {exc}"))
        except (SensorError, NonFiniteState, NoConvergence) as exc:
            results.append(RunResult(index=i, x0=x0, trajectory=None,
                                     error=f"{type(exc).__name__}: {exc}"))
    return results


def write_trajectory_csv(traj: Trajectory, stream: TextIO):
    """Exact column order ``t,x1,x2[,x3],u1,u2[,u3],b,mode,phi``.

    Floats carry 17 significant digits so identical runs produce
    byte-identical files.
    """
    dim = traj.x.shape[1]
    cols = ["t"] + [f"x{i + 1}" for i in range(dim)] + \
        [f"u{i + 1}" for i in range(dim)] + ["b", "mode", "phi"]
    stream.write(",".join(cols) + "\n")
    for i in range(len(traj)):
        parts = [f"{traj.t[i]:.17g}"]
        parts += [f"{traj.x[i, j]:.17g}" for j in range(dim)]
        parts += [f"{traj.u[i, j]:.17g}" for j in range(dim)]
        parts.append(f"{traj.b[i]:.17g}")
        parts.append(_MODE_NAMES[traj.mode[i]])
        parts.append(f"{traj.phi[i]:.17g}")
        stream.write(",".join(parts) + "\n")
