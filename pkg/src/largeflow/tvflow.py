"""Total variation flow with a finite boundary lift.

The p = 1 resolvent is approached through the regularised problems

    u - tau * div((|grad u|^2 + eps^2)^(-1/2) grad u) = v,  u = n on the boundary,

solved for a decreasing sequence of ``eps`` with warm starts. The face
field ``z = g / sqrt(g^2 + eps_min^2)`` is the discrete calibration and
always satisfies ``|z| < 1``.
"""
from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from .fastdiff import NoConvergence, SolverSettings, Trajectory, _Operator, march
from .mesh import FaceVector, Field, Mesh, cell_divergence, face_gradient

__all__ = [
    "DEFAULT_EPS_FACTORS", "default_eps_schedule", "value_scale", "tv_resolvent",
    "tv_evolve", "boundary_trace_diagnostic", "step_residuals",
]

DEFAULT_EPS_FACTORS = (1e-1, 1e-2, 1e-3, 1e-4)


def value_scale(mesh: Mesh, u0) -> float:
    """Typical gradient size: max(1, oscillation of u0) / diameter."""
    vals = np.asarray(u0.values if isinstance(u0, Field) else u0, dtype=float)
    osc = float(np.ptp(vals)) if vals.size else 0.0
    if mesh.domain is not None:
        diam = mesh.domain.diameter
    else:
        diam = float(np.ptp(mesh.face_center[:, 0])) or 1.0
    return max(1.0, osc) / diam


def default_eps_schedule(scale: float = 1.0) -> tuple:
    return tuple(scale * f for f in DEFAULT_EPS_FACTORS)


def _check_schedule(schedule) -> tuple:
    sched = tuple(float(e) for e in schedule)
    if not sched or any(e <= 0 for e in sched):
        raise ValueError("eps schedule must be nonempty and positive")
    if any(b >= a for a, b in zip(sched, sched[1:])):
        raise ValueError("eps schedule must be strictly decreasing")
    return sched


class _TVStepper:
    def __init__(self, mesh: Mesh, schedule, settings: SolverSettings):
        self.mesh = mesh
        self.schedule = schedule
        self.settings = settings
        self.ops = [_Operator(mesh, 1.0, e) for e in schedule]
        self.iterations = []

    def __call__(self, v, n, tau, u_init=None):
        u = np.array(v if u_init is None else u_init, dtype=float)
        total = 0
        for op in self.ops:
            try:
                u, its = op.solve(v, n, tau, self.settings, u_init=u)
            except NoConvergence as exc:
                raise NoConvergence(exc.iterations, exc.residual, op.eps) from None
            total += its
        self.iterations.append(total)
        eps_min = self.schedule[-1]
        g = face_gradient(self.mesh, u, n)
        z = g / np.sqrt(g * g + eps_min * eps_min)
        return u, z

    @property
    def max_linear_residual(self) -> float:
        return max(op.max_lin_residual for op in self.ops)


def tv_resolvent(v: Field, tau: float, n: float, eps_schedule: Sequence[float] | None = None,
                 settings: SolverSettings | None = None) -> tuple[Field, FaceVector]:
    """Resolvent of the total variation operator with boundary lift ``n``.

    Returns the field and the face vector ``z`` of the finest level.

    Raises:
        NoConvergence: carries the ``eps`` level that failed.
    """
    if not tau > 0:
        raise ValueError("tau must be positive")
    sched = _check_schedule(eps_schedule or default_eps_schedule(value_scale(v.mesh, v)))
    stepper = _TVStepper(v.mesh, sched, settings or SolverSettings())
    u, z = stepper(v.values, float(n), float(tau))
    if np.max(np.abs(z)) > 1 + 1e-8:
        raise AssertionError("calibration field exceeds unit length")
    return Field(v.mesh, u, v.t + tau), FaceVector(v.mesh, z)


def tv_evolve(u0: Field, T: float, tau: float | None = None, n: float = 0.0,
              eps_schedule: Sequence[float] | None = None,
              snapshot_times: Sequence[float] | None = None,
              settings: SolverSettings | None = None) -> Trajectory:
    """Backward-Euler chain of TV resolvents; stores ``z`` with every snapshot.

    Without ``snapshot_times`` every step is kept. The default schedule is
    scaled by :func:`value_scale` of ``u0``.
    """
    tau = T / 400 if tau is None else tau
    sched = _check_schedule(eps_schedule or default_eps_schedule(value_scale(u0.mesh, u0)))
    settings = settings or SolverSettings()
    stepper = _TVStepper(u0.mesh, sched, settings)
    nsteps = max(1, int(math.ceil(T / tau - 1e-9)))
    tau_eff = T / nsteps
    residuals = []

    def step(v, t_new):
        u, z = stepper(v, float(n), tau_eff, u_init=v)
        res = (u - v) / tau_eff - cell_divergence(u0.mesh, z)
        residuals.append(float(np.sum(u0.mesh.cell_volume * np.abs(res))))
        return u, z

    times, values, fluxes, _ = march(u0.values, T, tau, step, snapshot_times)
    trace = np.min(fluxes[:, u0.mesh.boundary_faces], axis=1)
    return Trajectory(
        mesh=u0.mesh, times=times, values=values, n=float(n), p=1.0, eps=sched[-1],
        tau=tau_eff, fluxes=fluxes, eps_schedule=sched, boundary_trace=trace,
        stats={
            "steps": len(stepper.iterations),
            "iterations_total": int(np.sum(stepper.iterations)),
            "iterations_max": int(np.max(stepper.iterations)),
            "tol": settings.tol,
            "tol_lin": settings.tol_lin,
            "method": settings.method,
            "max_linear_residual": stepper.max_linear_residual,
            "max_step_residual_l1": max(residuals),
        },
    )


def boundary_trace_diagnostic(z: FaceVector) -> float:
    """Smallest outward component of ``z`` over the boundary faces."""
    return float(np.min(z.values[z.mesh.boundary_faces]))


def step_residuals(traj: Trajectory) -> np.ndarray:
    """L1 norm of (u_{k+1} - u_k)/dt - div z_{k+1} between consecutive snapshots."""
    if traj.fluxes is None:
        raise ValueError("trajectory carries no face fluxes")
    mesh = traj.mesh
    out = []
    for k in range(len(traj) - 1):
        dt = traj.times[k + 1] - traj.times[k]
        r = (traj.values[k + 1] - traj.values[k]) / dt - cell_divergence(mesh, traj.fluxes[k + 1])
        out.append(float(np.sum(mesh.cell_volume * np.abs(r))))
    return np.array(out)
