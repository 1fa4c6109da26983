"""Post-processing checks on stored trajectories.

* ``contraction_gap``: growth of the L1 norm of (u - v)^+ over a pair of runs.
* ``entropy_residual``: discrete truncated entropy identity (p > 1) or
  inequality (p = 1) tested against a smooth space-time bump.
* ``sup_bound_gap``: excess over the linear-in-time sup bound of the TV flow.
* ``p2_linearity``: level independence of u_n / n for the heat equation.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .exact import example51_flux, example51_value
from .fastdiff import FluxParams, SolverSettings, Trajectory, evolve
from .mesh import DomainSpec, Field, Mesh, MeshMismatch, build_mesh, face_gradient

__all__ = [
    "BadSupport", "SmoothClamp", "Bump", "contraction_gap", "entropy_residual",
    "sup_bound_gap", "p2_linearity", "sampled_example51", "CANONICAL_CLAMPS",
]


class BadSupport(ValueError):
    """The test function reaches boundary cells or the ends of the time window."""


# integrals of the smoothstep profiles on [0, s]
_PROFILES = {
    1: (lambda s: s, lambda s: 0.5 * s * s),
    3: (lambda s: s * s * (3 - 2 * s), lambda s: s ** 3 - 0.5 * s ** 4),
    5: (lambda s: s ** 3 * (10 - 15 * s + 6 * s * s), lambda s: s ** 6 - 3 * s ** 5 + 2.5 * s ** 4),
}


@dataclass(frozen=True)
class SmoothClamp:
    """Nondecreasing clamp from ``a`` to ``b``: constant outside [a, b], smoothstep inside.

    ``order`` 1 gives the plain truncation ``T_{a,b}``; 3 and 5 give C^1 and
    C^2 profiles.
    """

    a: float
    b: float
    order: int = 5

    def __post_init__(self):
        if not self.a < self.b:
            raise ValueError("clamp needs a < b")
        if self.order not in _PROFILES:
            raise ValueError("order must be 1, 3 or 5")

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        w = self.b - self.a
        s = np.clip((r - self.a) / w, 0.0, 1.0)
        return self.a + w * _PROFILES[self.order][0](s)

    def primitive(self, y):
        """Integral of the clamp from ``a`` to ``y``."""
        y = np.asarray(y, dtype=float)
        w = self.b - self.a
        s = np.clip((y - self.a) / w, 0.0, 1.0)
        inside = self.a * (np.clip(y, self.a, self.b) - self.a) + w * w * _PROFILES[self.order][1](s)
        below = self.a * np.minimum(y - self.a, 0.0)
        above = self.b * np.maximum(y - self.b, 0.0)
        return inside + below + above

    def entropy_flux(self, r, h: float, l: float):
        """j(r) = integral from l to r of clamp(T_h(s) - T_h(l)) ds."""
        c = float(np.clip(l, -h, h))

        def big_phi(x):
            x = np.asarray(x, dtype=float)
            lower = (x + h) * self(-h - c)
            mid = self.primitive(x - c) - self.primitive(-h - c)
            upper = self.primitive(h - c) - self.primitive(-h - c) + (x - h) * self(h - c)
            return np.where(x <= -h, lower, np.where(x >= h, upper, mid))

        return big_phi(r) - big_phi(l)


CANONICAL_CLAMPS = (SmoothClamp(0.0, 1.0), SmoothClamp(-1.0, 1.0), SmoothClamp(-1.0, 0.0))


def _bump(s):
    """exp(1 - 1/(1-s^2)) on |s| < 1 and its derivative."""
    s = np.asarray(s, dtype=float)
    inside = np.abs(s) < 1
    q = np.where(inside, 1.0 - s * s, 1.0)
    val = np.where(inside, np.exp(1.0 - 1.0 / q), 0.0)
    der = np.where(inside, val * (-2.0 * s / (q * q)), 0.0)
    return val, der


@dataclass(frozen=True)
class Bump:
    """Smooth test function psi(|x - center| / radius) * phi(time window)."""

    center: tuple
    radius: float
    t_start: float
    t_end: float

    def _time(self, t):
        mid = 0.5 * (self.t_start + self.t_end)
        half = 0.5 * (self.t_end - self.t_start)
        v, d = _bump((t - mid) / half)
        return v, d / half

    def _space(self, pts):
        rel = np.asarray(pts, float) - np.asarray(self.center, float)
        dist = np.hypot(rel[:, 0], rel[:, 1])
        v, d = _bump(dist / self.radius)
        safe = np.where(dist > 0, dist, 1.0)
        grad = (d / self.radius / safe)[:, None] * rel
        grad[dist == 0] = 0.0
        return v, grad

    def value(self, t, pts):
        tv, _ = self._time(t)
        sv, _ = self._space(pts)
        return tv * sv

    def time_derivative(self, t, pts):
        _, td = self._time(t)
        sv, _ = self._space(pts)
        return td * sv

    def gradient(self, t, pts):
        tv, _ = self._time(t)
        _, sg = self._space(pts)
        return tv * sg


def _check_pair(a: Trajectory, b: Trajectory):
    if a.mesh is not b.mesh:
        raise MeshMismatch("trajectories live on different meshes")
    if len(a.times) != len(b.times) or np.any(np.abs(a.times - b.times) > 1e-12 * max(1.0, a.times[-1])):
        raise MeshMismatch("trajectories use different snapshot times")
    if a.n != b.n:
        raise ValueError("trajectories use different boundary values")


def contraction_gap(traj_u: Trajectory, traj_v: Trajectory) -> float:
    """max_t ||(u(t)-v(t))^+||_1 - ||(u0-v0)^+||_1."""
    _check_pair(traj_u, traj_v)
    vol = traj_u.mesh.cell_volume
    pos = np.maximum(traj_u.values - traj_v.values, 0.0) @ vol
    return float(np.max(pos - pos[0]))


def _trapezoid_weights(times):
    dt = np.diff(times)
    w = np.zeros(len(times))
    w[:-1] += 0.5 * dt
    w[1:] += 0.5 * dt
    return w


def entropy_residual(traj: Trajectory, clamp: SmoothClamp, h_trunc: float, l: float,
                     eta: Bump, mode: str = "auto") -> float:
    """Discrete truncated entropy residual of a trajectory.

    For p > 1 the quantity is

        sum eta a(g) dS + sum S a(g) d_n eta - sum j(u) eta_t,

    for p = 1 it is ``-sum j(u) eta_t + sum eta |dS| + sum S z d_n eta``
    with the stored face field ``z``. Space sums use cell and face centres,
    time sums the trapezoid rule over the snapshots.

    Args:
        mode: ``"auto"`` returns |value| for p > 1 and the positive part for
            p = 1; ``"abs"`` and ``"signed"`` force the choice.

    Raises:
        BadSupport: eta is nonzero on a boundary cell or at the first/last time.
    """
    mesh = traj.mesh
    if not h_trunc > 0:
        raise ValueError("truncation level must be positive")
    times = traj.times
    if not (times[0] < eta.t_start and eta.t_end < times[-1]):
        raise BadSupport("time support of eta must lie inside the trajectory window")
    if mesh.radial and any(c != 0 for c in eta.center):
        raise BadSupport("radial meshes need an eta centred at the origin")
    bcells = np.unique(mesh.face_left[mesh.boundary_faces])
    rel = mesh.centers[bcells] - np.asarray(eta.center, float)
    if np.any(np.hypot(rel[:, 0], rel[:, 1]) < eta.radius + 0.5 * mesh.h):
        raise BadSupport("spatial support of eta reaches boundary cells")
    if traj.p == 1 and traj.fluxes is None:
        raise ValueError("p = 1 trajectories must carry face fluxes")

    L, R = mesh.face_left, mesh.face_right
    inner = mesh.interior_faces
    Li, Ri = L[inner], R[inner]
    wf = mesh.face_weight[inner]
    dist = mesh.face_dist[inner]
    fpts = mesh.face_center[inner]
    normals = mesh.face_normal[inner]
    tw = _trapezoid_weights(times)
    total = 0.0
    for k, t in enumerate(times):
        if tw[k] == 0.0:
            continue
        u = traj.values[k]
        w = np.clip(u, -h_trunc, h_trunc) - float(np.clip(l, -h_trunc, h_trunc))
        Sw = clamp(w)
        dS = (Sw[Ri] - Sw[Li]) / dist
        Sbar = 0.5 * (Sw[Ri] + Sw[Li])
        eta_f = eta.value(t, fpts)
        dn_eta = np.einsum("ij,ij->i", eta.gradient(t, fpts), normals)
        jterm = float(np.sum(mesh.cell_volume * clamp.entropy_flux(u, h_trunc, l)
                             * eta.time_derivative(t, mesh.centers)))
        if traj.p == 1:
            z = traj.fluxes[k][inner]
            val = -jterm + float(np.sum(wf * eta_f * np.abs(dS))) + float(np.sum(wf * Sbar * z * dn_eta))
        else:
            g = face_gradient(mesh, u, traj.n)[inner]
            a = (g * g + traj.eps ** 2) ** ((traj.p - 2.0) / 2.0) * g
            val = float(np.sum(wf * eta_f * a * dS)) + float(np.sum(wf * Sbar * a * dn_eta)) - jterm
        total += tw[k] * val
    if mode == "signed":
        return total
    if mode == "abs" or (mode == "auto" and traj.p != 1):
        return abs(total)
    if mode == "auto":
        return max(total, 0.0)
    raise ValueError(f"unknown mode {mode!r}")


def sup_bound_gap(traj: Trajectory, u0=None, s0: float | None = None) -> float:
    """max_t [max u(t) - (||u0||_inf + 2 t / s0)] for a planar TV-flow run."""
    if s0 is None:
        if traj.mesh.domain is None:
            raise ValueError("s0 is required for meshes without a domain")
        s0 = traj.mesh.domain.s0
    if u0 is None:
        u0v = traj.values[0]
    else:
        u0v = np.asarray(u0.values if isinstance(u0, Field) else u0, dtype=float)
    bound = float(np.max(np.abs(u0v))) + traj.times * 2.0 / s0
    return float(np.max(np.max(traj.values, axis=1) - bound))


def p2_linearity(n_list: Sequence[float], domain: DomainSpec | Mesh, T: float, p: float = 2.0,
                 tau: float | None = None, delta: float | None = None, snapshots: int = 20,
                 eps: float | None = None, settings: SolverSettings | None = None) -> float:
    """Largest sup-norm difference of u_n / n on the monitor set over pairs of n (u0 = 0)."""
    ns = [float(n) for n in n_list]
    if len(ns) < 2:
        return 0.0
    mesh = domain if isinstance(domain, Mesh) else build_mesh(domain)
    inr = mesh.domain.inradius if mesh.domain is not None else float(np.max(mesh.cell_depth))
    delta = max(4 * mesh.h, inr / 4) if delta is None else delta
    monitor = mesh.cell_depth >= delta
    if eps is None:
        eps = 0.0 if p >= 2 else 1e-6 * min(ns) / (mesh.domain.diameter if mesh.domain else 1.0)
    snaps = T * np.arange(1, snapshots + 1) / snapshots
    scaled = []
    for n in ns:
        tr = evolve(Field(mesh, np.zeros(mesh.n_cells)), T, tau, FluxParams(p, eps), n, snaps, settings)
        scaled.append(tr.values[:, monitor] / n)
    return max(float(np.max(np.abs(a - b))) for i, a in enumerate(scaled) for b in scaled[i + 1:])


def sampled_example51(mesh: Mesh, times: Sequence[float]) -> Trajectory:
    """Closed-form disk solution and its calibrating field sampled on a radial mesh."""
    if not mesh.radial:
        raise ValueError("the disk benchmark needs a radial mesh")
    times = np.asarray(times, dtype=float)
    rho = mesh.centers[:, 0]
    rf = mesh.face_center[:, 0]
    values = np.array([example51_value(t, rho) for t in times])
    fluxes = np.array([example51_flux(t, rf) for t in times])
    fluxes[:, mesh.boundary_faces] = 1.0
    return Trajectory(mesh=mesh, times=times, values=values, n=math.inf, p=1.0, eps=0.0,
                      tau=float(times[1] - times[0]) if len(times) > 1 else 0.0, fluxes=fluxes)
