"""Implicit time stepping for u_t = div(|grad u|^{p-2} grad u), p > 1.

Each backward-Euler step solves the nonlinear resolvent problem

    vol * (u - v) + tau * D^T (w * phi(D u + b)) = 0,

where ``D`` maps cells to face differences, ``w`` are the face weights,
``b`` carries the Dirichlet value ``n`` on boundary faces and
``phi(g) = (g^2 + eps^2)^((p-2)/2) g`` is the regularised flux. The
equation is the optimality condition of a strictly convex problem, so
the step is solved with a safeguarded Newton iteration that falls back to
a lagged-diffusivity (Picard) update whenever the line search fails.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .mesh import Field, FaceVector, Mesh, MeshMismatch, face_gradient

__all__ = [
    "FluxParams", "SolverSettings", "Trajectory", "Degenerate", "NoConvergence",
    "flux_coefficient", "resolvent_step", "solve_resolvent", "evolve", "dirichlet_energy",
]


class Degenerate(ArithmeticError):
    """Flux coefficient is infinite (p < 2, eps = 0, zero gradient)."""


class NoConvergence(RuntimeError):
    """The nonlinear step iteration hit its cap."""

    def __init__(self, iterations: int, residual: float, eps: float | None = None):
        self.iterations = iterations
        self.residual = residual
        self.eps = eps
        msg = f"no convergence after {iterations} iterations (last update {residual:.3e})"
        if eps is not None:
            msg += f" at eps={eps:.3e}"
        super().__init__(msg)


@dataclass(frozen=True)
class FluxParams:
    """Exponent and regularisation of the face flux.

    ``flux`` is an optional hook ``g -> (q, dq/dg)`` replacing the
    p-Laplacian flux with a general monotone one. Coercivity
    (``q(g) g >= alpha |g|^p``) and monotonicity are the caller's
    responsibility; the hook is not verified by this package.
    """

    p: float
    eps: float = 0.0
    flux: Callable | None = None

    def __post_init__(self):
        if not self.p > 1:
            raise ValueError(f"p must exceed 1, got {self.p}")
        if not self.eps >= 0:
            raise ValueError("eps must be nonnegative")
        if self.p < 2 and self.eps == 0 and self.flux is None:
            raise ValueError("eps > 0 is required when p < 2")


@dataclass(frozen=True)
class SolverSettings:
    tol: float = 1e-10
    max_iter: int = 200
    tol_lin: float = 1e-12
    method: str = "newton"

    def __post_init__(self):
        if self.method not in ("newton", "picard"):
            raise ValueError(f"unknown method {self.method!r}")


def flux_coefficient(g2, params: FluxParams):
    """Diffusivity ``(g2 + eps^2)^((p-2)/2)``.

    Raises:
        Degenerate: p < 2, eps = 0 and some g2 == 0.
    """
    g2 = np.asarray(g2, dtype=float)
    if np.any(g2 < 0):
        raise ValueError("g2 must be nonnegative")
    s = g2 + params.eps ** 2
    if params.p < 2 and np.any(s == 0):
        raise Degenerate("zero gradient with eps = 0 and p < 2")
    out = s ** ((params.p - 2.0) / 2.0)
    return float(out) if out.ndim == 0 else out


class _Operator:
    """Discrete p-Laplacian resolvent on a fixed mesh."""

    def __init__(self, mesh: Mesh, p: float, eps: float, flux=None):
        self.mesh = mesh
        self.p = float(p)
        self.eps = float(eps)
        self.hook = flux
        self.vol = mesh.cell_volume
        self.cond = mesh.face_area / mesh.face_dist
        self.left = mesh.face_left
        self.right = mesh.face_right
        self.inner = mesh.interior_faces
        self.bnd = mesh.boundary_faces
        self.linear = self.hook is None and self.p == 2.0
        self._cache = None
        if mesh.is_chain:
            lo = np.minimum(self.left[self.inner], self.right[self.inner])
            self._upper_pos = lo
        self.max_lin_residual = 0.0

    # flux law
    def flux(self, g):
        if self.hook is not None:
            q, _ = self.hook(g)
            return np.asarray(q, dtype=float)
        if self.linear:
            return g
        s = g * g + self.eps ** 2
        return s ** ((self.p - 2.0) / 2.0) * g

    def dflux(self, g):
        if self.hook is not None:
            _, dq = self.hook(g)
            return np.asarray(dq, dtype=float)
        if self.linear:
            return np.ones_like(g)
        s = g * g + self.eps ** 2
        # s == 0 only when eps == 0 and g == 0, where the slope (p-1)|g|^(p-2) vanishes for p > 2
        pos = s > 0
        safe = np.where(pos, s, 1.0)
        return np.where(pos, safe ** ((self.p - 4.0) / 2.0) * ((self.p - 1.0) * g * g + self.eps ** 2), 0.0)

    def secant(self, g):
        """Lagged diffusivity q(g)/g."""
        if self.hook is None:
            if self.linear:
                return np.ones_like(g)
            return (g * g + self.eps ** 2) ** ((self.p - 2.0) / 2.0)
        q = self.flux(g)
        dq = self.dflux(g)
        safe = np.where(g != 0, g, 1.0)
        return np.where(g != 0, q / safe, dq)

    def residual(self, u, v, n, tau):
        g = face_gradient(self.mesh, u, n)
        q = self.flux(g)
        F = self.vol * (u - v) + tau * (self.mesh.grad_matrix.T @ (self.mesh.face_weight * q))
        return F, g

    # linear algebra
    def _matrix(self, kappa):
        m = self.mesh
        diag = self.vol + np.bincount(self.left, kappa, m.n_cells)
        ri = self.right[self.inner]
        diag += np.bincount(ri, kappa[self.inner], m.n_cells)
        if m.is_chain:
            upper = np.zeros(m.n_cells - 1)
            upper[self._upper_pos] = -kappa[self.inner]
            return ("banded", diag, upper)
        li = self.left[self.inner]
        off = -kappa[self.inner]
        A = sp.coo_matrix(
            (np.concatenate([diag, off, off]),
             (np.concatenate([np.arange(m.n_cells), li, ri]),
              np.concatenate([np.arange(m.n_cells), ri, li]))),
            shape=(m.n_cells, m.n_cells),
        ).tocsc()
        return ("sparse", A, None)

    def _factor(self, mat):
        kind, a, b = mat
        if kind == "banded":
            ab = np.zeros((2, len(a)))
            ab[0, 1:] = b
            ab[1] = a
            return lambda rhs: sla.solveh_banded(ab, rhs, check_finite=False)
        lu = spla.splu(a)
        return lu.solve

    @staticmethod
    def _apply(mat, x):
        kind, a, b = mat
        if kind == "banded":
            y = a * x
            y[:-1] += b * x[1:]
            y[1:] += b * x[:-1]
            return y
        return a @ x

    def linear_solve(self, kappa, rhs, tau, tol_lin, cache=False):
        if cache and self._cache is not None and self._cache[0] == tau:
            _, mat, solve = self._cache
        else:
            mat = self._matrix(kappa)
            solve = self._factor(mat)
            if cache:
                self._cache = (tau, mat, solve)
        x = solve(rhs)
        scale = max(float(np.max(np.abs(rhs))), 1e-300)
        res = float(np.max(np.abs(rhs - self._apply(mat, x)))) / scale
        for _ in range(2):
            if res <= tol_lin:
                break
            x = x + solve(rhs - self._apply(mat, x))
            res = float(np.max(np.abs(rhs - self._apply(mat, x)))) / scale
        self.max_lin_residual = max(self.max_lin_residual, res)
        return x

    def picard_update(self, u, v, n, tau, tol_lin):
        g = face_gradient(self.mesh, u, n)
        kappa = tau * self.cond * self.secant(g)
        rhs = self.vol * v
        np.add.at(rhs, self.left[self.bnd], kappa[self.bnd] * n)
        return self.linear_solve(kappa, rhs, tau, tol_lin, cache=self.linear)

    def solve(self, v, n, tau, settings: SolverSettings, u_init=None):
        """Return (u, iterations)."""
        u = np.array(v if u_init is None else u_init, dtype=float)
        tol = settings.tol
        last = math.inf
        if not np.any(self.residual(u, v, n, tau)[0]):
            return u, 0
        for it in range(1, settings.max_iter + 1):
            if settings.method == "picard" or self.linear:
                unew = self.picard_update(u, v, n, tau, settings.tol_lin)
                step = unew - u
            else:
                F, g = self.residual(u, v, n, tau)
                kappa = tau * self.cond * self.dflux(g)
                du = self.linear_solve(kappa, -F, tau, settings.tol_lin)
                fnorm = float(np.linalg.norm(F))
                alpha = 1.0
                step = None
                while alpha >= 1.0 / 64:
                    trial = u + alpha * du
                    Ft, _ = self.residual(trial, v, n, tau)
                    if np.linalg.norm(Ft) <= (1.0 - 1e-4 * alpha) * fnorm:
                        step = alpha * du
                        break
                    alpha *= 0.5
                if step is None:
                    step = self.picard_update(u, v, n, tau, settings.tol_lin) - u
            u = u + step
            last = float(np.max(np.abs(step) / np.maximum(1.0, np.abs(u))))
            if not np.all(np.isfinite(u)):
                raise NoConvergence(it, math.inf, self.eps)
            if last <= tol:
                return u, it
        raise NoConvergence(settings.max_iter, last, self.eps)


def solve_resolvent(mesh: Mesh, v: np.ndarray, tau: float, p: float, eps: float, n: float,
                    settings: SolverSettings | None = None, u_init=None, flux=None):
    """Array-level resolvent solve; returns (u, iterations, operator)."""
    if not tau > 0:
        raise ValueError("tau must be positive")
    op = _Operator(mesh, p, eps, flux)
    u, its = op.solve(np.asarray(v, float), float(n), float(tau), settings or SolverSettings(), u_init)
    return u, its, op


def resolvent_step(v: Field, tau: float, params: FluxParams, n: float,
                   settings: SolverSettings | None = None) -> Field:
    """One backward-Euler step from ``v`` with Dirichlet value ``n``.

    The returned field is converged to a max-norm update of ``settings.tol``
    (relative to ``max(1, |u|)`` cellwise).

    Raises:
        NoConvergence: the iteration cap was reached.
    """
    u, _, _ = solve_resolvent(v.mesh, v.values, tau, params.p, params.eps, n, settings,
                              flux=params.flux)
    return Field(v.mesh, u, v.t + tau)


@dataclass(eq=False)
class Trajectory:
    """Snapshots of one run, all on one mesh.

    ``values[i]`` is the field at ``times[i]``; ``fluxes[i]`` (p = 1 runs)
    is the face vector of the step that contains ``times[i]``.
    """

    mesh: Mesh
    times: np.ndarray
    values: np.ndarray
    n: float
    p: float
    eps: float
    tau: float
    fluxes: np.ndarray | None = None
    eps_schedule: tuple | None = None
    boundary_trace: np.ndarray | None = None
    stats: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.times)

    def field(self, i: int) -> Field:
        return Field(self.mesh, self.values[i], float(self.times[i]))

    @property
    def final(self) -> Field:
        return self.field(len(self.times) - 1)

    def face_vector(self, i: int) -> FaceVector:
        if self.fluxes is None:
            raise ValueError("trajectory carries no face fluxes")
        return FaceVector(self.mesh, self.fluxes[i])

    def manifest(self) -> dict:
        dom = self.mesh.domain
        out = {
            "domain": dom.describe() if dom is not None else self.mesh.kind,
            "radial": bool(self.mesh.radial),
            "h": self.mesh.h,
            "p": self.p,
            "eps": self.eps,
            "tau": self.tau,
            "n": self.n,
            "snapshot_times": [float(t) for t in self.times],
        }
        if self.eps_schedule is not None:
            out["eps_schedule"] = [float(e) for e in self.eps_schedule]
        if self.boundary_trace is not None:
            out["z_min_boundary_trace"] = [float(z) for z in self.boundary_trace]
        out.update(self.stats)
        return out


def march(u0: np.ndarray, T: float, tau: float, step, snapshot_times=None):
    """Backward-Euler time loop with linear interpolation onto snapshot times.

    ``step(v, t_new)`` returns ``(u, flux_or_None)``. Returns
    ``(times, values, fluxes, tau_used)``.
    """
    if not T > 0:
        raise ValueError("T must be positive")
    if not tau > 0:
        raise ValueError("tau must be positive")
    nsteps = max(1, int(math.ceil(T / tau - 1e-9)))
    tau = T / nsteps
    if snapshot_times is None:
        snaps = tau * np.arange(nsteps + 1)
        snaps[-1] = T
    else:
        snaps = np.unique(np.concatenate([[0.0], np.asarray(snapshot_times, float)]))
        if snaps[0] < 0 or snaps[-1] > T * (1 + 1e-12):
            raise ValueError("snapshot times must lie in [0, T]")
    values = np.empty((len(snaps), len(u0)))
    values[0] = u0
    fluxes = None
    j = 1
    prev = np.array(u0, dtype=float)
    for k in range(nsteps):
        t0, t1 = k * tau, (k + 1) * tau
        cur, flux = step(prev, t1)
        if flux is not None and fluxes is None:
            fluxes = np.empty((len(snaps), len(flux)))
            fluxes[0] = flux
        while j < len(snaps) and (snaps[j] <= t1 + 1e-12 * T or k == nsteps - 1):
            theta = min(max((snaps[j] - t0) / tau, 0.0), 1.0)
            values[j] = prev + theta * (cur - prev)
            if flux is not None:
                fluxes[j] = flux
            j += 1
        prev = cur
    return snaps, values, fluxes, tau


def evolve(u0: Field, T: float, tau: float | None = None, params: FluxParams | None = None,
           n: float = 0.0, snapshot_times: Sequence[float] | None = None,
           settings: SolverSettings | None = None) -> Trajectory:
    """Backward-Euler trajectory from ``u0`` with boundary value ``n``.

    ``tau`` defaults to ``T/400`` and is shortened so that it divides ``T``.
    Without ``snapshot_times`` every step is stored.
    """
    if params is None:
        raise ValueError("FluxParams required")
    settings = settings or SolverSettings()
    tau = T / 400 if tau is None else tau
    op = _Operator(u0.mesh, params.p, params.eps, params.flux)
    counts = []

    def step(v, t_new):
        u, its = op.solve(v, float(n), tau_used[0], settings)
        counts.append(its)
        return u, None

    nsteps = max(1, int(math.ceil(T / tau - 1e-9)))
    tau_used = [T / nsteps]
    times, values, _, tau_eff = march(u0.values, T, tau, step, snapshot_times)
    return Trajectory(
        mesh=u0.mesh, times=times, values=values, n=float(n), p=params.p, eps=params.eps,
        tau=tau_eff,
        stats={
            "steps": len(counts),
            "iterations_total": int(np.sum(counts)),
            "iterations_max": int(np.max(counts)),
            "tol": settings.tol,
            "tol_lin": settings.tol_lin,
            "method": settings.method,
            "max_linear_residual": op.max_lin_residual,
        },
    )


def dirichlet_energy(u: Field, params: FluxParams, n: float) -> float:
    """Discrete energy decreased by every step: sum of w (g^2+eps^2)^(p/2)/p over all faces."""
    g = face_gradient(u.mesh, u.values, n)
    s = g * g + params.eps ** 2
    return float(np.sum(u.mesh.face_weight * (s ** (params.p / 2.0) - params.eps ** params.p)) / params.p)
