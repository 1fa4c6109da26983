"""Closed-form reference solutions.

Contents: the principal Lambert W branch, the radially symmetric total
variation flow on the unit disk started from ``log(rho/(1-rho))`` outside
the half disk (with its growing plateau), the fast-diffusion barrier
profile and the growth rate of calibrable sets.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import Disk, Polygon

__all__ = [
    "OutOfBranch", "BadExponent", "Example51State", "lambert_w0", "example51_radius",
    "example51_value", "example51_initial", "example51_flux", "example51_state",
    "barrier", "calibrable_rate",
]

_INV_E = math.exp(-1.0)


class OutOfBranch(ValueError):
    """Argument below -1/e, outside the principal branch."""


class BadExponent(ValueError):
    """Exponent outside the open interval (1, 2)."""


def _w0_guess(x):
    """Piecewise starting values: branch-point series, Pade-like middle, asymptotic tail."""
    w = np.empty_like(x)
    near = x < -0.25
    mid = (~near) & (x <= 3.0)
    far = x > 3.0
    if np.any(near):
        q = np.sqrt(np.maximum(2.0 * (math.e * x[near] + 1.0), 0.0))
        w[near] = -1.0 + q - q * q / 3.0 + 11.0 / 72.0 * q ** 3
    if np.any(mid):
        xm = x[mid]
        w[mid] = xm * (1.0 + 4.0 / 3.0 * xm) / (1.0 + 7.0 / 3.0 * xm + 5.0 / 6.0 * xm * xm)
    if np.any(far):
        l1 = np.log(x[far])
        l2 = np.log(l1)
        w[far] = l1 - l2 + l2 / l1
    return w


def lambert_w0(x):
    """Principal branch of the Lambert W function.

    Parameters
    ----------
    x : float or array_like
        Arguments, each at least ``-1/e``.

    Returns
    -------
    float or ndarray
        ``w`` with ``w * exp(w) == x`` (residual below ``1e-13 * max(1, |x|)``).

    Raises
    ------
    OutOfBranch
        If any argument is below ``-1/e - 1e-15``.
    """
    arr = np.asarray(x, dtype=float)
    scalar = arr.ndim == 0
    xs = np.atleast_1d(arr).copy()
    if np.any(~np.isfinite(xs)):
        raise ValueError("lambert_w0 needs finite arguments")
    if np.any(xs < -_INV_E - 1e-15):
        raise OutOfBranch(f"argument {xs.min()!r} below -1/e")
    branch = xs <= -_INV_E + 1e-16
    xs[branch] = -_INV_E
    w = _w0_guess(xs)
    active = ~branch & (xs != 0.0)
    w[xs == 0.0] = 0.0
    for _ in range(64):
        if not np.any(active):
            break
        wa = w[active]
        ew = np.exp(wa)
        f = wa * ew - xs[active]
        wp1 = wa + 1.0
        denom = ew * wp1 - (wa + 2.0) * f / (2.0 * wp1)
        step = np.where(denom != 0, f / np.where(denom != 0, denom, 1.0), 0.0)
        w[active] = wa - step
        done = np.abs(step) <= 4e-16 * np.maximum(1.0, np.abs(wa))
        idx = np.flatnonzero(active)
        active[idx[done]] = False
    w = _polish(w, xs)
    w[branch] = -1.0
    return float(w[0]) if scalar else w.reshape(arr.shape)


def _polish(w, x, sweeps=4):
    """Walk to the adjacent double with the smallest |w e^w - x|."""
    def res(v):
        return np.abs(v * np.exp(v) - x)

    for _ in range(sweeps):
        up = np.nextafter(w, np.inf)
        dn = np.nextafter(w, -np.inf)
        r0, ru, rd = res(w), res(up), res(dn)
        better_up = (ru < r0) & (ru <= rd)
        better_dn = (rd < r0) & ~better_up
        if not (np.any(better_up) or np.any(better_dn)):
            break
        w = np.where(better_up, up, np.where(better_dn, dn, w))
    return w


def example51_radius(t):
    """Plateau radius r(t) = W(-(t+1)/(2 e^{t+1/2}))/(t+1) + 1 for t >= 0."""
    tt = np.asarray(t, dtype=float)
    if np.any(tt < 0):
        raise ValueError("t must be nonnegative")
    arg = -(tt + 1.0) / (2.0 * np.exp(tt + 0.5))
    r = lambert_w0(arg) / (tt + 1.0) + 1.0
    return float(r) if np.ndim(r) == 0 else r


def _b(t, rho):
    return np.log(rho / (1.0 - rho)) + t / rho


def example51_value(t, rho):
    """Exact solution b(t, max(rho, r(t))), b(t, s) = log(s/(1-s)) + t/s."""
    rho = np.asarray(rho, dtype=float)
    if np.any((rho < 0) | (rho >= 1)):
        raise ValueError("rho must lie in [0, 1)")
    r = example51_radius(t)
    out = _b(t, np.maximum(rho, r))
    return float(out) if out.ndim == 0 else out


def example51_initial(rho):
    """Initial datum: 0 on the half disk, log(rho/(1-rho)) outside it."""
    rho = np.asarray(rho, dtype=float)
    return example51_value(0.0, rho)


def example51_flux(t, rho):
    """Radial component of the calibrating field: rho/r(t) on the plateau, 1 outside."""
    rho = np.asarray(rho, dtype=float)
    r = example51_radius(t)
    return np.where(rho <= r, rho / r, 1.0)


@dataclass(frozen=True)
class Example51State:
    t: float
    r: float
    a: float

    def value(self, rho):
        return example51_value(self.t, rho)


def example51_state(t: float) -> Example51State:
    r = example51_radius(t)
    return Example51State(t=float(t), r=r, a=float(_b(t, r)))


def barrier(p, t, d, C0=1.0):
    """Fast-diffusion barrier C0 * t^(1/(2-p)) * d^(-p/(2-p)).

    Raises:
        BadExponent: p not in (1, 2).
    """
    if not 1.0 < p < 2.0:
        raise BadExponent(f"p must lie in (1, 2), got {p}")
    t = np.asarray(t, dtype=float)
    d = np.asarray(d, dtype=float)
    if np.any(t < 0) or np.any(d <= 0):
        raise ValueError("barrier needs t >= 0 and d > 0")
    out = C0 * t ** (1.0 / (2.0 - p)) * d ** (-p / (2.0 - p))
    return float(out) if out.ndim == 0 else out


def calibrable_rate(shape) -> float:
    """Perimeter-to-area ratio (2/R for a disk)."""
    if isinstance(shape, Disk):
        return 2.0 / shape.radius
    if isinstance(shape, Polygon):
        return shape.perimeter / shape.area
    raise TypeError(f"unsupported shape {shape!r}")
