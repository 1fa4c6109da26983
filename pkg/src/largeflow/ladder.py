"""Boundary-lift ladder: solve with boundary values n0 < n1 < ... and classify.

Every level starts from the truncation ``T_n(u0)`` and uses the same
regularisation, so consecutive levels are ordered by the comparison
principle. On the monitor set ``K = {depth >= delta}`` the report tracks
L1 and sup norms, successive relative differences and order violations,
and classifies the sequence as CONVERGED, DIVERGING or UNDECIDED.
"""
from __future__ import annotations

import csv
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .fastdiff import FluxParams, NoConvergence, SolverSettings, Trajectory, evolve
from .mesh import DomainSpec, Field, Mesh, build_mesh, p_energy
from .tvflow import default_eps_schedule, tv_evolve, value_scale

__all__ = [
    "CONVERGED", "DIVERGING", "UNDECIDED", "FAILED", "InsufficientData", "LadderConfig",
    "LadderLevel", "LadderReport", "run_ladder", "monotone_check", "barrier_exponent_fit",
    "energy_uniformity", "write_report_csv",
]

CONVERGED = "CONVERGED"
DIVERGING = "DIVERGING"
UNDECIDED = "UNDECIDED"
FAILED = "FAILED"


class InsufficientData(ValueError):
    """Not enough snapshots, cells or levels for the requested fit."""


@dataclass(frozen=True)
class LadderConfig:
    """Ladder parameters.

    Attributes:
        n_schedule: explicit boundary values; otherwise ``n0 * factor**k`` for
            ``levels`` levels.
        delta: monitor margin; default ``max(4h, inradius/4)``.
        tol_ladder: relative L1 tolerance on the last two differences.
        contraction: geometric rule, the last two ratios of successive
            differences must not exceed this.
        growth: final-time sup growth that signals divergence.
        snapshots: number of equally spaced snapshot times after t = 0.
        eps: regularisation for p > 1 (default ``1e-6 * n_first / diameter``
            below p = 2, zero from p = 2 on); shared by all levels.
        eps_schedule: continuation schedule for p = 1, shared by all levels.
    """

    n_schedule: tuple | None = None
    n0: float = 4.0
    levels: int = 6
    factor: float = 2.0
    delta: float | None = None
    tol_ladder: float = 1e-3
    contraction: float = 0.9
    growth: float = 1.5
    monotone_tol: float = 1e-9
    tau: float | None = None
    snapshots: int = 20
    eps: float | None = None
    eps_schedule: tuple | None = None
    settings: SolverSettings = field(default_factory=SolverSettings)
    jobs: int = 1

    def schedule(self) -> tuple:
        if self.n_schedule is not None:
            sched = tuple(float(n) for n in self.n_schedule)
        else:
            sched = tuple(self.n0 * self.factor ** k for k in range(self.levels))
        if len(sched) < 1 or any(b <= a for a, b in zip(sched, sched[1:])):
            raise ValueError("n schedule must be strictly increasing")
        return sched


@dataclass(eq=False)
class LadderLevel:
    n: float
    status: str
    trajectory: Trajectory | None = None
    l1: np.ndarray | None = None
    sup: np.ndarray | None = None
    diff_prev: float = math.nan
    violation: float = math.nan
    error: str = ""


@dataclass(eq=False)
class LadderReport:
    levels: list
    times: np.ndarray
    monitor: np.ndarray
    delta: float
    p: float
    h: float
    tau: float
    eps: float
    classification: str
    reason: str
    ratios: np.ndarray
    growth: float
    tail_estimate: float

    @property
    def ok_levels(self) -> list:
        out = []
        for lev in self.levels:
            if lev.status == FAILED:
                break
            out.append(lev)
        return out

    @property
    def limit(self) -> Trajectory:
        """Top successful level, the estimate of the limit."""
        ok = self.ok_levels
        if not ok:
            raise InsufficientData("no successful level")
        return ok[-1].trajectory

    def classification_line(self) -> str:
        return (f"classification={self.classification} p={self.p:g} h={self.h:.6g} "
                f"tau={self.tau:.6g} eps={self.eps:.6g} delta={self.delta:.6g} "
                f"growth={self.growth:.6g} tail={self.tail_estimate:.6g} reason={self.reason}")


def _initial_values(mesh: Mesh, u0) -> np.ndarray:
    if u0 is None:
        return np.zeros(mesh.n_cells)
    if isinstance(u0, Field):
        return np.asarray(u0.values, float)
    if callable(u0):
        return np.asarray(u0(mesh.centers), float).reshape(-1)
    return np.broadcast_to(np.asarray(u0, float), (mesh.n_cells,)).copy()


def _run_level(args):
    mesh, u0, T, p, n, tau, snaps, eps, sched, settings = args
    start = Field(mesh, np.minimum(np.maximum(u0, -n), n))
    try:
        if p == 1:
            traj = tv_evolve(start, T, tau, n, sched, snaps, settings)
        else:
            traj = evolve(start, T, tau, FluxParams(p, eps), n, snaps, settings)
        return traj, ""
    except (NoConvergence, FloatingPointError, np.linalg.LinAlgError, RuntimeError) as exc:
        return None, f"{type(exc).__name__}: {exc}"


def run_ladder(domain: DomainSpec | Mesh, u0, T: float, p: float | FluxParams = 1.0,
               config: LadderConfig | None = None) -> LadderReport:
    """Run the boundary-lift ladder and classify it.

    Args:
        domain: domain spec (a mesh is built) or a ready mesh.
        u0: ``None`` (zero), a Field, an array, or a callable on cell centres.
        T: final time.
        p: exponent (1 selects the TV flow) or FluxParams (its eps is used).
        config: ladder settings.
    """
    config = config or LadderConfig()
    mesh = domain if isinstance(domain, Mesh) else build_mesh(domain)
    if isinstance(p, FluxParams):
        eps_override = p.eps
        p = p.p
    else:
        eps_override = None
    p = float(p)
    sched = config.schedule()
    u0v = _initial_values(mesh, u0)
    if np.any(u0v < 0):
        raise ValueError("initial datum must be nonnegative")
    h = mesh.h
    inr = mesh.domain.inradius if mesh.domain is not None else float(np.max(mesh.cell_depth))
    delta = config.delta if config.delta is not None else max(4 * h, inr / 4)
    if delta < 2 * h * (1 - 1e-12):
        raise ValueError("monitor margin must be at least 2h")
    monitor = mesh.cell_depth >= delta
    if not np.any(monitor):
        raise InsufficientData("monitor set is empty")
    tau = config.tau if config.tau is not None else T / 400
    snaps = T * np.arange(1, config.snapshots + 1) / config.snapshots
    diam = mesh.domain.diameter if mesh.domain is not None else 1.0
    if p == 1:
        eps = None
        eps_sched = config.eps_schedule or default_eps_schedule(value_scale(mesh, u0v))
        eps_report = eps_sched[-1]
    else:
        eps = eps_override if eps_override is not None else config.eps
        if eps is None:
            eps = 1e-6 * sched[0] / diam if p < 2 else 0.0
        eps_sched = None
        eps_report = eps
    tasks = [(mesh, u0v, T, p, n, tau, snaps, eps, eps_sched, config.settings) for n in sched]
    if config.jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=config.jobs) as pool:
            results = list(pool.map(_run_level, tasks))
    else:
        results = [_run_level(t) for t in tasks]

    vol = mesh.cell_volume[monitor]
    levels = []
    prev = None
    times = None
    for n, (traj, err) in zip(sched, results):
        if traj is None:
            levels.append(LadderLevel(n=n, status=FAILED, error=err))
            prev = None
            continue
        times = traj.times
        vals = traj.values[:, monitor]
        lev = LadderLevel(n=n, status="OK", trajectory=traj,
                          l1=np.abs(vals) @ vol, sup=np.max(np.abs(vals), axis=1))
        if prev is not None:
            pv = prev.trajectory.values[:, monitor]
            num = float(np.sum(np.abs(vals - pv) @ vol))
            den = float(np.sum(lev.l1))
            lev.diff_prev = num / den if den > 0 else (0.0 if num == 0 else math.inf)
            lev.violation = max(0.0, float(np.max(pv - vals)))
        levels.append(lev)
        prev = lev
    return _classify(levels, times, monitor, delta, p, h, tau if not levels or levels[0].trajectory is None
                     else levels[0].trajectory.tau, eps_report, config)


def _classify(levels, times, monitor, delta, p, h, tau, eps, config) -> LadderReport:
    ok = []
    for lev in levels:
        if lev.status == FAILED:
            break
        ok.append(lev)
    diffs = np.array([lev.diff_prev for lev in ok[1:]])
    ratios = diffs[1:] / np.where(diffs[:-1] > 0, diffs[:-1], np.nan) if len(diffs) > 1 else np.array([])
    growth = math.nan
    tail = math.nan
    viol = max((lev.violation for lev in ok[1:]), default=0.0)
    if len(ok) < 2:
        cls, reason = UNDECIDED, "fewer than two successful levels"
    else:
        a, b = ok[-2].sup[-1], ok[-1].sup[-1]
        growth = b / a if a > 0 else (math.inf if b > 0 else 1.0)
        monotone = viol <= config.monotone_tol
        tol_rule = len(diffs) >= 2 and bool(np.all(diffs[-2:] <= config.tol_ladder))
        geo_rule = len(ratios) >= 2 and bool(np.all(ratios[-2:] <= config.contraction))
        if len(ratios):
            q = ratios[-1]
            tail = diffs[-1] * q / (1 - q) if q < 1 else math.inf
        if growth >= config.growth:
            cls, reason = DIVERGING, f"sup growth {growth:.4g} >= {config.growth:g}"
        elif monotone and tol_rule:
            cls, reason = CONVERGED, f"last differences <= {config.tol_ladder:g}"
        elif monotone and geo_rule:
            cls, reason = CONVERGED, f"difference ratios {ratios[-2]:.3g},{ratios[-1]:.3g} <= {config.contraction:g}"
        elif not monotone:
            cls, reason = UNDECIDED, f"order violation {viol:.3g}"
        else:
            cls, reason = UNDECIDED, "differences neither small nor contracting"
    if any(lev.status == FAILED for lev in levels):
        reason += "; failed levels present"
    return LadderReport(levels=levels, times=times, monitor=monitor, delta=delta, p=p, h=h,
                        tau=tau, eps=eps, classification=cls, reason=reason, ratios=ratios,
                        growth=growth, tail_estimate=tail)


def monotone_check(report: LadderReport) -> float:
    """Largest violation of u_{n+1} >= u_n on the monitor set over all snapshots."""
    ok = report.ok_levels
    if len(ok) < 2:
        raise InsufficientData("monotone check needs two levels")
    worst = 0.0
    for lo, hi in zip(ok, ok[1:]):
        d = lo.trajectory.values[:, report.monitor] - hi.trajectory.values[:, report.monitor]
        worst = max(worst, float(np.max(d)))
    return max(worst, 0.0)


def _time_weights(times: np.ndarray) -> np.ndarray:
    dt = np.diff(times)
    w = np.zeros(len(times))
    w[:-1] += 0.5 * dt
    w[1:] += 0.5 * dt
    return w


def energy_uniformity(report: LadderReport, ks: Sequence[float] = (1, 2, 4)) -> dict:
    """Relative change of the truncated energy between the two top levels, per k.

    For p = 1 the exponent 1 is used (total variation of the truncation).
    """
    ok = report.ok_levels
    if len(ok) < 2:
        raise InsufficientData("energy comparison needs two levels")
    out = {}
    for k in ks:
        vals = []
        for lev in ok[-2:]:
            tr = lev.trajectory
            fields = [tr.field(i) for i in range(len(tr))]
            vals.append(p_energy(fields, max(report.p, 1.0), k, _time_weights(tr.times), lev.n))
        out[k] = abs(vals[1] - vals[0]) / max(abs(vals[1]), 1e-300)
    return out


def _slope(x, y) -> float:
    A = np.column_stack([x, np.ones_like(x)])
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    return float(coef[0])


def barrier_exponent_fit(report: LadderReport, p: float, point: int | None = None,
                         t_min_frac: float = 0.125, band: tuple | None = None,
                         n_bands: int = 8, require_converged: bool = True,
                         return_data: bool = False):
    """Fitted exponents of u ~ t^a and u ~ depth^b from the top level.

    The time slope is taken at the deepest cell (or ``point``) over snapshots
    with ``t >= t_min_frac * T``; the distance slope at the final time over
    cells with depth in ``band`` (default 0.05 to 0.2 inradius), averaged in
    ``n_bands`` geometric bins.

    Raises:
        InsufficientData: fewer than 4 usable times or bins, or a report that
            is not CONVERGED (unless ``require_converged`` is False).
    """
    if not 1.0 < p < 2.0:
        raise ValueError("barrier fits need 1 < p < 2")
    if require_converged and report.classification != CONVERGED:
        raise InsufficientData(f"report is {report.classification}, not CONVERGED")
    traj = report.limit
    mesh = traj.mesh
    depth = mesh.cell_depth
    idx = int(np.argmax(depth)) if point is None else int(point)
    T = traj.times[-1]
    tsel = (traj.times >= t_min_frac * T) & (traj.times > 0) & (traj.values[:, idx] > 0)
    if tsel.sum() < 4:
        raise InsufficientData("need at least 4 snapshot times with positive values")
    lt = np.log(traj.times[tsel])
    lu = np.log(traj.values[tsel, idx])
    time_exp = _slope(lt, lu)

    inr = mesh.domain.inradius if mesh.domain is not None else float(np.max(depth))
    lo, hi = band if band is not None else (0.05 * inr, 0.2 * inr)
    final = traj.values[-1]
    sel = (depth >= lo) & (depth <= hi) & (final > 0)
    edges = np.geomspace(lo, hi, n_bands + 1)
    which = np.digitize(depth[sel], edges) - 1
    xs, ys = [], []
    for b in range(n_bands):
        m = which == b
        if np.any(m):
            xs.append(np.mean(np.log(depth[sel][m])))
            ys.append(np.mean(np.log(final[sel][m])))
    if len(xs) < 4:
        raise InsufficientData("need at least 4 populated distance bands")
    dist_exp = _slope(np.array(xs), np.array(ys))
    if return_data:
        return time_exp, dist_exp, {"log_t": lt, "log_u_t": lu, "log_d": np.array(xs), "log_u_d": np.array(ys)}
    return time_exp, dist_exp


def write_report_csv(report: LadderReport, path) -> None:
    """Rows (level, time, L1_K, sup_K, diff_prev, violations) and a trailing classification record."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["level", "n", "time", "L1_K", "sup_K", "diff_prev", "violations"])
        for i, lev in enumerate(report.levels):
            if lev.status == FAILED:
                w.writerow([i, f"{lev.n:.17g}", "", "", "", "", f"FAILED: {lev.error}"])
                continue
            for j, t in enumerate(lev.trajectory.times):
                w.writerow([i, f"{lev.n:.17g}", f"{t:.17g}", f"{lev.l1[j]:.17g}", f"{lev.sup[j]:.17g}",
                            f"{lev.diff_prev:.17g}", f"{lev.violation:.17g}"])
        fh.write("# " + report.classification_line() + "\n")
