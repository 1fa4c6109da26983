"""Command-line interface.

Exit codes: 0 success, 1 verification failure, 2 usage error, 3 solver failure.
Options may also come from a ``key = value`` file given with ``--config``;
command-line flags take precedence.
"""
from __future__ import annotations

import argparse
import csv
import math
import os
import sys

import numpy as np

from . import cheeger as chg
from .exact import example51_initial, example51_value
from .fastdiff import FluxParams, NoConvergence, dirichlet_energy, evolve
from .geometry import Disk, GeometryError, parse_shape
from .ladder import (CONVERGED, DIVERGING, InsufficientData, LadderConfig, barrier_exponent_fit,
                     monotone_check, run_ladder, write_report_csv)
from .mesh import DomainSpec, EmptyDomain, Field, build_mesh
from .plots import loglog_svg
from .store import load_trajectory, read_manifest, save_trajectory, write_manifest
from .tvflow import tv_evolve
from .verify import (CANONICAL_CLAMPS, Bump, contraction_gap, entropy_residual, sup_bound_gap)

EXIT_OK, EXIT_VERIFY, EXIT_USAGE, EXIT_SOLVER = 0, 1, 2, 3


class UsageError(Exception):
    pass


def read_config(path) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise UsageError(f"{path}:{lineno}: expected key = value")
            out[key.strip().replace("-", "_")] = value.strip()
    return out


def _add_domain(p, default_h=1 / 64):
    p.add_argument("--domain", default="disk:1", help="disk:R, square:a, rect:WxH or polygon:x,y;...")
    p.add_argument("--h", type=float, default=default_h, help="grid spacing")
    p.add_argument("--radial", action="store_true", help="1D radial mesh (disks only)")
    p.add_argument("--s0", type=float, default=None, help="interior-ball radius")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="largeflow", description=__doc__.splitlines()[0])
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value option file (flags win)")
    common.add_argument("--jobs", type=int, default=1, help="worker processes for ladder levels and rasters")
    parser.add_argument("--config", help="key = value option file (flags win)")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", parents=[common], help="one boundary-lift run")
    _add_domain(sim)
    sim.add_argument("--p", type=float, required=True)
    sim.add_argument("--n", type=float, required=True, help="boundary value")
    sim.add_argument("--T", type=float, required=True)
    sim.add_argument("--tau", type=float, default=None)
    sim.add_argument("--eps", type=float, default=None, help="regularisation (p = 1: finest level)")
    sim.add_argument("--u0", default="zero", help="zero, const:<c>, example51 or a snapshot CSV")
    sim.add_argument("--snapshots", type=int, default=10)
    sim.add_argument("--out", required=True)

    lad = sub.add_parser("ladder", parents=[common], help="boundary-lift ladder and classification")
    _add_domain(lad)
    lad.add_argument("--p", type=float, required=True)
    lad.add_argument("--T", type=float, required=True)
    lad.add_argument("--n0", type=float, default=4.0)
    lad.add_argument("--levels", type=int, default=6)
    lad.add_argument("--factor", type=float, default=2.0)
    lad.add_argument("--delta", type=float, default=None)
    lad.add_argument("--tau", type=float, default=None)
    lad.add_argument("--eps", type=float, default=None)
    lad.add_argument("--snapshots", type=int, default=20)
    lad.add_argument("--u0", default="zero")
    lad.add_argument("--svg", action="store_true", help="write barrier-fit plots")
    lad.add_argument("--out", required=True)

    ex = sub.add_parser("example51", parents=[common], help="closed-form disk solution as CSV")
    ex.add_argument("--t", type=float, required=True)
    ex.add_argument("--samples", type=int, default=100)
    ex.add_argument("--compare", default=None, help="run directory to compare against")

    ch = sub.add_parser("cheeger", parents=[common], help="Cheeger radius and constant of a convex shape")
    ch.add_argument("--shape", required=True)
    ch.add_argument("--raster", type=int, default=None, help="H_C raster resolution")
    ch.add_argument("--out", default=None, help="raster CSV path (default stdout)")

    ver = sub.add_parser("verify", parents=[common], help="post-process stored runs")
    ver.add_argument("--suite", required=True,
                     choices=["contraction", "sup_bound", "trace", "energy", "entropy", "example51", "monotone"])
    ver.add_argument("--in", dest="inputs", action="append", required=True)

    non = sub.add_parser("nonexistence", parents=[common], help="ladder preset for p >= 2, expected to diverge")
    _add_domain(non)
    non.add_argument("--p", type=float, required=True)
    non.add_argument("--T", type=float, default=0.5)
    non.add_argument("--n0", type=float, default=4.0)
    non.add_argument("--levels", type=int, default=6)
    non.add_argument("--out", default=None)
    return parser


def _domain(args) -> DomainSpec:
    try:
        shape = parse_shape(args.domain)
        return DomainSpec(shape, args.h, s0=args.s0, radial=args.radial)
    except GeometryError as exc:
        raise UsageError(str(exc)) from exc


def _initial(spec: str, mesh):
    if spec == "zero":
        return np.zeros(mesh.n_cells)
    if spec.startswith("const:"):
        return np.full(mesh.n_cells, float(spec.split(":", 1)[1]))
    if spec == "example51":
        rho = np.hypot(mesh.centers[:, 0], mesh.centers[:, 1])
        if mesh.domain is None or not isinstance(mesh.domain.shape, Disk) or mesh.domain.shape.radius != 1:
            raise UsageError("example51 initial datum needs the unit disk")
        return example51_initial(np.minimum(rho, 1 - 1e-12))
    if os.path.exists(spec):
        from .mesh import read_field_csv
        return read_field_csv(spec, mesh).values
    raise UsageError(f"unknown initial datum {spec!r}")


def _cmd_simulate(args):
    mesh = build_mesh(_domain(args))
    u0 = Field(mesh, _initial(args.u0, mesh))
    snaps = args.T * np.arange(1, args.snapshots + 1) / args.snapshots
    try:
        if args.p == 1:
            sched = None
            if args.eps is not None:
                sched = tuple(args.eps * f for f in (1e3, 1e2, 1e1, 1.0))
            traj = tv_evolve(u0, args.T, args.tau, args.n, sched, snaps)
        else:
            eps = args.eps if args.eps is not None else (
                1e-6 * args.n / mesh.domain.diameter if args.p < 2 else 0.0)
            traj = evolve(u0, args.T, args.tau, FluxParams(args.p, eps), args.n, snaps)
    except NoConvergence as exc:
        os.makedirs(args.out, exist_ok=True)
        path = os.path.join(args.out, "manifest.json")
        write_manifest(path, {"status": "FAILED", "error": str(exc), "domain": args.domain,
                              "h": args.h, "p": args.p, "n": args.n})
        print(f"solver failure: {exc}; manifest {path}", file=sys.stderr)
        return EXIT_SOLVER
    path = save_trajectory(traj, args.out, {"status": "OK", "u0": args.u0})
    print(path)
    return EXIT_OK


def _ladder_config(args, levels=None) -> LadderConfig:
    return LadderConfig(n0=args.n0, levels=levels or args.levels, factor=getattr(args, "factor", 2.0),
                        delta=getattr(args, "delta", None), tau=getattr(args, "tau", None),
                        snapshots=getattr(args, "snapshots", 20), eps=getattr(args, "eps", None),
                        jobs=args.jobs)


def _cmd_ladder(args):
    dom = _domain(args)
    mesh = build_mesh(dom)
    u0 = _initial(args.u0, mesh)
    try:
        config = _ladder_config(args)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    report = run_ladder(mesh, u0, args.T, args.p, config)
    os.makedirs(args.out, exist_ok=True)
    write_report_csv(report, os.path.join(args.out, "ladder.csv"))
    man = {"domain": dom.describe(), "radial": dom.radial, "h": mesh.h, "p": args.p, "T": args.T,
           "n_schedule": [lev.n for lev in report.levels], "delta": report.delta,
           "tau": report.tau, "eps": report.eps, "classification": report.classification,
           "reason": report.reason, "monotone_violation": monotone_check(report)
           if len(report.ok_levels) > 1 else None}
    if args.svg and 1 < args.p < 2:
        try:
            te, de, data = barrier_exponent_fit(report, args.p, require_converged=False, return_data=True)
            loglog_svg(os.path.join(args.out, "barrier_time.svg"), data["log_t"], data["log_u_t"], te,
                       "time exponent", "log t", "log u")
            loglog_svg(os.path.join(args.out, "barrier_distance.svg"), data["log_d"], data["log_u_d"], de,
                       "distance exponent", "log dist", "log u")
            man.update(time_exponent=te, distance_exponent=de)
        except InsufficientData as exc:
            man["barrier_fit"] = f"unavailable: {exc}"
    if report.ok_levels:
        save_trajectory(report.limit, os.path.join(args.out, "limit"))
    write_manifest(os.path.join(args.out, "manifest.json"), man)
    print(report.classification_line())
    failed = [lev for lev in report.levels if lev.status != "OK"]
    if failed:
        print(f"solver failure at n={failed[0].n:g}: {failed[0].error}; manifest "
              f"{os.path.join(args.out, 'manifest.json')}", file=sys.stderr)
        return EXIT_SOLVER
    return EXIT_OK


def _cmd_example51(args):
    if args.t < 0 or args.samples < 1:
        raise UsageError("need t >= 0 and a positive sample count")
    rho = np.arange(args.samples) / args.samples
    vals = example51_value(args.t, rho)
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["rho", "value"])
    for r, v in zip(rho, np.atleast_1d(vals)):
        w.writerow([f"{r:.17g}", f"{v:.17g}"])
    if args.compare:
        traj = load_trajectory(args.compare)
        i = int(np.argmin(np.abs(traj.times - args.t)))
        if abs(traj.times[i] - args.t) > 1e-9 * max(1.0, args.t):
            raise UsageError(f"run has no snapshot at t={args.t}")
        mesh = traj.mesh
        r = np.hypot(mesh.centers[:, 0], mesh.centers[:, 1])
        mask = r <= 0.9
        exact = example51_value(args.t, r[mask])
        vol = mesh.cell_volume[mask]
        err = float(np.sum(vol * np.abs(traj.values[i][mask] - exact)) / np.sum(vol * np.abs(exact)))
        print(f"# relative_l1_error={err:.17g}")
    return EXIT_OK


def _cmd_cheeger(args):
    try:
        shape = parse_shape(args.shape)
    except GeometryError as exc:
        raise UsageError(str(exc)) from exc
    res = chg.cheeger_constant(shape)
    print(f"r_star = {res.r_star:.8g}")
    print(f"h = {res.h:.8g}")
    print(f"calibrable = {str(res.calibrable).lower()}")
    if args.raster:
        lo, hi = shape.bbox()
        m = args.raster
        xs = lo[0] + (np.arange(m) + 0.5) * (hi[0] - lo[0]) / m
        ys = lo[1] + (np.arange(m) + 0.5) * (hi[1] - lo[1]) / m
        fh = open(args.out, "w", newline="") if args.out else sys.stdout
        try:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["x", "y", "H_C"])
            for x in xs:
                for y in ys:
                    if shape.contains(np.array([x, y])):
                        val = chg.h_field(shape, (x, y), cheeger=res)
                        w.writerow([f"{x:.17g}", f"{y:.17g}", "inf" if math.isinf(val) else f"{val:.17g}"])
        finally:
            if args.out:
                fh.close()
    return EXIT_OK


def _default_bump(traj):
    mesh = traj.mesh
    dom = mesh.domain
    if dom is None:
        raise UsageError("entropy suite needs a run with a domain")
    lo, hi = dom.shape.bbox()
    center = (0.0, 0.0) if mesh.radial else tuple(0.5 * (lo + hi))
    depth = dom.shape.signed_depth(np.array(center)) if not mesh.radial else dom.inradius
    T = traj.times[-1]
    return Bump(center, 0.8 * depth - mesh.h, 0.1 * T, 0.9 * T)


def _cmd_verify(args):
    rows = []
    if args.suite == "monotone":
        man = read_manifest(args.inputs[0])
        if "monotone_violation" not in man:
            raise UsageError("monotone suite needs a ladder output directory")
        rows.append(("monotone_violation", man["monotone_violation"] or 0.0, 1e-9))
        return _emit(rows)
    tr = load_trajectory(args.inputs[0])
    if args.suite == "contraction":
        if len(args.inputs) != 2:
            raise UsageError("contraction needs two --in directories")
        other = load_trajectory(args.inputs[1], mesh=tr.mesh)
        thr = 1e-6 * tr.mesh.total_volume
        rows.append(("contraction_gap", contraction_gap(tr, other), thr))
    elif args.suite == "sup_bound":
        rows.append(("sup_bound_gap", sup_bound_gap(tr), 0.05))
    elif args.suite == "trace":
        if tr.boundary_trace is None:
            raise UsageError("trace suite needs a p = 1 run")
        rows.append(("min_boundary_trace_deficit", float(1 - np.min(tr.boundary_trace[1:])), 0.05))
    elif args.suite == "energy":
        params = FluxParams(tr.p, tr.eps)
        e = np.array([dirichlet_energy(tr.field(i), params, tr.n) for i in range(len(tr))])
        rise = float(np.max(np.diff(e) / np.maximum(np.abs(e[:-1]), 1e-300))) if len(e) > 1 else 0.0
        rows.append(("energy_relative_increase", rise, 1e-8))
    elif args.suite == "entropy":
        eta = _default_bump(tr)
        for i, clamp in enumerate(CANONICAL_CLAMPS):
            val = entropy_residual(tr, clamp, 2.0, 1.0, eta)
            rows.append((f"entropy_residual_{i}", val, 5e-2))
    elif args.suite == "example51":
        mesh = tr.mesh
        r = np.hypot(mesh.centers[:, 0], mesh.centers[:, 1])
        mask = r <= 0.9
        t = tr.times[-1]
        exact = example51_value(t, r[mask])
        vol = mesh.cell_volume[mask]
        err = float(np.sum(vol * np.abs(tr.values[-1][mask] - exact)) / np.sum(vol * np.abs(exact)))
        rows.append(("example51_relative_l1", err, 0.05))
    return _emit(rows)


def _emit(rows):
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["check", "value", "threshold", "verdict"])
    ok = True
    for name, val, thr in rows:
        passed = bool(val <= thr)
        ok &= passed
        w.writerow([name, f"{val:.17g}", f"{thr:.17g}", "PASS" if passed else "FAIL"])
    return EXIT_OK if ok else EXIT_VERIFY


def _cmd_nonexistence(args):
    if args.p < 2:
        raise UsageError("nonexistence runs need p >= 2")
    dom = _domain(args)
    config = LadderConfig(n0=args.n0, levels=args.levels, jobs=args.jobs)
    report = run_ladder(dom, None, args.T, args.p, config)
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        write_report_csv(report, os.path.join(args.out, "ladder.csv"))
    print(report.classification_line())
    return EXIT_OK if report.classification == DIVERGING else EXIT_VERIFY


_COMMANDS = {
    "simulate": _cmd_simulate,
    "ladder": _cmd_ladder,
    "example51": _cmd_example51,
    "cheeger": _cmd_cheeger,
    "verify": _cmd_verify,
    "nonexistence": _cmd_nonexistence,
}


def _apply_config(parser, argv):
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if not known.config:
        return
    cfg = read_config(known.config)
    subparsers = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
    for sp in [parser, *subparsers.choices.values()]:
        dests = {a.dest: a for a in sp._actions}
        values = {}
        for key, raw in cfg.items():
            act = dests.get(key)
            if act is None:
                continue
            if isinstance(act, argparse._StoreTrueAction):
                values[key] = raw.lower() in ("1", "true", "yes", "on")
            else:
                values[key] = raw
                act.required = False
        sp.set_defaults(**values)


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        _apply_config(parser, argv)
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    except (UsageError, OSError) as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        return _COMMANDS[args.command](args)
    except (UsageError, GeometryError, EmptyDomain) as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NoConvergence as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
