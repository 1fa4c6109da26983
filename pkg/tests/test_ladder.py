import copy

import numpy as np
import pytest

from largeflow.fastdiff import FluxParams, SolverSettings
from largeflow.geometry import Disk, rectangle
from largeflow.ladder import (CONVERGED, DIVERGING, FAILED, UNDECIDED, InsufficientData, LadderConfig,
                              barrier_exponent_fit, energy_uniformity, monotone_check, run_ladder,
                              write_report_csv)
from largeflow.mesh import DomainSpec, truncate_values

DISK64 = DomainSpec(Disk(1.0), 1 / 64, radial=True)


@pytest.fixture(scope="module")
def p2_report():
    return run_ladder(DISK64, None, 0.5, 2.0, LadderConfig(snapshots=10))


@pytest.fixture(scope="module")
def p15_report():
    return run_ladder(DISK64, None, 0.5, 1.5, LadderConfig(snapshots=10))


def test_config_schedule():
    assert LadderConfig().schedule() == (4, 8, 16, 32, 64, 128)
    assert LadderConfig(n_schedule=(1, 10)).schedule() == (1.0, 10.0)
    with pytest.raises(ValueError):
        LadderConfig(n_schedule=(4, 4)).schedule()
    with pytest.raises(ValueError):
        run_ladder(DISK64, None, 0.5, 2.0, LadderConfig(delta=1 / 64))
    with pytest.raises(ValueError):
        run_ladder(DISK64, -1.0 * np.ones(64), 0.5, 2.0)


def test_p2_diverges_linearly(p2_report):
    r = p2_report
    assert r.classification == DIVERGING
    assert r.growth == pytest.approx(2.0, rel=1e-9)
    scaled = [lev.trajectory.values[:, r.monitor] / lev.n for lev in r.levels]
    assert max(np.max(np.abs(s - scaled[0])) for s in scaled) <= 1e-6


def test_p15_converges_monotonically(p15_report):
    r = p15_report
    assert r.classification == CONVERGED
    assert monotone_check(r) <= 1e-9
    assert np.all(r.ratios[-2:] <= 0.9)
    assert r.growth < 1.5


def test_p15_truncations_saturate_at_boundary(p15_report):
    T = p15_report.times[-1]
    for lev in p15_report.levels:
        tr = lev.trajectory
        edge = tr.mesh.cell_depth < tr.mesh.h
        late = tr.times >= T / 10
        for k in (1, 2, 4):
            if lev.n >= 2 * k:
                assert np.min(truncate_values(tr.values[late][:, edge], -k, k)) == k


def test_p15_energy_uniform(p15_report):
    changes = energy_uniformity(p15_report)
    assert set(changes) == {1, 2, 4}
    assert max(changes.values()) <= 0.05


def test_tv_ladder_limit_is_calibrable_rate():
    r = run_ladder(DISK64, None, 1.0, 1.0, LadderConfig(snapshots=5, tau=0.01))
    assert r.classification == CONVERGED
    lim = r.limit
    target = np.broadcast_to(2.0 * lim.times[:, None], lim.values[:, r.monitor].shape)
    np.testing.assert_allclose(lim.values[:, r.monitor], target, atol=0.02)
    assert monotone_check(r) <= 1e-9


def test_monotone_check_controls(p15_report):
    same = copy.copy(p15_report)
    same.levels = [p15_report.levels[2], p15_report.levels[2]]
    assert monotone_check(same) == 0.0
    swapped = copy.copy(p15_report)
    swapped.levels = [p15_report.levels[3], p15_report.levels[2]]
    assert monotone_check(swapped) > 0
    single = copy.copy(p15_report)
    single.levels = p15_report.levels[:1]
    with pytest.raises(InsufficientData):
        monotone_check(single)


def test_barrier_fit_requires_convergence(p2_report):
    with pytest.raises(InsufficientData):
        barrier_exponent_fit(p2_report, 1.5)
    with pytest.raises(ValueError):
        barrier_exponent_fit(p2_report, 2.0)


def test_barrier_fit_needs_snapshots():
    r = run_ladder(DISK64, None, 0.5, 1.5, LadderConfig(snapshots=2, levels=4))
    with pytest.raises(InsufficientData):
        barrier_exponent_fit(r, 1.5, require_converged=False)


def test_barrier_exponents_p12():
    r = run_ladder(DomainSpec(Disk(1.0), 1 / 128, radial=True), None, 0.5, 1.2,
                   LadderConfig(n0=4, factor=8, levels=7, snapshots=20))
    assert r.classification == CONVERGED
    time_exp, dist_exp = barrier_exponent_fit(r, 1.2)
    assert abs(time_exp / 1.25 - 1) <= 0.1
    assert abs(dist_exp / -1.5 - 1) <= 0.1


def test_failed_levels_leave_undecided():
    r = run_ladder(DISK64, None, 0.5, 1.5, LadderConfig(levels=3, settings=SolverSettings(max_iter=1)))
    assert all(lev.status == FAILED for lev in r.levels)
    assert r.classification == UNDECIDED
    with pytest.raises(InsufficientData):
        r.limit


def test_flux_params_eps_is_shared():
    r = run_ladder(DISK64, None, 0.2, FluxParams(1.5, 1e-5), LadderConfig(levels=2, snapshots=2))
    assert r.eps == 1e-5
    assert all(lev.trajectory.eps == 1e-5 for lev in r.levels)


def test_two_dimensional_ladder_runs():
    r = run_ladder(DomainSpec(rectangle(1, 1), 1 / 16), None, 0.2, 2.0, LadderConfig(levels=3, snapshots=4))
    assert r.classification == DIVERGING


def test_parallel_levels_reproduce_serial():
    cfg = LadderConfig(levels=3, snapshots=3)
    a = run_ladder(DISK64, None, 0.2, 1.5, cfg)
    b = run_ladder(DISK64, None, 0.2, 1.5, LadderConfig(levels=3, snapshots=3, jobs=2))
    for la, lb in zip(a.levels, b.levels):
        assert np.array_equal(la.trajectory.values, lb.trajectory.values)


def test_report_csv(tmp_path, p2_report):
    path = tmp_path / "ladder.csv"
    write_report_csv(p2_report, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "level,n,time,L1_K,sup_K,diff_prev,violations"
    assert lines[-1].startswith("# classification=DIVERGING")
    assert len(lines) == 2 + 6 * 11
