import json

import numpy as np
import pytest

from landau.exponents import ExponentSet
from landau.grid import Grid, ScalarField
from landau.kernels import Potential
from landau.pipeline import (AppearanceResult, PipelineStageError,
                             balance_constant, lp_appearance_check,
                             lp_balance_check, run_pipeline)
from landau.solver import DiagnosticRecord, SolverConfig, Trajectory

from conftest import BIMAX


def gaussian(grid, T=1.0):
    r2 = grid.radius_sq()
    vals = np.exp(-r2 / (2.0 * T)) / (2.0 * np.pi * T) ** (grid.d / 2.0)
    return ScalarField(grid, vals)


def test_balance_constant():
    d, gamma, p, k = 3, -1.0, 2.0, 2.0
    want = max(p - 1, 2 * k / (gamma + 1 + d),
               d * d * k * k / ((d - 1) * (d + gamma + 2)))
    assert balance_constant(d, gamma, p, k) == pytest.approx(want)
    assert balance_constant(3, -1.0, 2.0, 0.0) == pytest.approx(1.0)


def _synthetic_traj(grid, times, exponent):
    """Trajectory whose L^2 power decays like t^exponent."""
    base = gaussian(grid)
    snaps, recs = [], []
    norm = grid.integrate_values(base.values**2)
    for t in times:
        c = np.sqrt(t**exponent / norm)
        snaps.append((t, ScalarField(grid, c * base.values)))
        recs.append(DiagnosticRecord(time=t, dt=1e-3, mass=1.0,
                                     momentum=(0, 0, 0), energy=3.0,
                                     entropy=-4.0, min_f=0.0, max_f=1.0,
                                     entropy_dissipation=0.0))
    return Trajectory(grid=grid, pot=Potential(-1.0), snapshots=snaps,
                      records=recs)


def test_lp_appearance_recovers_exponent(grid12):
    times = np.geomspace(0.004, 0.5, 12)
    traj = _synthetic_traj(grid12, times, -1.0)
    exps = ExponentSet(d=3, gamma=-1.0, p=2.0, q=2.4)
    res = lp_appearance_check(traj, 2.0, 0.0, exps, window=(0.004, 0.1))
    assert res.fitted_exponent == pytest.approx(-1.0, abs=0.05)
    assert res.theoretical_exponent == pytest.approx(-1.5)
    d = res.as_dict()
    assert "fitted_exponent" in d and "margin_max" in d and "margin_median" in d


def test_lp_appearance_needs_early_snapshots(grid12):
    traj = _synthetic_traj(grid12, [0.2, 0.3, 0.4], -1.0)
    exps = ExponentSet(d=3, gamma=-1.0, p=2.0, q=2.4)
    with pytest.raises(ValueError):
        lp_appearance_check(traj, 2.0, 0.0, exps, window=(0.001, 0.1))


def test_appearance_bounded_median():
    series = [(0.01, 0.001), (0.02, 0.001), (0.03, 0.002), (0.05, 0.002),
              (0.5, 1.0), (0.9, 1.2), (1.0, 1.3)]
    res = AppearanceResult(sup_value=1.3, fitted_exponent=-0.1,
                           theoretical_exponent=-1.5, margin_series=series,
                           window=(0.01, 0.1))
    # the whole-series median is dragged down by the early points
    assert not res.bounded(factor=2.0)
    # restricting the median to the post-window plateau
    assert res.bounded(factor=2.0, after=0.1)


def test_lp_balance_check_structure(short_traj):
    exps = ExponentSet(d=3, gamma=-1.0, p=2.0, q=2.4)
    out = lp_balance_check(short_traj, 2.0, 2.0, Potential(-1.0), exps)
    # midpoints between consecutive positive-time snapshots
    positive = [t for t, _ in short_traj.snapshots if t > 0]
    assert len(out.times) == len(positive) - 1
    assert len(out.margins) == len(out.times)
    assert out.scale > 0


def test_run_pipeline_rejects_inadmissible_pair(grid12):
    cfg = SolverConfig(pot=Potential(-1.0), grid=grid12, t_end=0.3,
                       initial_condition=BIMAX)
    with pytest.raises(PipelineStageError) as err:
        run_pipeline(cfg, p=1.3, q=2.0, r=5.0, k=0.0)
    assert err.value.stage == "admissibility"


def test_run_pipeline_end_to_end(tmp_path):
    grid = Grid(d=3, n=12, extent=6.0)
    cfg = SolverConfig(pot=Potential(-1.0), grid=grid, t_end=0.3,
                       initial_condition=BIMAX,
                       snapshot_times=tuple(sorted(set(
                           np.round(np.concatenate([
                               np.geomspace(0.002, 0.05, 6),
                               np.linspace(0.05, 0.3, 6)]), 12)))))
    q = 1.2
    r = 2.0 / (3 + 2 - 1 - 3.0 / q)
    rep = run_pipeline(cfg, p=1.3, q=q, r=r, k=0.0, t_star=0.1,
                       extra_ps=(2.0,))
    assert rep.admissible
    assert rep.prodi_serrin_value is not None
    assert np.isfinite(rep.prodi_serrin_value)
    stages = [s["stage"] for s in rep.verdict_chain]
    assert stages == ["run", "prodi_serrin", "lp_appearance",
                      "dissipation_budget", "degiorgi"]
    assert all(s["passed"] for s in rep.verdict_chain), rep.verdict_chain
    assert rep.passed()
    rep.write(tmp_path)
    data = json.loads((tmp_path / "pipeline_report.json").read_text())
    assert data["q"] == q
    assert (tmp_path / "pipeline_stages.csv").exists()
