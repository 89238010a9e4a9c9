"""End-to-end regularization chain on a single scenario.

Runs the solver, measures the time-integrability hypothesis on the computed
solution, verifies the instantaneous appearance and balance of weighted L^p
norms, accumulates the dissipation budget, and finishes with the level-set
iteration verdict. Hypotheses are runtime gates, measured from the run itself,
never assumed; a report never contains a later stage without the earlier ones.
"""

from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

from . import solver
from .degiorgi import LevelSetParams, iterate
from .exponents import (AdmissibilityError, ExponentSet, Kp_constant,
                        c0_constant, prodi_serrin_rate)
from .functionals import (coercivity_estimate, dissipation, moment,
                          prodi_serrin_integral, weighted_lp)
from .grid import ScalarField
from .kernels import Potential, coefficient_fields, convolve_power


class PipelineStageError(RuntimeError):
    """An error raised inside a pipeline stage, tagged with the stage name."""

    def __init__(self, stage: str, message: str):
        super().__init__(f"[stage {stage}] {message}")
        self.stage = stage


def _positive_snapshots(traj):
    return [(t, fld) for t, fld in traj.snapshots if t > 0]


@dataclass
class AppearanceResult:
    """Small-time envelope fit of a weighted L^p norm along a trajectory."""

    sup_value: float
    fitted_exponent: float
    theoretical_exponent: float
    margin_series: list
    window: tuple
    value_series: list = field(default_factory=list)

    def bounded(self, factor: float = 2.0, after: float | None = None) -> bool:
        """Peak margin within a factor of the median margin (past `after`)."""
        margins = [m for t, m in self.margin_series if after is None or t >= after]
        if not margins:
            return False
        med = float(np.median(margins))
        return med > 0 and max(m for _, m in self.margin_series) <= factor * med

    def as_dict(self) -> dict:
        return {
            "sup_value": self.sup_value,
            "fitted_exponent": self.fitted_exponent,
            "theoretical_exponent": self.theoretical_exponent,
            "window": list(self.window),
            "margin_max": max(m for _, m in self.margin_series),
            "margin_median": float(np.median([m for _, m in self.margin_series])),
            "value_series": [[t, v] for t, v in self.value_series],
            "margin_series": [[t, m] for t, m in self.margin_series],
        }


def lp_appearance_check(traj, p: float, k: float, exps: ExponentSet,
                        window: tuple | None = None) -> AppearanceResult:
    """Fit the small-time blow-up rate of M_{k,p}(t) and its margin series.

    The fitted quantity is the log-log slope of M_{k,p} on the early window
    (default [3*dt0, 0.1] with dt0 the first accepted step); the theoretical
    envelope exponent is -d(p-1)/2, and the margin series
    M_{k,p}(t) * min(1, t^{d(p-1)/2}) must stay bounded.
    """
    d = traj.grid.d
    snaps = _positive_snapshots(traj)
    if window is None:
        if not traj.records:
            raise ValueError("no step records to derive the default early window")
        window = (3.0 * traj.records[0].dt, 0.1)
    t1, t2 = float(window[0]), float(window[1])
    times = np.array([t for t, _ in snaps])
    values = np.array([weighted_lp(fld, k, p) for _, fld in snaps])
    early = (times >= t1) & (times <= t2)
    if int(early.sum()) < 3:
        raise ValueError(
            f"too few early snapshots in [{t1:g}, {t2:g}]: {int(early.sum())} < 3"
        )
    slope = float(np.polyfit(np.log(times[early]), np.log(values[early]), 1)[0])
    expo = d * (p - 1) / 2.0
    margins = [(float(t), float(v * min(1.0, t**expo)))
               for t, v in zip(times, values)]
    return AppearanceResult(
        sup_value=float(values.max()), fitted_exponent=slope,
        theoretical_exponent=-expo, margin_series=margins, window=(t1, t2),
        value_series=[(float(t), float(v)) for t, v in zip(times, values)],
    )


def _c_shift_field(f: ScalarField, pot: Potential, shift: int) -> np.ndarray:
    """Singular-mass field with the kernel exponent shifted by a nonnegative integer."""
    d = pot.d
    expo = pot.gamma + shift
    if expo <= -d:
        return -pot.c_d * f.values
    return -(d - 1) * (expo + d) * convolve_power(f, expo).values


def balance_constant(d: int, gamma: float, p: float, k: float) -> float:
    """Source constant max(p-1, 2k/(gamma+1+d), d^2 k^2/((d-1)(d+gamma+2)))."""
    return max(p - 1.0, 2.0 * k / (gamma + 1.0 + d),
               d * d * k * k / ((d - 1.0) * (d + gamma + 2.0)))


@dataclass
class BalanceResult:
    """Midpoint-sampled sides of the weighted-norm differential inequality."""

    times: list
    lhs: list
    rhs: list
    margins: list
    scale: float

    def as_dict(self) -> dict:
        return {"times": self.times, "lhs": self.lhs, "rhs": self.rhs,
                "margins": self.margins, "scale": self.scale}


def lp_balance_check(traj, p: float, k: float, pot: Potential,
                     exps: ExponentSet) -> BalanceResult:
    """Evaluate both sides of the weighted-norm estimate at snapshot midpoints.

    lhs = d/dt M_{k,p} + 2 K(p) D_{k+gamma,p}; rhs = K(p)(k+gamma)^2
    M_{k+gamma,p} - C_{k,gamma,p} sum_{i=0..2} int <v>^{k-i} c_{gamma+i}[f] f^p.
    The derivative is a centered difference across each snapshot pair and the
    fields enter through the pair average; reported margins are rhs - lhs.
    """
    if k < 0:
        raise ValueError(f"weight order k = {k} must be nonnegative")
    d, gamma = pot.d, pot.gamma
    snaps = _positive_snapshots(traj)
    if len(snaps) < 2:
        raise ValueError("need at least two positive-time snapshots")
    grid = traj.grid
    Ckgp = balance_constant(d, gamma, p, k)
    times, lhs_list, rhs_list, margins = [], [], [], []
    scale = 0.0
    norms = [weighted_lp(fld, k, p) for _, fld in snaps]
    for j in range(len(snaps) - 1):
        (ta, fa), (tb, fb) = snaps[j], snaps[j + 1]
        dmdt = (norms[j + 1] - norms[j]) / (tb - ta)
        fmid = ScalarField(grid, 0.5 * (fa.values + fb.values))
        coeffs = coefficient_fields(fmid, pot)
        Kp = Kp_constant(coercivity_estimate(coeffs, pot), p)
        diss = dissipation(fmid, k + gamma, p)
        mshift = weighted_lp(fmid, k + gamma, p)
        fpow = np.maximum(fmid.values, 0.0) ** p
        source = 0.0
        for i in range(3):
            cfld = coeffs.c.values if i == 0 else _c_shift_field(fmid, pot, i)
            source += grid.integrate_values(cfld * fpow, k - i)
        lhs = dmdt + 2.0 * Kp * diss
        rhs = Kp * (k + gamma) ** 2 * mshift - Ckgp * source
        times.append(0.5 * (ta + tb))
        lhs_list.append(lhs)
        rhs_list.append(rhs)
        margins.append(rhs - lhs)
        scale = max(scale, abs(lhs), abs(rhs), 2.0 * Kp * diss)
    return BalanceResult(times=times, lhs=lhs_list, rhs=rhs_list,
                         margins=margins, scale=scale)


@dataclass
class PipelineReport:
    """Stage-by-stage record of the regularization chain on one scenario."""

    scenario: dict
    q: float
    r: float
    admissible: bool
    exponents: dict
    initial_moments: dict = field(default_factory=dict)
    prodi_serrin_value: float | None = None
    appearance_table: dict = field(default_factory=dict)
    dissipation_budget: float | None = None
    level_set: dict | None = None
    verdict_chain: list = field(default_factory=list)

    def passed(self) -> bool:
        return bool(self.verdict_chain) and all(s["passed"] for s in self.verdict_chain)

    def as_dict(self) -> dict:
        return {
            "scenario": self.scenario, "q": self.q, "r": self.r,
            "admissible": self.admissible, "exponents": self.exponents,
            "initial_moments": self.initial_moments,
            "prodi_serrin_value": self.prodi_serrin_value,
            "appearance_table": self.appearance_table,
            "dissipation_budget": self.dissipation_budget,
            "level_set": self.level_set,
            "verdict_chain": self.verdict_chain,
            "passed": self.passed(),
        }

    def write(self, out_dir) -> list:
        os.makedirs(out_dir, exist_ok=True)
        paths = []
        report_path = os.path.join(out_dir, "pipeline_report.json")
        with open(report_path, "w") as fh:
            json.dump(self.as_dict(), fh, indent=2)
        paths.append(report_path)
        stage_path = os.path.join(out_dir, "pipeline_stages.csv")
        with open(stage_path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["stage", "passed", "detail"])
            for s in self.verdict_chain:
                w.writerow([s["stage"], int(s["passed"]), s["detail"]])
        paths.append(stage_path)
        return paths


def _default_snapshot_times(t_end: float) -> tuple:
    early = np.geomspace(t_end / 2000.0, t_end / 8.0, 14)
    late = np.linspace(0.0, t_end, 21)
    return tuple(sorted(set(np.round(np.concatenate([early, late]), 12))))


def _degiorgi_q(d: int, gamma: float, p: float) -> float:
    """Recursion exponent with positive iteration gains at this (d, gamma, p)."""
    q_min = max(p + 2.0 / d,
                (d * (p + 1) + max(2.0 + gamma, 0.0)) / (2.0 * d + gamma))
    q_cap = p * (d + 2.0) / d
    if q_min + 0.5 < q_cap:
        return q_min + 0.5
    if q_min < q_cap:
        return 0.5 * (q_min + q_cap)
    raise AdmissibilityError(
        f"no recursion exponent with positive gains and finite moment order "
        f"for (d, gamma, p) = ({d}, {gamma}, {p})"
    )


def run_pipeline(cfg: solver.SolverConfig, p: float, q: float, r: float,
                 k: float, t_star: float = 0.1, level_factor: float = 1.05,
                 n_levels: int = 8, fit_C: float = 1.0,
                 degiorgi_q: float | None = None,
                 extra_ps: tuple = (2.0,)) -> PipelineReport:
    """Execute the full chain and assemble the report.

    Stages, in order: admissibility gate; solver run; time-integrability
    integral of the weighted L^q norm; small-time L^p appearance; dissipation
    budget over [t_star/2, T]; level-set iteration. A stage failure truncates
    the chain; inadmissible parameters refuse before any compute.
    """
    pot, grid = cfg.pot, cfg.grid
    d, gamma = pot.d, pot.gamma
    try:
        want_r = prodi_serrin_rate(d, gamma, q)
        if math.isfinite(r) and abs(want_r - r) > 1e-9:
            raise AdmissibilityError(
                f"(q, r) = ({q}, {r}) violates 2/r + d/q = d+2+gamma "
                f"(expected r = {want_r})"
            )
        exps = ExponentSet(d=d, gamma=gamma, p=p, q=q, r=r, k=k)
    except AdmissibilityError as exc:
        raise PipelineStageError("admissibility", str(exc)) from exc
    if not (0 < t_star < cfg.t_end):
        raise PipelineStageError(
            "admissibility", f"t_star = {t_star} outside (0, {cfg.t_end})")
    if not cfg.snapshot_times:
        cfg = solver.SolverConfig(
            pot=pot, grid=grid, t_end=cfg.t_end,
            initial_condition=cfg.initial_condition, dt_safety=cfg.dt_safety,
            snapshot_times=_default_snapshot_times(cfg.t_end),
            out_dir=cfg.out_dir, cbar_radius=cfg.cbar_radius,
        )

    scenario = {
        "d": d, "gamma": gamma, "n": grid.n, "L": grid.extent,
        "t_end": cfg.t_end, "t_star": t_star,
        "initial_condition": type(cfg.initial_condition).__name__,
        "p": p, "k": k,
    }
    report = PipelineReport(scenario=scenario, q=q, r=r, admissible=True,
                            exponents=exps.as_dict())
    chain = report.verdict_chain

    f0 = solver.initial_field(cfg.initial_condition, grid)
    for order in (2.0, 4.0, exps.derived.get("kappa_q", exps.derived.get("s_q", 2.0))):
        report.initial_moments[f"m_{order:g}"] = moment(f0, order)

    try:
        traj = solver.run(cfg)
    except Exception as exc:
        raise PipelineStageError("run", str(exc)) from exc
    run_ok = not traj.blow_up
    chain.append({"stage": "run", "passed": run_ok,
                  "detail": "completed" if run_ok else f"blow-up: {traj.blow_up_info}"})
    if not run_ok:
        return report

    value = prodi_serrin_integral(traj, q, r, pot)
    report.prodi_serrin_value = value
    ps_ok = math.isfinite(value)
    chain.append({"stage": "prodi_serrin", "passed": ps_ok,
                  "detail": f"integral = {value:.6g}"})
    if not ps_ok:
        return report

    appearance_ok = True
    detail = []
    for pv in sorted({float(p)} | {float(x) for x in extra_ps}):
        try:
            res = lp_appearance_check(traj, pv, k, exps)
        except ValueError as exc:
            raise PipelineStageError("lp_appearance", str(exc)) from exc
        report.appearance_table[f"{pv:g}"] = res.as_dict()
        ok = (res.bounded(after=res.window[1])
              and res.fitted_exponent >= res.theoretical_exponent - 0.3)
        appearance_ok = appearance_ok and ok
        detail.append(f"p={pv:g}: slope {res.fitted_exponent:.3f} "
                      f"vs {res.theoretical_exponent:.3f}")
    chain.append({"stage": "lp_appearance", "passed": appearance_ok,
                  "detail": "; ".join(detail)})
    if not appearance_ok:
        return report

    window = [(t, fld) for t, fld in traj.snapshots if t_star / 2.0 <= t <= cfg.t_end]
    times = np.array([t for t, _ in window])
    diss = np.array([dissipation(fld, k + gamma, p) for _, fld in window])
    budget = float(np.trapezoid(diss, times)) if len(window) > 1 else 0.0
    report.dissipation_budget = budget
    budget_ok = math.isfinite(budget) and len(window) > 1
    chain.append({"stage": "dissipation_budget", "passed": budget_ok,
                  "detail": f"integral over [{t_star / 2:g}, {cfg.t_end:g}] = {budget:.6g}"})
    if not budget_ok:
        return report

    sup_f = max(fld.max for t, fld in traj.snapshots if t >= t_star)
    K = level_factor * sup_f
    mid = min((fld for t, fld in traj.snapshots if t >= t_star / 2.0),
              key=lambda fld: fld.max, default=traj.snapshots[-1][1])
    K0 = coercivity_estimate(coefficient_fields(mid, pot), pot)
    qdg = degiorgi_q if degiorgi_q is not None else _degiorgi_q(d, gamma, p)
    try:
        dg_exps = ExponentSet(d=d, gamma=gamma, p=p, q=qdg, k=k, K0=K0)
        params = LevelSetParams(p=p, gamma=gamma, K=K, t_star=t_star,
                                T=cfg.t_end, n_levels=n_levels,
                                c0=c0_constant(K0, p), C=fit_C, d=d)
        ls_report = iterate(traj, params, dg_exps)
    except (AdmissibilityError, ValueError) as exc:
        raise PipelineStageError("degiorgi", str(exc)) from exc
    report.level_set = ls_report.as_dict()
    dg_ok = ls_report.verdict == "decay_confirmed"
    chain.append({"stage": "degiorgi", "passed": dg_ok,
                  "detail": f"verdict {ls_report.verdict}, K = {K:.6g}"})
    return report
