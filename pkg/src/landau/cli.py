"""Command-line interface: config ingestion, subcommand dispatch, run outputs.

JSON configs with flag overrides; unknown keys are rejected and every
violated constraint is named. Each run directory gets a config.resolved.json
echo and a manifest.json referencing every file written. Exit codes: 0 on
success, 1 on a physics-stage failure (e.g. decay_failed), 2 on usage error.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from . import solver
from .degiorgi import LevelSetParams, iterate
from .exponents import (AdmissibilityError, ExponentSet, prodi_serrin_pair,
                        prodi_serrin_rate)
from .functionals import (FunctionalReport, coercivity_estimate, dissipation,
                          entropy, entropy_dissipation, grid_fingerprint,
                          moment, weighted_lp, write_reports)
from .grid import Grid, ScalarField, read_snapshot
from .inequality_lab import (eps_poincare, eps_poincare_trend,
                             gaussian_scale_pairs, hls_check,
                             level_hls_bounds, peak_scaled_pairs,
                             singular_source_pairs, sobolev_check,
                             test_function_family, triple_interpolation_check)
from .kernels import Potential, coefficient_fields
from .pipeline import PipelineStageError, run_pipeline


class UsageError(ValueError):
    """Invalid configuration or missing inputs; maps to exit status 2."""


@dataclass
class RunConfig:
    """Resolved configuration for one subcommand invocation."""

    d: int = 3
    n: int = 32
    L: float = 8.0
    gamma: float = -1.0
    t_end: float = 1.0
    dt_safety: float = 0.4
    cbar_radius: float = 1.0
    snapshot_times: list = field(default_factory=list)
    initial_condition: dict = field(default_factory=lambda: {"kind": "maxwellian"})
    out_dir: str | None = None
    seed: int = 2026
    p: float = 2.0
    q: float | None = None
    r: float | None = None
    k: float = 0.0
    t_star: float = 0.1
    K: float | None = None
    n_levels: int = 8
    epsilons: list = field(default_factory=lambda: [0.5, 0.1, 0.02])
    snapshot: str | None = None
    trajectory: str | None = None
    family_count: int = 8


_CONFIG_KEYS = {f.name for f in fields(RunConfig)}

_IC_KINDS = {
    "maxwellian": solver.Maxwellian,
    "bimaxwellian": solver.BiMaxwellian,
    "narrow_gaussian": solver.NarrowGaussian,
    "from_file": solver.FromFile,
}


def _initial_condition(spec: dict):
    spec = dict(spec)
    kind = spec.pop("kind", None)
    if kind not in _IC_KINDS:
        raise UsageError(
            f"initial_condition.kind must be one of {sorted(_IC_KINDS)}, got {kind!r}"
        )
    try:
        return _IC_KINDS[kind](**spec)
    except TypeError as exc:
        raise UsageError(f"bad initial_condition parameters for {kind}: {exc}") from exc


def _build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file")
    common.add_argument("--out-dir", dest="out_dir")
    common.add_argument("--seed", type=int)
    common.add_argument("--d", type=int)
    common.add_argument("--n", type=int)
    common.add_argument("--L", type=float)
    common.add_argument("--gamma", type=float)
    common.add_argument("--t-end", dest="t_end", type=float)
    common.add_argument("--dt-safety", dest="dt_safety", type=float)
    common.add_argument("--cbar-radius", dest="cbar_radius", type=float)
    common.add_argument("--snapshot-times", dest="snapshot_times",
                        help="comma-separated times")
    common.add_argument("--ic", help="initial condition as JSON")
    common.add_argument("--p", type=float)
    common.add_argument("--q", type=float)
    common.add_argument("--r", type=float)
    common.add_argument("--k", type=float)
    common.add_argument("--t-star", dest="t_star", type=float)
    common.add_argument("--K", type=float)
    common.add_argument("--n-levels", dest="n_levels", type=int)
    common.add_argument("--epsilons", help="comma-separated epsilon ladder")
    common.add_argument("--snapshot", help="snapshot file to diagnose")
    common.add_argument("--trajectory", help="trajectory directory to read")
    common.add_argument("--family-count", dest="family_count", type=int)

    parser = argparse.ArgumentParser(prog="landau")
    sub = parser.add_subparsers(dest="subcommand", required=True)
    for name in ("run", "exponents", "diagnose", "degiorgi", "inequalities",
                 "pipeline"):
        sub.add_parser(name, parents=[common])
    return parser


def parse_config(argv) -> tuple[str, RunConfig]:
    """Resolve subcommand and config from a JSON file plus flag overrides."""
    ns = _build_parser().parse_args(argv)
    data = {}
    if ns.config:
        if not os.path.exists(ns.config):
            raise UsageError(f"config file not found: {ns.config}")
        with open(ns.config) as fh:
            data = json.load(fh)
        unknown = sorted(set(data) - _CONFIG_KEYS)
        if unknown:
            raise UsageError(f"unknown config keys: {unknown}")
    for name in _CONFIG_KEYS:
        val = getattr(ns, name, None)
        if val is not None:
            data[name] = val
    if isinstance(data.get("snapshot_times"), str):
        data["snapshot_times"] = [float(x) for x in data["snapshot_times"].split(",")]
    if isinstance(data.get("epsilons"), str):
        data["epsilons"] = [float(x) for x in data["epsilons"].split(",")]
    if ns.ic is not None:
        data["initial_condition"] = json.loads(ns.ic)
    cfg = RunConfig(**data)
    _validate(ns.subcommand, cfg)
    return ns.subcommand, cfg


def _validate(sub: str, cfg: RunConfig) -> None:
    violations = []
    if not (-cfg.d <= cfg.gamma < 0):
        violations.append(f"gamma = {cfg.gamma} outside [-d, 0) for d = {cfg.d}")
    if cfg.n < 8 or cfg.n % 2:
        violations.append(f"n = {cfg.n} must be even and >= 8")
    if cfg.L <= 0:
        violations.append(f"L = {cfg.L} must be positive")
    if cfg.t_end < 0:
        violations.append(f"t_end = {cfg.t_end} must be nonnegative")
    if not (0 < cfg.dt_safety <= 1):
        violations.append(f"dt_safety = {cfg.dt_safety} outside (0, 1]")
    if sub in ("run", "diagnose", "degiorgi", "inequalities", "pipeline") \
            and not cfg.out_dir:
        violations.append(f"subcommand {sub} requires out_dir")
    if sub == "diagnose" and not cfg.snapshot:
        violations.append("diagnose requires a snapshot path")
    if sub == "degiorgi" and not cfg.trajectory:
        violations.append("degiorgi requires a trajectory directory")
    if sub == "pipeline":
        try:
            if cfg.q is None and cfg.r is not None:
                cfg.q = prodi_serrin_pair(cfg.d, cfg.gamma, cfg.r)
            if cfg.q is not None and cfg.r is None:
                cfg.r = prodi_serrin_rate(cfg.d, cfg.gamma, cfg.q)
            if cfg.q is None:
                violations.append("pipeline requires q or r for the integrability pair")
        except AdmissibilityError as exc:
            violations.append(str(exc))
    if sub == "exponents" and cfg.q is None:
        violations.append("exponents requires q")
    if violations:
        raise UsageError("; ".join(violations))


def _write_manifest(out_dir: str, paths: list) -> str:
    mpath = os.path.join(out_dir, "manifest.json")
    rel = sorted(os.path.relpath(p, out_dir) for p in paths)
    with open(mpath, "w") as fh:
        json.dump({"files": rel}, fh, indent=2)
    return mpath


def _echo_config(sub: str, cfg: RunConfig) -> str:
    os.makedirs(cfg.out_dir, exist_ok=True)
    path = os.path.join(cfg.out_dir, "config.resolved.json")
    with open(path, "w") as fh:
        json.dump({"subcommand": sub, **asdict(cfg)}, fh, indent=2)
    return path


def _solver_config(cfg: RunConfig) -> solver.SolverConfig:
    return solver.SolverConfig(
        pot=Potential(cfg.gamma, d=cfg.d),
        grid=Grid(d=cfg.d, n=cfg.n, extent=cfg.L),
        t_end=cfg.t_end,
        initial_condition=_initial_condition(cfg.initial_condition),
        dt_safety=cfg.dt_safety,
        snapshot_times=tuple(cfg.snapshot_times),
        cbar_radius=cfg.cbar_radius,
    )


def load_trajectory(directory: str) -> solver.Trajectory:
    """Rebuild a trajectory from a run directory (records.csv + snapshots/)."""
    snap_dir = os.path.join(directory, "snapshots")
    if not os.path.isdir(snap_dir):
        raise UsageError(f"no snapshots directory under {directory}")
    names = sorted(x for x in os.listdir(snap_dir) if x.endswith(".bin"))
    if not names:
        raise UsageError(f"no snapshots found under {snap_dir}")
    snapshots, header = [], None
    for name in names:
        fld, header = read_snapshot(os.path.join(snap_dir, name))
        snapshots.append((header["time"], fld))
    snapshots.sort(key=lambda pair: pair[0])
    grid = snapshots[0][1].grid
    traj = solver.Trajectory(grid=grid, pot=Potential(header["gamma"], d=grid.d),
                             snapshots=snapshots)
    rec_path = os.path.join(directory, "records.csv")
    if os.path.exists(rec_path):
        with open(rec_path) as fh:
            for row in csv.DictReader(fh):
                traj.records.append(solver.DiagnosticRecord(
                    time=float(row["t"]), dt=float(row["dt"]),
                    mass=float(row["mass"]),
                    momentum=(float(row["px"]), float(row["py"]), float(row["pz"])),
                    energy=float(row["energy"]), entropy=float(row["entropy"]),
                    entropy_dissipation=float(row["diss"]),
                    min_f=float(row["min_f"]), max_f=float(row["max_f"]),
                ))
    return traj


def _cmd_run(cfg: RunConfig) -> tuple[int, list]:
    scfg = _solver_config(cfg)
    if not scfg.snapshot_times:
        scfg.snapshot_times = tuple(np.linspace(0.0, cfg.t_end, 11)[1:])
    scfg.out_dir = cfg.out_dir
    traj = solver.run(scfg)
    paths = [os.path.join(cfg.out_dir, "records.csv")]
    paths += [os.path.join(cfg.out_dir, "snapshots", f"snapshot_{i:04d}.bin")
              for i in range(len(traj.snapshots))]
    return (1 if traj.blow_up else 0), paths


def _cmd_exponents(cfg: RunConfig) -> tuple[int, list]:
    exps = ExponentSet(d=cfg.d, gamma=cfg.gamma, p=cfg.p, q=cfg.q,
                       r=cfg.r, k=cfg.k)
    text = json.dumps(exps.as_dict(), indent=2)
    print(text)
    paths = []
    if cfg.out_dir:
        os.makedirs(cfg.out_dir, exist_ok=True)
        path = os.path.join(cfg.out_dir, "exponents.json")
        with open(path, "w") as fh:
            fh.write(text + "\n")
        paths.append(path)
    return 0, paths


def _cmd_diagnose(cfg: RunConfig) -> tuple[int, list]:
    if not os.path.exists(cfg.snapshot):
        raise UsageError(f"snapshot not found: {cfg.snapshot}")
    fld, header = read_snapshot(cfg.snapshot)
    if not isinstance(fld, ScalarField):
        raise UsageError(f"diagnose expects a scalar snapshot, got {header['kind']}")
    pot = Potential(header["gamma"], d=fld.grid.d)
    coeffs = coefficient_fields(fld, pot)
    fp = grid_fingerprint(fld.grid)
    meta = {"time": header["time"], "gamma": header["gamma"]}
    reports = [
        FunctionalReport("mass", moment(fld, 0.0), meta, fp),
        FunctionalReport("energy_moment", moment(fld, 2.0) - moment(fld, 0.0), meta, fp),
        FunctionalReport("m4", moment(fld, 4.0), meta, fp),
        FunctionalReport("entropy", entropy(fld), meta, fp),
        FunctionalReport("entropy_dissipation",
                         entropy_dissipation(fld, pot, coeffs), meta, fp),
        FunctionalReport("coercivity_K0", coercivity_estimate(coeffs, pot), meta, fp),
        FunctionalReport("M_kp", weighted_lp(fld, cfg.k, cfg.p),
                         {**meta, "k": cfg.k, "p": cfg.p}, fp),
        FunctionalReport("D_kp", dissipation(fld, cfg.k + pot.gamma, cfg.p),
                         {**meta, "k": cfg.k + pot.gamma, "p": cfg.p}, fp),
        FunctionalReport("sup_f", fld.max, meta, fp),
    ]
    path = os.path.join(cfg.out_dir, "functionals.csv")
    write_reports(path, reports)
    return 0, [path]


def _cmd_degiorgi(cfg: RunConfig) -> tuple[int, list]:
    traj = load_trajectory(cfg.trajectory)
    pot = traj.pot
    T = traj.snapshots[-1][0]
    sup = max(f.max for t, f in traj.snapshots if t >= cfg.t_star)
    K = cfg.K if cfg.K is not None else 1.05 * sup
    q = cfg.q
    if q is None:
        from .pipeline import _degiorgi_q
        q = _degiorgi_q(pot.d, pot.gamma, cfg.p)
    params = LevelSetParams(p=cfg.p, gamma=pot.gamma, K=K, t_star=cfg.t_star,
                            T=T, n_levels=cfg.n_levels, d=pot.d)
    exps = ExponentSet(d=pot.d, gamma=pot.gamma, p=cfg.p, q=q, k=cfg.k)
    report = iterate(traj, params, exps)
    jpath = os.path.join(cfg.out_dir, "degiorgi_report.json")
    with open(jpath, "w") as fh:
        json.dump(report.as_dict(), fh, indent=2)
    cpath = os.path.join(cfg.out_dir, "degiorgi_levels.csv")
    with open(cpath, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["n", "level", "t_n", "E_n", "E_star_n"])
        for i, (lev, tn, en, cmp_) in enumerate(
                zip(report.levels, report.times, report.energies,
                    report.comparison)):
            w.writerow([i, f"{lev:.17g}", f"{tn:.17g}", f"{en:.17g}",
                        f"{cmp_:.17g}"])
    status = 0 if report.verdict == "decay_confirmed" else 1
    return status, [jpath, cpath]


def _trend_q(d: int, gamma: float) -> float:
    if gamma == -d:
        return 2.5
    lo, hi = d / (d + 2.0 + gamma), d / (d + gamma)
    return 0.5 * (lo + hi)


def _cmd_inequalities(cfg: RunConfig) -> tuple[int, list]:
    grid = Grid(d=cfg.d, n=cfg.n, extent=cfg.L)
    pot = Potential(cfg.gamma, d=cfg.d)
    family = test_function_family(grid, count=cfg.family_count, seed=cfg.seed)
    cases = []
    r2 = grid.radius_sq()
    gauss = ScalarField(grid, np.exp(-r2 / 2.0))
    cases.append(hls_check(gauss, gauss, 1.0, 1.2, 1.2))
    for fld in family:
        cases.append(sobolev_check(fld))
        try:
            exps = ExponentSet(d=cfg.d, gamma=cfg.gamma, p=cfg.p,
                               q=cfg.q if cfg.q else cfg.p + 1.0, k=cfg.k)
            cases.append(triple_interpolation_check(fld, exps))
        except AdmissibilityError:
            pass
        try:
            cases.append(level_hls_bounds(fld, 0.25 * fld.max, 0.5 * fld.max,
                                          cfg.p, cfg.p + 1.5, pot))
        except AdmissibilityError:
            pass
    qp = _trend_q(cfg.d, cfg.gamma)
    for phi, g in gaussian_scale_pairs(grid, (0.7, 1.4)):
        for eps in cfg.epsilons:
            cases.append(eps_poincare(phi, g, pot, eps, qp))
    if cfg.gamma == -cfg.d:
        pairs = peak_scaled_pairs(grid)
    else:
        pairs = singular_source_pairs(grid)
    trend = eps_poincare_trend(pairs, pot, qp, tuple(cfg.epsilons))
    path = os.path.join(cfg.out_dir, "inequalities.csv")
    rows = [c.as_row() for c in cases]
    cols = sorted({k for row in rows for k in row}, key=lambda s: (s != "name", s))
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=cols)
        w.writeheader()
        for row in rows:
            w.writerow(row)
    tpath = os.path.join(cfg.out_dir, "poincare_trend.json")
    with open(tpath, "w") as fh:
        json.dump({"q": qp, **trend}, fh, indent=2)
    return 0, [path, tpath]


def _cmd_pipeline(cfg: RunConfig) -> tuple[int, list]:
    scfg = _solver_config(cfg)
    scfg.out_dir = cfg.out_dir
    report = run_pipeline(scfg, p=cfg.p, q=cfg.q, r=cfg.r, k=cfg.k,
                          t_star=cfg.t_star, n_levels=cfg.n_levels)
    paths = report.write(cfg.out_dir)
    paths.append(os.path.join(cfg.out_dir, "records.csv"))
    snap_dir = os.path.join(cfg.out_dir, "snapshots")
    if os.path.isdir(snap_dir):
        paths += [os.path.join(snap_dir, x) for x in sorted(os.listdir(snap_dir))]
    return (0 if report.passed() else 1), paths


_COMMANDS = {
    "run": _cmd_run,
    "exponents": _cmd_exponents,
    "diagnose": _cmd_diagnose,
    "degiorgi": _cmd_degiorgi,
    "inequalities": _cmd_inequalities,
    "pipeline": _cmd_pipeline,
}


def dispatch(sub: str, cfg: RunConfig) -> int:
    paths = []
    if cfg.out_dir:
        paths.append(_echo_config(sub, cfg))
    status, outputs = _COMMANDS[sub](cfg)
    paths.extend(outputs)
    if cfg.out_dir:
        _write_manifest(cfg.out_dir, paths)
    return status


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    try:
        sub, cfg = parse_config(argv)
        return dispatch(sub, cfg)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except PipelineStageError as exc:
        if exc.stage == "admissibility":
            print(f"error: {exc}", file=sys.stderr)
            return 2
        print(f"failure: {exc}", file=sys.stderr)
        return 1
    except (AdmissibilityError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except solver.BlowUpError as exc:
        print(f"failure: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
