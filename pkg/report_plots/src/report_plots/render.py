"""Figure rendering against the solver's documented CSV/JSON schemas.

Four figure kinds are supported:

* ``timeseries``        -- columns of a run ``records.csv`` against time
* ``envelope``          -- weighted-norm appearance report (JSON) with the
                           reference power law read from the report
* ``degiorgi_decay``    -- level-set energy report (JSON) with the geometric
                           comparison sequence read from the report
* ``inequality_trends`` -- inequality case table (CSV) with an optional
                           envelope-trend report (JSON) overlay

Every input is validated against its schema before any drawing happens;
missing columns or keys raise :class:`SchemaError` naming the offender.
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass, field

import numpy as np
import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

KINDS = ("timeseries", "envelope", "degiorgi_decay", "inequality_trends")

DEFAULT_TIMESERIES_COLUMNS = ("entropy", "energy", "mass")


class SchemaError(ValueError):
    """An input artifact does not match its documented schema."""


@dataclass
class PlotSpec:
    """One figure request: input artifact paths, figure kind, output path."""

    kind: str
    out: str
    report: str | None = None
    csv: str | None = None
    trend: str | None = None
    columns: list = field(default_factory=list)
    title: str | None = None

    @classmethod
    def from_dict(cls, data: dict) -> "PlotSpec":
        known = {"kind", "out", "report", "csv", "trend", "columns", "title"}
        unknown = sorted(set(data) - known)
        if unknown:
            raise SchemaError(f"unknown spec fields: {', '.join(unknown)}")
        for req in ("kind", "out"):
            if req not in data:
                raise SchemaError(f"spec is missing required field '{req}'")
        spec = cls(**data)
        if spec.kind not in KINDS:
            raise SchemaError(
                f"unknown figure kind '{spec.kind}' (expected one of {', '.join(KINDS)})")
        return spec

    def input_path(self) -> str:
        wants_csv = self.kind in ("timeseries", "inequality_trends")
        path = self.csv if wants_csv else self.report
        label = "csv" if wants_csv else "report"
        if not path:
            raise SchemaError(f"kind '{self.kind}' requires an input path in '{label}'")
        return path


def _read_csv(path: str, required: tuple) -> dict:
    """Parse a CSV into float columns, checking header and non-emptiness."""
    if not os.path.exists(path):
        raise SchemaError(f"input file not found: {path}")
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        rows = list(reader)
    for col in required:
        if col not in header:
            raise SchemaError(f"{path}: missing required column '{col}'")
    if not rows:
        raise SchemaError(f"{path}: no data rows")
    out = {}
    for col in header:
        vals = []
        for row in rows:
            try:
                vals.append(float(row[col]))
            except (TypeError, ValueError):
                vals.append(np.nan)
        out[col] = np.array(vals)
    return out


def _read_json(path: str, required: tuple) -> dict:
    if not os.path.exists(path):
        raise SchemaError(f"input file not found: {path}")
    with open(path) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as err:
            raise SchemaError(f"{path}: not valid JSON ({err})") from err
    if not isinstance(data, dict):
        raise SchemaError(f"{path}: expected a JSON object")
    for key in required:
        if key not in data:
            raise SchemaError(f"{path}: missing required key '{key}'")
    return data


def _series(data: dict, key: str, path: str) -> tuple:
    """Split a [[t, value], ...] series into two arrays, validating shape."""
    raw = data[key]
    if (not isinstance(raw, list) or not raw
            or any(not isinstance(p, (list, tuple)) or len(p) != 2 for p in raw)):
        raise SchemaError(f"{path}: key '{key}' must be a non-empty list of [t, value] pairs")
    arr = np.asarray(raw, dtype=float)
    return arr[:, 0], arr[:, 1]


def _render_timeseries(spec: PlotSpec) -> None:
    path = spec.input_path()
    columns = [str(c) for c in spec.columns] or list(DEFAULT_TIMESERIES_COLUMNS)
    data = _read_csv(path, ("t", *columns))
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    for col in columns:
        ax.plot(data["t"], data[col], lw=1.4, label=col)
    ax.set_xlabel("t")
    ax.legend(frameon=False)
    ax.set_title(spec.title or os.path.basename(path))
    fig.savefig(spec.out, dpi=150, bbox_inches="tight")
    plt.close(fig)


def _render_envelope(spec: PlotSpec) -> None:
    path = spec.input_path()
    data = _read_json(path, ("value_series", "margin_series", "window",
                             "fitted_exponent", "theoretical_exponent"))
    t, vals = _series(data, "value_series", path)
    tm, margins = _series(data, "margin_series", path)
    window = data["window"]
    if not isinstance(window, (list, tuple)) or len(window) != 2:
        raise SchemaError(f"{path}: key 'window' must be a [t_lo, t_hi] pair")

    fig, (ax, axm) = plt.subplots(2, 1, figsize=(6.4, 6.8), sharex=True)
    ax.loglog(t, vals, "o-", ms=4, lw=1.2, label="measured norm")
    pos = (t >= window[0]) & (t <= window[1]) & (vals > 0)
    if pos.any():
        # reference power law anchored at the first in-window point; the
        # exponent comes from the report, not from a fit done here
        t0, v0 = t[pos][0], vals[pos][0]
        tr = np.geomspace(t[t > 0].min(), t.max(), 64)
        ax.loglog(tr, v0 * (tr / t0) ** data["theoretical_exponent"], "k--",
                  lw=1.0,
                  label=f"reference slope {data['theoretical_exponent']:g}")
    ax.axvspan(window[0], window[1], color="0.9", zorder=0, label="fit window")
    ax.set_ylabel("weighted norm")
    ax.legend(frameon=False, fontsize=8)
    ax.set_title(spec.title
                 or f"appearance envelope (fitted slope {data['fitted_exponent']:.3g})")

    axm.semilogx(tm, margins, "s-", ms=4, lw=1.2, color="tab:orange")
    axm.axhline(float(np.median(margins)), color="k", ls=":", lw=1.0,
                label="median margin")
    axm.set_xlabel("t")
    axm.set_ylabel("margin")
    axm.legend(frameon=False, fontsize=8)
    fig.savefig(spec.out, dpi=150, bbox_inches="tight")
    plt.close(fig)


def _render_degiorgi(spec: PlotSpec) -> None:
    path = spec.input_path()
    data = _read_json(path, ("energies", "comparison"))
    energies = np.asarray(data["energies"], dtype=float)
    comparison = np.asarray(data["comparison"], dtype=float)
    if energies.size == 0:
        raise SchemaError(f"{path}: key 'energies' is empty")
    n = np.arange(energies.size)

    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    # exact zeros cannot sit on a log axis; clip them to a visible floor
    floor = max(energies[energies > 0].min() if (energies > 0).any() else 1.0,
                1e-300) * 1e-3
    ax.semilogy(n, np.maximum(energies, floor), "o-", lw=1.4, label="E_n")
    ax.semilogy(np.arange(comparison.size), np.maximum(comparison, floor),
                "k--", lw=1.1, label="E_0 Q^-n")
    ax.set_xlabel("iteration n")
    ax.set_ylabel("level-set energy")
    bits = []
    if "Q" in data:
        bits.append(f"Q = {data['Q']:.3g}")
    if "verdict" in data:
        bits.append(str(data["verdict"]))
    ax.set_title(spec.title or ("level-set energy decay" +
                                (f" ({', '.join(bits)})" if bits else "")))
    ax.legend(frameon=False)
    fig.savefig(spec.out, dpi=150, bbox_inches="tight")
    plt.close(fig)


def _render_inequality_trends(spec: PlotSpec) -> None:
    path = spec.input_path()
    data = _read_csv(path, ("name", "lhs", "empirical_constant"))
    with open(path, newline="") as fh:
        names = [row["name"] for row in csv.DictReader(fh)]
    consts = data["empirical_constant"]

    panels = 2 if spec.trend else 1
    fig, axes = plt.subplots(1, panels, figsize=(6.4 * panels, 4.2))
    axes = np.atleast_1d(axes)
    ax = axes[0]
    order = sorted(set(names))
    for i, name in enumerate(order):
        sel = np.array([nm == name for nm in names])
        ax.plot(np.nonzero(sel)[0], consts[sel], "o", ms=5, label=name)
    ax.set_xlabel("case index")
    ax.set_ylabel("empirical constant")
    if consts[np.isfinite(consts)].size and consts[np.isfinite(consts)].max() > 0:
        ax.set_yscale("log")
    ax.legend(frameon=False, fontsize=8)
    ax.set_title(spec.title or os.path.basename(path))

    if spec.trend:
        trend = _read_json(spec.trend, ("epsilons", "envelopes", "slope",
                                        "predicted_slope"))
        eps = np.asarray(trend["epsilons"], dtype=float)
        env = np.asarray(trend["envelopes"], dtype=float)
        axt = axes[1]
        axt.loglog(eps, env, "s-", lw=1.3,
                   label=f"envelope (fitted slope {trend['slope']:.3g})")
        pos = env > 0
        if pos.any():
            e0, c0 = eps[pos][0], env[pos][0]
            axt.loglog(eps, c0 * (eps / e0) ** trend["predicted_slope"], "k--",
                       lw=1.0,
                       label=f"predicted slope {trend['predicted_slope']:g}")
        axt.set_xlabel("epsilon")
        axt.set_ylabel("C0(epsilon)")
        axt.legend(frameon=False, fontsize=8)
    fig.savefig(spec.out, dpi=150, bbox_inches="tight")
    plt.close(fig)


_RENDERERS = {
    "timeseries": _render_timeseries,
    "envelope": _render_envelope,
    "degiorgi_decay": _render_degiorgi,
    "inequality_trends": _render_inequality_trends,
}


def render(spec: PlotSpec) -> str:
    """Validate the spec inputs and write the requested figure.

    Returns the output path; raises SchemaError on any schema mismatch.
    """
    out_dir = os.path.dirname(os.path.abspath(spec.out))
    if not os.path.isdir(out_dir):
        raise SchemaError(f"output directory does not exist: {out_dir}")
    _RENDERERS[spec.kind](spec)
    return spec.out
