"""Scalar functionals: moments, weighted norms, dissipations, entropy, coercivity.

Every functional uses the grid's single midpoint quadrature rule, so the
conservation identities checked by the solver and the inequality lab are
internally consistent.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .exponents import AdmissibilityError, prodi_serrin_rate
from .grid import Grid, ScalarField, gradient, integrate
from .kernels import CoefficientFields, Potential, coefficient_fields


class _ClipCounter:
    """Counts how often negative parts were zeroed inside p-th powers."""

    def __init__(self):
        self.count = 0

    def clip(self, values: np.ndarray) -> np.ndarray:
        if np.any(values < 0):
            self.count += 1
            return np.maximum(values, 0.0)
        return values


negative_clips = _ClipCounter()


@dataclass
class FunctionalReport:
    name: str
    value: float
    parameters: dict = field(default_factory=dict)
    grid_fingerprint: str = ""

    def row(self) -> dict:
        out = {"name": self.name, "value": self.value, "grid": self.grid_fingerprint}
        out.update(self.parameters)
        return out


def grid_fingerprint(grid: Grid) -> str:
    return f"d{grid.d}n{grid.n}L{grid.extent:g}"


def write_reports(path, reports: list[FunctionalReport]) -> None:
    cols = ["name", "value", "grid"]
    extra = sorted({k for r in reports for k in r.parameters})
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=cols + extra)
        writer.writeheader()
        for r in reports:
            writer.writerow(r.row())


def moment(f: ScalarField, k: float) -> float:
    """Statistical moment m_k = integral of f <v>^k."""
    if k < -f.grid.d + 1:
        raise ValueError(f"moment order k = {k} below quadrature sanity -d+1")
    return integrate(f, k)


def weighted_lp(f: ScalarField, k: float, p: float) -> float:
    """Weighted norm power M_{k,p} = integral of f^p <v>^k (negative f zeroed)."""
    if p < 1:
        raise ValueError(f"p = {p} must be >= 1")
    vals = negative_clips.clip(f.values)
    return f.grid.integrate_values(vals**p, k)


def dissipation(f: ScalarField, k: float, p: float) -> float:
    """Dissipation functional D_{k,p} = integral of |grad(<v>^{k/2} f^{p/2})|^2."""
    vals = negative_clips.clip(f.values)
    g = ScalarField(f.grid, f.grid.weight(k / 2.0) * vals ** (p / 2.0))
    grad = gradient(g)
    return f.grid.integrate_values(np.sum(grad.values**2, axis=0))


def entropy(f: ScalarField) -> float:
    """H = integral of f log f with the convention 0 log 0 = 0."""
    vals = f.values
    safe = np.where(vals > 0, vals, 1.0)
    return f.grid.integrate_values(np.where(vals > 0, vals * np.log(safe), 0.0))


def entropy_dissipation(f: ScalarField, pot: Potential,
                        coeffs: CoefficientFields | None = None,
                        return_raw: bool = False):
    """Entropy dissipation in flux form, D = int A[f] grad f . grad f / f + int c[f] f.

    Nodes where f is below 1e-14 of its max are excluded from the quotient.
    Returns max(value, 0); pass return_raw=True for (clipped, raw).
    """
    if coeffs is None:
        coeffs = coefficient_fields(f, pot)
    g = f.grid
    grad = gradient(f).values
    floor = 1e-14 * max(f.max, 1e-300)
    mask = f.values > floor
    quad = np.zeros(g.shape)
    d = g.d
    for i in range(d):
        for j in range(d):
            quad += coeffs.A.component(i, j) * grad[i] * grad[j]
    term1 = g.integrate_values(np.where(mask, quad / np.where(mask, f.values, 1.0), 0.0))
    term2 = g.integrate_values(coeffs.c.values * np.where(mask, f.values, 0.0))
    raw = term1 + term2
    value = max(raw, 0.0)
    return (value, raw) if return_raw else value


def fisher_check(f: ScalarField, pot: Potential,
                 coeffs: CoefficientFields | None = None) -> tuple[float, float]:
    """Weighted Fisher information vs 1 + entropy dissipation.

    lhs = int |grad sqrt(f)|^2 <v>^gamma, rhs_raw = 1 + D(f); the ratio is the
    tracked empirical constant.
    """
    vals = negative_clips.clip(f.values)
    root = ScalarField(f.grid, np.sqrt(vals))
    grad = gradient(root).values
    lhs = f.grid.integrate_values(np.sum(grad**2, axis=0), pot.gamma)
    if float(np.max(vals)) == 0.0:
        return (0.0, 1.0)
    rhs_raw = 1.0 + entropy_dissipation(f, pot, coeffs)
    return (lhs, rhs_raw)


def coercivity_estimate(coeffs: CoefficientFields, pot: Potential) -> float:
    """K0 = min over nodes of eigmin(A[f](v)) / <v>^gamma (dense eigensolve)."""
    g = coeffs.A.grid
    dense = coeffs.A.dense()
    eigmin = np.linalg.eigvalsh(dense)[..., 0]
    K0 = float(np.min(eigmin / g.weight(pot.gamma)))
    if K0 <= 0:
        raise ValueError(f"coercivity failure: K0 = {K0} <= 0 (corrupted source field?)")
    return K0


def mass_in_ball(f: ScalarField, R: float) -> float:
    if R <= 0:
        raise ValueError(f"ball radius must be positive, got {R}")
    mask = f.grid.radius_sq() <= R * R
    return f.grid.integrate_values(np.where(mask, f.values, 0.0))


def mass_on_set(f: ScalarField, mask: np.ndarray) -> float:
    mask = np.asarray(mask, dtype=bool)
    return f.grid.integrate_values(np.where(mask, f.values, 0.0))


def _snapshots_of(traj):
    return traj.snapshots if hasattr(traj, "snapshots") else traj


def prodi_serrin_integral(traj, q: float, r: float, pot: Potential) -> float:
    """Trapezoid integral over snapshots of the weighted L^q norm to the r-th power.

    The pair (q, r) must satisfy the scaling relation 2/r + d/q = d+2+gamma.
    """
    d, gamma = pot.d, pot.gamma
    want_r = prodi_serrin_rate(d, gamma, q)
    if abs(want_r - r) > 1e-9:
        raise AdmissibilityError(
            f"(q, r) = ({q}, {r}) violates 2/r + d/q = d+2+gamma (expected r = {want_r})"
        )
    snaps = _snapshots_of(traj)
    if len(snaps) == 0:
        return 0.0
    times = np.array([t for t, _ in snaps])
    norms = np.array([weighted_lp(fld, q * abs(gamma), q) ** (1.0 / q) for _, fld in snaps])
    if len(snaps) == 1:
        return 0.0
    return float(np.trapezoid(norms**r, times))


def ode_envelope(C: float, a: float, p: float, d: int, t: float) -> float:
    """Envelope of solutions of y' <= C - a y^{1+2/(d(p-1))}.

    Returns max(u_star, (d(p-1)/(a t))^{d(p-1)/2}) with
    u_star = (2C/a)^{d(p-1)/(2+d(p-1))}.
    """
    if C <= 0 or a <= 0 or t <= 0 or p <= 1:
        raise ValueError(f"ode_envelope needs C, a, t > 0 and p > 1; got {(C, a, p, t)}")
    m = d * (p - 1)
    u_star = (2.0 * C / a) ** (m / (2.0 + m))
    return max(u_star, (m / (a * t)) ** (m / 2.0))
