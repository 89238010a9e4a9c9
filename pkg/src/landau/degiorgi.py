"""Level-set truncations, energy functionals, and the level-set iteration.

The iteration tracks the energies E_n of nested truncation levels l_n -> K on
shrinking time windows [t_n, T] and compares their decay with the geometric
comparison sequence E0 Q^{-n}; the fitted recursion constant verifies the
functional form of the level-set energy recursion without inventing absolute
constants.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .exponents import (AdmissibilityError, alpha_q, beta_q, c0_constant,
                        degiorgi_p_range_relaxed, kappa_q, s_q)


def _moment_order(d: int, gamma: float, p: float, q: float) -> float:
    """kappa_q when admissible, else the companion moment order s_q."""
    try:
        return kappa_q(d, gamma, p, q)
    except AdmissibilityError:
        return s_q(d, gamma, p, q)
from .functionals import negative_clips, weighted_lp
from .grid import ScalarField, gradient
from .kernels import Potential


def level_truncate(f: ScalarField, level: float) -> ScalarField:
    """Positive part of the shifted field, max(f - level, 0)."""
    if level < 0:
        raise ValueError(f"truncation level must be nonnegative, got {level}")
    return ScalarField(f.grid, np.maximum(f.values - level, 0.0))


def level_flux(f: ScalarField, level: float, p: float, gamma: float) -> ScalarField:
    """Weighted truncation power <v>^{gamma/2} (f_l^+)^{p/2}."""
    if p < 1:
        raise ValueError(f"p = {p} must be >= 1")
    trunc = np.maximum(f.values - level, 0.0)
    return ScalarField(f.grid, f.grid.weight(gamma / 2.0) * trunc ** (p / 2.0))


def _grad_sq_norm(f: ScalarField, level: float, p: float, gamma: float) -> float:
    F = level_flux(f, level, p, gamma)
    grad = gradient(F).values
    return f.grid.integrate_values(np.sum(grad**2, axis=0))


def _snapshots_of(traj):
    return traj.snapshots if hasattr(traj, "snapshots") else traj


def energy_functional(traj, level: float, T1: float, T2: float, p: float,
                      gamma: float, c0: float) -> float:
    """Level-set energy sup_t[(1/p)||f_l^+||_p^p + c0 int_{T1}^t ||grad F_l||_2^2].

    The sup runs over stored snapshots with times in [T1, T2); the time
    integral is the trapezoid rule from T1.
    """
    if not (T1 < T2):
        raise ValueError(f"need T1 < T2, got ({T1}, {T2})")
    snaps = [(t, f) for t, f in _snapshots_of(traj) if T1 - 1e-12 <= t < T2]
    if not snaps:
        raise ValueError(f"no snapshots in [{T1}, {T2})")
    times = np.array([t for t, _ in snaps])
    lp_terms = np.array([weighted_lp(level_truncate(f, level), 0.0, p) / p
                         for _, f in snaps])
    grads = np.array([_grad_sq_norm(f, level, p, gamma) for _, f in snaps])
    best = 0.0
    for i in range(len(snaps)):
        acc = float(np.trapezoid(grads[: i + 1], times[: i + 1])) if i > 0 else 0.0
        best = max(best, lp_terms[i] + c0 * acc)
    return best


def energy_inequality_check(traj, level: float, p: float, pot: Potential,
                            k0: float) -> dict:
    """Per-time margin of the level-set energy inequality.

    LHS = centered d/dt ||f_l^+||_p^p / p + c0 ||grad F_l||_2^2; RHS collects
    the two singular-mass integrals against c_gamma[f] and the lower-order
    weighted term with constant C0 = c0 gamma^2 / 2.  Returns times, lhs, rhs
    and the margins rhs - lhs (nonnegative margins confirm the inequality).
    """
    from .kernels import coefficient_fields

    snaps = list(_snapshots_of(traj))
    if len(snaps) < 3:
        raise ValueError("need at least 3 snapshots for centered differences")
    gamma = pot.gamma
    c0 = c0_constant(k0, p)
    C0 = c0 * gamma**2 / 2.0
    times = np.array([t for t, _ in snaps])
    lp_pows = np.array([weighted_lp(level_truncate(f, level), 0.0, p)
                        for _, f in snaps])
    out = {"times": [], "lhs": [], "rhs": [], "margin": []}
    for i in range(1, len(snaps) - 1):
        t, f = snaps[i]
        g = f.grid
        ddt = (lp_pows[i + 1] - lp_pows[i - 1]) / (times[i + 1] - times[i - 1])
        lhs = ddt / p + c0 * _grad_sq_norm(f, level, p, gamma)
        cfield = coefficient_fields(f, pot).c.values
        trunc = np.maximum(f.values - level, 0.0)
        rhs = (-(p - 1) / p * g.integrate_values(cfield * trunc**p)
               - level * g.integrate_values(cfield * trunc ** (p - 1))
               + C0 * g.integrate_values(trunc**p, gamma - 2.0))
        out["times"].append(float(t))
        out["lhs"].append(float(lhs))
        out["rhs"].append(float(rhs))
        out["margin"].append(float(rhs - lhs))
    return out


@dataclass
class LevelSetParams:
    """Parameters of the level-set iteration."""

    p: float
    gamma: float
    K: float
    t_star: float
    T: float
    n_levels: int = 8
    c0: float = 1.0
    C: float = 1.0
    d: int = 3

    def __post_init__(self):
        if not (0 < self.t_star < self.T):
            raise ValueError(f"need 0 < t_star < T, got ({self.t_star}, {self.T})")
        if self.K <= 0:
            raise ValueError(f"top level K must be positive, got {self.K}")
        lo, hi = degiorgi_p_range_relaxed(self.d, self.gamma)
        if not (lo < self.p < hi):
            raise AdmissibilityError(
                f"p = {self.p} outside the essential range ({lo}, {hi}) "
                f"for d={self.d}, gamma={self.gamma}"
            )


@dataclass
class LevelSetReport:
    levels: list
    times: list
    energies: list
    comparison: list
    Q: float
    Q_fit: float
    thresholds: dict
    fitted_C: float
    verdict: str
    extras: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {
            "levels": self.levels, "times": self.times, "energies": self.energies,
            "comparison": self.comparison, "Q": self.Q, "Q_fit": self.Q_fit,
            "thresholds": self.thresholds, "fitted_C": self.fitted_C,
            "verdict": self.verdict, **self.extras,
        }


def recursion_Q(d: int, gamma: float, p: float, q: float) -> float:
    """Geometric decay base of the comparison sequence E0 Q^{-n}."""
    if gamma == -d:
        den = d * (q - p) - 2
        if den <= 0:
            raise AdmissibilityError(f"d(q-p)-2 = {den} must be positive")
        return 2.0 ** (d * (q - p + 1) * (p - 1) / den)
    aq = alpha_q(d, gamma, p, q)
    bq = beta_q(d, gamma, p, q)
    if aq <= 0 or bq <= 0:
        raise AdmissibilityError(f"alpha_q = {aq}, beta_q = {bq} must be positive")
    return max(2.0 ** ((q - p + 1) / aq),
               2.0 ** ((q * (2 * d + gamma) - p * d) / (d * bq)),
               2.0**p)


def threshold_K(E0: float, m_kappa_sup: float, params: LevelSetParams, exps) -> dict:
    """Top-level thresholds K1, K2, K3 (K1~, K2~ in the Coulomb branch).

    y_q = max(1, m_kappa_sup)^{(p(d+2)-dq)/(d(p-1))}; the overall constant C
    comes from the params (default 1).
    """
    if E0 <= 0:
        raise ValueError(f"E0 must be positive, got {E0}")
    d, gamma, p, q = exps.d, exps.gamma, exps.p, exps.q
    C, t_star = params.C, params.t_star
    y_q = max(1.0, m_kappa_sup) ** ((p * (d + 2) - d * q) / (d * (p - 1)))
    if gamma == -d:
        expo = (d * (q - p) - 2) / (d * (p - 1))
        K1 = C * y_q ** (1.0 / (q - p)) * E0 ** (expo / (q - p)) * t_star ** (1.0 / (p - q))
        K2 = max(1.0, C * y_q ** (1.0 / (q - 1 - p)) * E0 ** (expo * d * (p - 1)
                 / (d * (p - 1) * (q - 1 - p))))
        return {"K1": K1, "K2": K2, "y_q": y_q, "coulomb": True}
    aq = alpha_q(d, gamma, p, q)
    bq = beta_q(d, gamma, p, q)
    den2 = (2 * d + gamma) * q - d * (1 + p)
    K1 = C * y_q ** (1.0 / (q - p)) * E0 ** (aq / (q - p)) * t_star ** (1.0 / (p - q))
    K2 = C * y_q ** (d / den2) * E0 ** (d * bq / den2)
    K3 = C * E0 ** (1.0 / p)
    return {"K1": K1, "K2": K2, "K3": K3, "y_q": y_q, "coulomb": False}


def _recursion_brackets(energies, params: LevelSetParams, exps, y_q: float) -> list:
    """Per-step bracket of the energy recursion, used to fit the minimal C."""
    d, gamma, p, q = exps.d, exps.gamma, exps.p, exps.q
    K, t_star = params.K, params.t_star
    out = []
    for n in range(len(energies) - 1):
        En = energies[n]
        if En <= 0:
            out.append(0.0)
            continue
        if gamma == -d:
            aq = (d * (q - p) - 2) / (d * (p - 1))
            bracket = (y_q * K ** (p - q) * 2.0 ** ((n + 1) * (q - p + 1))
                       * (1.0 / t_star + (1 + K**2) / K) * En ** (1 + aq))
        else:
            aq = alpha_q(d, gamma, p, q)
            bq = beta_q(d, gamma, p, q)
            bracket = (y_q * (K ** (p - q) * 2.0 ** ((n + 1) * (q - p + 1)) / t_star
                              * En ** (1 + aq)
                              + K ** (1 + p - (2 * d + gamma) * q / d)
                              * 2.0 ** ((q * (2 * d + gamma) / d - p) * (n + 1))
                              * En ** (1 + bq))
                       + K ** (-2.0 * p / d) * 2.0 ** ((n + 1) * 2.0 * p / d)
                       * En ** ((d + 2.0) / d))
        out.append(bracket)
    return out


def iterate(traj, params: LevelSetParams, exps) -> LevelSetReport:
    """Run the level-set iteration and report the decay of the energies.

    Levels l_n = K(1 - 2^{-n}) and window starts t_n = t_star(1 - 2^{-(n+1)});
    E_n is the energy of level l_n over [t_n, T].  The verdict is
    decay_confirmed when the E_n are nonincreasing and the final energy is at
    most 1% of E_0.
    """
    d, gamma, p, q = exps.d, exps.gamma, exps.p, exps.q
    K, t_star, T = params.K, params.t_star, params.T
    snaps = list(_snapshots_of(traj))
    if not snaps or snaps[0][0] > t_star / 2 + 1e-9 or snaps[-1][0] < t_star - 1e-9:
        raise ValueError(f"trajectory must cover [{t_star / 2}, {T}]")
    levels = [K * (1.0 - 0.5**n) for n in range(params.n_levels + 1)]
    times = [t_star * (1.0 - 0.5 ** (n + 1)) for n in range(params.n_levels + 1)]
    energies = [energy_functional(traj, levels[n], times[n], T, p, gamma, params.c0)
                for n in range(params.n_levels + 1)]

    kq = _moment_order(d, gamma, p, q)
    m_sup = max(
        (f.grid.integrate_values(negative_clips.clip(f.values), kq)
         for t, f in snaps if t >= t_star / 2 - 1e-12),
        default=0.0,
    )
    y_q = max(1.0, m_sup) ** ((p * (d + 2) - d * q) / (d * (p - 1)))
    Q = recursion_Q(d, gamma, p, q)
    E0 = energies[0]
    comparison = [E0 * Q ** (-n) for n in range(params.n_levels + 1)]

    # fitted geometric ratio over the strictly positive, decaying range
    pos = [(n, e) for n, e in enumerate(energies) if e > 1e-300 * max(E0, 1.0)]
    if len(pos) >= 2:
        ns = np.array([n for n, _ in pos], dtype=float)
        logs = np.log([e for _, e in pos])
        slope = np.polyfit(ns, logs, 1)[0]
        Q_fit = float(np.exp(-slope))
    else:
        Q_fit = math.inf

    brackets = _recursion_brackets(energies, params, exps, y_q)
    ratios = [energies[n + 1] / brackets[n] for n in range(len(brackets))
              if brackets[n] > 0 and energies[n + 1] > 0]
    fitted_C = max(ratios) if ratios else 0.0

    thresholds = threshold_K(E0, m_sup, params, exps) if E0 > 0 else {}
    nonincreasing = all(energies[n + 1] <= energies[n] * (1 + 1e-12) + 1e-300
                        for n in range(len(energies) - 1))
    confirmed = nonincreasing and energies[-1] <= 0.01 * E0 if E0 > 0 else True
    return LevelSetReport(
        levels=levels, times=times, energies=energies, comparison=comparison,
        Q=Q, Q_fit=Q_fit, thresholds=thresholds, fitted_C=fitted_C,
        verdict="decay_confirmed" if confirmed else "decay_failed",
        extras={"y_q": y_q, "m_kappa_sup": m_sup, "p": p, "q": q, "gamma": gamma},
    )
