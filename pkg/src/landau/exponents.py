"""Exponent algebra and admissibility logic.

Centralizes every derived exponent and parameter constraint used by the level
set iteration, the weighted-norm propagation estimates, and the time-space
integrability criterion, so the rest of the package never hand-computes an
exponent.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field


class AdmissibilityError(ValueError):
    """A parameter violates one of the strict admissibility inequalities."""


def _require(cond: bool, msg: str) -> None:
    if not cond:
        raise AdmissibilityError(msg)


def kappa_q(d: int, gamma: float, p: float, q: float) -> float:
    """Moment order kappa_q = |gamma| d (p-1) / (p(2d+gamma+2) - q(2d+gamma))."""
    den = p * (2 * d + gamma + 2) - q * (2 * d + gamma)
    _require(den > 0, f"kappa_q denominator p(2d+g+2)-q(2d+g) = {den} must be positive")
    return abs(gamma) * d * (p - 1) / den


def kappa_q_coulomb(d: int, p: float, q: float) -> float:
    """Coulomb simplification kappa_q = d^2 (p-1) / (p(d+2) - qd)."""
    den = p * (d + 2) - q * d
    _require(den > 0, f"kappa_q denominator p(d+2)-qd = {den} must be positive")
    return d * d * (p - 1) / den


def s_q(d: int, gamma: float, p: float, q: float) -> float:
    """Moment order s_q = |gamma| d (p-1) / (p(d+2) - qd)."""
    den = p * (d + 2) - q * d
    _require(den > 0, f"s_q denominator p(d+2)-qd = {den} must be positive")
    return abs(gamma) * d * (p - 1) / den


def alpha_q(d: int, gamma: float, p: float, q: float) -> float:
    """Iteration gain exponent alpha_q = (qd - pd - 2)/(d(p-1))."""
    return (q * d - p * d - 2) / (d * (p - 1))


def beta_q(d: int, gamma: float, p: float, q: float) -> float:
    """Iteration gain exponent beta_q = (q(2d+gamma) - (p+1)d - (gamma+2))/(d(p-1))."""
    return (q * (2 * d + gamma) - (p + 1) * d - (gamma + 2)) / (d * (p - 1))


def beta_q_coulomb(d: int, p: float, q: float) -> float:
    """Coulomb simplification beta_q = (d(q-p) - 2)/(d(p-1))."""
    return (d * (q - p) - 2) / (d * (p - 1))


def nu_k(d: int, gamma: float, p: float, k: float) -> float:
    """Weight shift nu_k = max((2k - gamma d(p-1))/(2p), (k+gamma)/p)."""
    return max((2 * k - gamma * d * (p - 1)) / (2 * p), (k + gamma) / p)


def c0_constant(K0: float, p: float) -> float:
    """Diffusion constant c0 = 2 K0 (p-1)/p^2 of the level-set energy estimate."""
    return 2.0 * K0 * (p - 1) / p**2


def Kp_constant(K0: float, p: float) -> float:
    """Dissipation constant K(p) = (p-1) K0 / p of the weighted-L^p estimate."""
    return (p - 1) * K0 / p


def prodi_serrin_pair(d: int, gamma: float, r: float) -> float:
    """Integrability exponent q solving 2/r + d/q = d + 2 + gamma.

    r = 1 with gamma = -d returns infinity (the Coulomb convention).
    """
    _require(1 <= r, f"r = {r} must satisfy r >= 1")
    _require(math.isfinite(r), "r must be finite (q is derived from it)")
    den = d + 2 + gamma - 2.0 / r
    if r == 1 and gamma == -d:
        return math.inf
    _require(den > 0, f"2/r + d/q = d+2+gamma has no positive q: d+2+gamma-2/r = {den} <= 0")
    q = d / den
    _require(q > 1, f"derived q = {q} violates q > 1")
    if 1 < r < math.inf:
        lo = d / (d + gamma + 2)
        hi = d / (d + gamma) if d + gamma > 0 else math.inf
        _require(lo < q, f"derived q = {q} violates d/(d+gamma+2) = {lo} < q")
        _require(q < hi, f"derived q = {q} violates q < d/(d+gamma) = {hi}")
    return q


def prodi_serrin_rate(d: int, gamma: float, q: float) -> float:
    """Inverse map: time exponent r from 2/r + d/q = d + 2 + gamma."""
    den = d + 2 + gamma - d / q if math.isfinite(q) else d + 2 + gamma
    _require(den > 0, f"no positive r for q = {q}: d+2+gamma-d/q = {den} <= 0")
    r = 2.0 / den
    _require(r >= 1, f"derived r = {r} violates r >= 1")
    return r


def degiorgi_p_range(d: int, gamma: float) -> tuple[float, float]:
    """Open p interval of the level-set iteration theorem.

    Returns (max(1, d/(d+gamma+2), 1+(d+gamma)/d), d/(d+gamma)), or
    (d/2, inf) in the Coulomb case; raises when empty.
    """
    _require(-d <= gamma < 0, f"gamma = {gamma} outside [-d, 0)")
    if gamma == -d:
        return (d / 2.0, math.inf)
    p_min = max(1.0, d / (d + gamma + 2), 1.0 + (d + gamma) / d)
    p_max = d / (d + gamma)
    _require(
        p_min < p_max,
        f"empty p interval: max(1, d/(d+g+2), 1+(d+g)/d) = {p_min} >= d/(d+g) = {p_max}",
    )
    return (p_min, p_max)


def degiorgi_p_range_relaxed(d: int, gamma: float) -> tuple[float, float]:
    """Essential p interval max(1, d/(d+gamma+2)) < p < d/(d+gamma).

    Drops the technical lower bound 1+(d+gamma)/d, which only guarantees a
    nonempty q interval and is not needed to evaluate the level-set energies.
    """
    _require(-d <= gamma < 0, f"gamma = {gamma} outside [-d, 0)")
    if gamma == -d:
        return (d / 2.0, math.inf)
    p_min = max(1.0, d / (d + gamma + 2))
    p_max = d / (d + gamma)
    _require(p_min < p_max, f"empty relaxed p interval ({p_min}, {p_max})")
    return (p_min, p_max)


def q_interval(d: int, gamma: float, p: float) -> tuple[float, float]:
    """Open q interval for the level-set recursion at given p."""
    p_min, p_max = degiorgi_p_range(d, gamma)
    _require(p_min < p < p_max, f"p = {p} outside the admissible range ({p_min}, {p_max})")
    q_min = max(p + 2.0 / d, (d * (p + 1) + max(2 + gamma, 0.0)) / (2 * d + gamma))
    q_max = p + 2.0 * p / (2 * d + gamma)
    _require(q_min < q_max, f"empty q interval ({q_min}, {q_max})")
    return (q_min, q_max)


def theorem_constraint(d: int, gamma: float) -> bool:
    """Truth of the admissibility inequality [(d+gamma)+2][1 + (d+gamma)/d] < d."""
    return ((d + gamma) + 2) * (1 + (d + gamma) / d) < d


def triple_thetas(d: int, gamma: float, p: float, q: float,
                  mode: str = "grad_normalized") -> tuple[float, float, float, float]:
    """Interpolation weights (theta1, theta2, theta3, s) of the triple inequality.

    grad_normalized pins the gradient factor's exponent to 2 (theta3 =
    dp/(q(2d+gamma)), weight order s = kappa_q); lp_normalized pins
    q*theta3 = p (weight order s = s_q).
    """
    if mode == "grad_normalized":
        th3 = d * p / (q * (2 * d + gamma))
        th1 = p / (p - 1) * ((2 * d + gamma + 2) / (q * (2 * d + gamma)) - 1.0 / p)
        th2 = p / (p - 1) * (1.0 - (d * (p + 1) + gamma + 2) / (q * (2 * d + gamma)))
        s = kappa_q(d, gamma, p, q)
    elif mode == "lp_normalized":
        th3 = p / q
        th1 = ((d + 2) * p - d * q) / (d * (p - 1) * q)
        th2 = p / (p - 1) * (q - (d * p + 2) / d) / q
        s = s_q(d, gamma, p, q)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    for name, th in (("theta1", th1), ("theta2", th2), ("theta3", th3)):
        _require(0 < th < 1, f"{name} = {th} outside (0,1) for (d,gamma,p,q)=({d},{gamma},{p},{q})")
    return (th1, th2, th3, s)


@dataclass
class ExponentSet:
    """All derived exponents for a parameter tuple, with admissibility checks."""

    d: int
    gamma: float
    p: float
    q: float
    r: float | None = None
    k: float = 0.0
    K0: float = 1.0
    derived: dict = field(default_factory=dict)

    def __post_init__(self):
        d, gamma, p, q = self.d, self.gamma, self.p, self.q
        der = {
            "alpha_q": alpha_q(d, gamma, p, q),
            "beta_q": beta_q(d, gamma, p, q),
            "nu_k": nu_k(d, gamma, p, self.k),
            "c0": c0_constant(self.K0, p),
            "Kp": Kp_constant(self.K0, p),
        }
        for name, fn in (("kappa_q", kappa_q), ("s_q", s_q)):
            try:
                der[name] = fn(d, gamma, p, q)
            except AdmissibilityError as exc:
                der[name + "_error"] = str(exc)
        try:
            th1, th2, th3, s = triple_thetas(d, gamma, p, q, "grad_normalized")
            der.update({"theta1": th1, "theta2": th2, "theta3": th3, "s": s})
        except AdmissibilityError as exc:
            der["theta_error"] = str(exc)
        self.derived.update(der)

    def as_dict(self) -> dict:
        out = {"d": self.d, "gamma": self.gamma, "p": self.p, "q": self.q,
               "r": self.r, "k": self.k, "K0": self.K0}
        out.update(self.derived)
        return out
