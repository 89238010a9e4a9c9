"""Landau collision kernels and convolution coefficients.

Kernels: a(z) = |z|^{gamma+2} Pi(z), b(z) = -(d-1) z |z|^gamma,
c(z) = -(d-1)(gamma+d) |z|^gamma, with Pi the projector off z.  The
coefficients A[f] = a*f, b[f] = b*f, c_gamma[f] = c*f are evaluated by linear
(zero-padded) FFT convolution on the lattice.

Singular-kernel quadrature: every kernel here is homogeneous of some degree
beta > -d.  Cells within a fixed physical radius of the singularity store the
exact cell average of the kernel (tensor Gauss-Legendre; the singular cell
itself via closed forms or a self-similar dyadic decomposition), cells beyond
use midpoint values.  This keeps the convolution second-order accurate even
for the most singular admissible exponents.
"""

from __future__ import annotations

import math
import os
import warnings
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import fft as sfft

from .grid import Grid, MatrixField, ScalarField, VectorField, sym_index_pairs

#: cells with |z| <= NEAR_RADIUS (in velocity units) get exact kernel cell
#: averages instead of midpoint samples.
NEAR_RADIUS = 2.0

_GL_ORDER = 10


def fft_workers() -> int:
    """Worker cap for FFT calls, from LANDAU_THREADS (default 1, reproducible)."""
    try:
        return max(1, int(os.environ.get("LANDAU_THREADS", "1")))
    except ValueError:
        return 1


def sphere_area(d: int) -> float:
    """Surface measure of the unit sphere S^{d-1}."""
    return 2.0 * math.pi ** (d / 2.0) / math.gamma(d / 2.0)


@dataclass(frozen=True)
class Potential:
    """Interaction exponent gamma in [-d, 0); gamma == -d is the Coulomb case."""

    gamma: float
    d: int = 3

    def __post_init__(self):
        if not (-self.d <= self.gamma < 0):
            raise ValueError(f"gamma must lie in [-d, 0) = [{-self.d}, 0), got {self.gamma}")

    @property
    def coulomb(self) -> bool:
        return self.gamma == -self.d

    @property
    def c_d(self) -> float:
        """Coefficient of the local Coulomb branch c = -c_d f."""
        d = self.d
        return (d - 1) * (d - 2) * sphere_area(d)


@dataclass
class CoefficientFields:
    A: MatrixField
    b: VectorField
    c: ScalarField
    pot: "Potential | None" = None


def projector(z: np.ndarray) -> np.ndarray:
    """Orthogonal projector Id - z (x) z / |z|^2."""
    z = np.asarray(z, dtype=np.float64)
    n2 = float(z @ z)
    if n2 == 0.0:
        raise ValueError("projector undefined at z = 0")
    return np.eye(z.size) - np.outer(z, z) / n2


def kernel_a(z: np.ndarray, pot: Potential) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    return float(np.linalg.norm(z)) ** (pot.gamma + 2.0) * projector(z)


def kernel_b(z: np.ndarray, pot: Potential) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    r = float(np.linalg.norm(z))
    if r == 0.0:
        raise ValueError("kernel_b undefined at z = 0")
    return -(pot.d - 1) * z * r**pot.gamma


# -- exact cell averages -------------------------------------------------------

@lru_cache(maxsize=None)
def _unit_cell_average(beta: float, d: int, order: int = 64) -> float:
    """Average of |z|^beta over the unit cube [-1/2, 1/2]^d.

    Polar reduction over the cube faces turns the (possibly singular) cube
    integral into a smooth one:

        int_cube |z|^beta dz = 2d (1/2)^{beta+d} / (beta+d)
                               * int_{[-1,1]^{d-1}} (1 + |u|^2)^{beta/2} du,

    which tensor Gauss-Legendre handles to near machine precision.
    """
    if beta <= -d:
        raise ValueError(f"cell average of |z|^{beta} diverges in d={d}")
    if d == 1:
        g = 1.0
    else:
        x, w = np.polynomial.legendre.leggauss(order)
        grids = np.meshgrid(*([x] * (d - 1)), indexing="ij")
        u2 = sum(gi**2 for gi in grids)
        vals = (1.0 + u2) ** (beta / 2.0)
        wt = np.ones_like(vals)
        for axis_w in np.ix_(*([w] * (d - 1))):
            wt = wt * axis_w
        g = float(np.sum(vals * wt))
    return 2.0 * d * 0.5 ** (beta + d) / (beta + d) * g


def cell_average_power(beta: float, h: float, d: int) -> float:
    """Exact average of |z|^beta over the cell [-h/2, h/2]^d (needs beta > -d)."""
    return _unit_cell_average(float(beta), int(d)) * h**beta


@lru_cache(maxsize=None)
def _gl_nodes(order: int):
    return np.polynomial.legendre.leggauss(order)


def _gl_box_integral(func, lo: np.ndarray, hi: np.ndarray, order: int = _GL_ORDER) -> float:
    """Tensor Gauss-Legendre integral of func(z0,...,z_{d-1}) over a box."""
    x, w = _gl_nodes(order)
    d = lo.size
    zs, wt = [], 1.0
    for ax in range(d):
        mid, half = 0.5 * (lo[ax] + hi[ax]), 0.5 * (hi[ax] - lo[ax])
        sh = [1] * d
        sh[ax] = order
        zs.append((mid + half * x).reshape(sh))
        wt = wt * (half * w).reshape(sh)
    return float(np.sum(func(zs) * wt))


def _singular_corner_box_integral(func, beta: float, corner: np.ndarray,
                                  opposite: np.ndarray) -> float:
    """Integral over a box of a beta-homogeneous kernel singular at one corner.

    Dyadic self-similarity about the corner: scaling the box by 1/2 towards the
    singular corner reproduces the corner sub-box, so with G the integral over
    the 2^d - 1 regular sub-boxes, I = G / (1 - 2^{-(beta+d)}) exactly.
    """
    d = corner.size
    mid = 0.5 * (corner + opposite)
    g = 0.0
    for mask in range(1, 2**d):
        lo = np.empty(d)
        hi = np.empty(d)
        for ax in range(d):
            if (mask >> ax) & 1:
                a, b = mid[ax], opposite[ax]
            else:
                a, b = corner[ax], mid[ax]
            lo[ax], hi[ax] = min(a, b), max(a, b)
        g += _gl_box_integral(func, lo, hi)
    return g / (1.0 - 2.0 ** (-(beta + d)))


def _cell_average_general(func, beta: float, center: np.ndarray, h: float) -> float:
    """Average of a beta-homogeneous kernel (singular at 0) over a cell.

    Splits the cell at the singularity when 0 lies in the closure; otherwise a
    single smooth Gauss-Legendre pass.
    """
    d = center.size
    lo = center - h / 2.0
    hi = center + h / 2.0
    inside = np.all(lo <= 0) and np.all(hi >= 0)
    if not inside:
        return _gl_box_integral(func, lo, hi) / h**d
    total = 0.0
    for mask in range(2**d):
        corner = np.zeros(d)
        opp = np.empty(d)
        degenerate = False
        for ax in range(d):
            opp[ax] = hi[ax] if (mask >> ax) & 1 else lo[ax]
            if opp[ax] == 0.0:
                degenerate = True
        if degenerate:
            continue
        total += _singular_corner_box_integral(func, beta, corner, opp)
    return total / h**d


# -- kernel component families -------------------------------------------------

def _component_callables(which: str, gamma: float, d: int,
                         exponent: float | None = None) -> list[tuple]:
    """(callable over coordinate-array lists, homogeneity degree) per component."""

    def rpow(zs, expo):
        r2 = sum(z**2 for z in zs)
        with np.errstate(divide="ignore"):
            return np.where(r2 > 0, r2, 1.0) ** (expo / 2.0)

    out = []
    if which == "a":
        for i, j in sym_index_pairs(d):
            def fa(zs, i=i, j=j):
                r2 = sum(z**2 for z in zs)
                return rpow(zs, gamma) * ((r2 if i == j else 0.0) - zs[i] * zs[j])
            out.append((fa, gamma + 2.0))
    elif which == "b":
        for i in range(d):
            def fb(zs, i=i):
                return -(d - 1) * zs[i] * rpow(zs, gamma)
            out.append((fb, gamma + 1.0))
    elif which == "c":
        expo = gamma if exponent is None else exponent
        coef = -(d - 1) * (expo + d)
        def fc(zs):
            return coef * rpow(zs, expo)
        out.append((fc, expo))
    else:
        raise ValueError(which)
    return out


def _center_value(which: str, idx: int, gamma: float, d: int, h: float,
                  exponent: float | None = None) -> float:
    """Exact average of a kernel component over the cell centered at z = 0."""
    if which == "a":
        i, j = sym_index_pairs(d)[idx]
        if i != j:
            return 0.0  # odd in z_i z_j over a symmetric cell
        return (d - 1) / d * cell_average_power(gamma + 2.0, h, d)
    if which == "b":
        return 0.0  # odd kernel
    expo = gamma if exponent is None else exponent
    return -(d - 1) * (expo + d) * cell_average_power(expo, h, d)


@lru_cache(maxsize=None)
def _near_offsets(d: int, m0: int) -> tuple:
    """Integer offsets 0 < |m|_inf <= m0, deterministic order."""
    rng = range(-m0, m0 + 1)
    out = []
    grids = np.meshgrid(*([list(rng)] * d), indexing="ij")
    flat = np.stack([g.ravel() for g in grids], axis=1)
    for row in flat:
        if np.any(row != 0):
            out.append(tuple(int(x) for x in row))
    return tuple(out)


def _build_component_table(grid: Grid, which: str, gamma: float, idx: int,
                           exponent: float | None, radius: float | None,
                           wrapped: bool) -> np.ndarray:
    """One kernel component on the offset lattice, near cells exactly averaged.

    wrapped=True gives the FFT layout on 2n points per axis (offset 0 at index
    0, negative offsets wrapped to the top); wrapped=False gives the centered
    layout on 2n-1 points, used by the direct-summation oracle.
    """
    n, h, d = grid.n, grid.spacing, grid.d
    func, beta = _component_callables(which, gamma, d, exponent)[idx]
    if wrapped:
        m = np.arange(2 * n)
        m = np.where(m >= n, m - 2 * n, m)
    else:
        m = np.arange(2 * n - 1) - (n - 1)
    ms = []
    for ax in range(d):
        sh = [1] * d
        sh[ax] = m.size
        ms.append(m.reshape(sh))
    zs = [mm * h for mm in ms]
    table = func(zs)
    r2 = sum(z**2 for z in zs)
    center = np.nonzero(r2 == 0)
    table[center] = _center_value(which, idx, gamma, d, h, exponent)
    m0 = min(1, n - 1)
    index_of = (lambda mi: mi % (2 * n)) if wrapped else (lambda mi: mi + n - 1)
    for off in _near_offsets(d, m0):
        loc = tuple(index_of(mi) for mi in off)
        center_z = np.array([mi * h for mi in off])
        table[loc] = _cell_average_general(func, beta, center_z, h)
    if radius is not None:
        table = np.where(r2 <= radius**2, table, 0.0)
    return table


def power_kernel_table(grid: Grid, beta: float, radius: float | None = None,
                       wrapped: bool = False) -> np.ndarray:
    """Tabulated |z|^beta kernel (near cells exactly averaged) on the offset lattice."""
    d = grid.d
    if beta <= -d:
        raise ValueError(f"kernel exponent {beta} not integrable in d={d}")
    # reuse the "c" family with its coefficient divided out
    coef = -(d - 1) * (beta + d)
    t = _build_component_table(grid, "c", beta, 0, beta, radius, wrapped)
    return t / coef


# -- FFT convolution machinery ---------------------------------------------------

_FFT_CACHE: dict = {}


def _cached_kernel_ffts(grid: Grid, which: str, gamma: float,
                        exponent: float | None = None,
                        radius: float | None = None) -> list[np.ndarray]:
    key = (grid.d, grid.n, grid.extent, which, float(gamma), exponent, radius)
    if key not in _FFT_CACHE:
        ncomp = len(_component_callables(which, gamma, grid.d, exponent))
        shape = (2 * grid.n,) * grid.d
        _FFT_CACHE[key] = [
            sfft.rfftn(
                _build_component_table(grid, which, gamma, i, exponent, radius, True),
                s=shape, workers=fft_workers(),
            )
            for i in range(ncomp)
        ]
    return _FFT_CACHE[key]


def _convolve_with_ffts(fvals: np.ndarray, grid: Grid,
                        kffts: list[np.ndarray]) -> list[np.ndarray]:
    """Linear convolutions sum_j K(v_i - v_j) f_j h^d against cached kernel FFTs."""
    shape = (2 * grid.n,) * grid.d
    central = tuple(slice(0, grid.n) for _ in range(grid.d))
    F = sfft.rfftn(fvals, s=shape, workers=fft_workers())
    hd = grid.spacing**grid.d
    return [
        sfft.irfftn(F * kf, s=shape, workers=fft_workers())[central] * hd for kf in kffts
    ]


def convolve_power(f: ScalarField, beta: float, radius: float | None = None) -> ScalarField:
    """(|z|^beta * f) on the grid, optional sharp cutoff |z| <= radius."""
    g = f.grid
    d = g.d
    if beta <= -d:
        raise ValueError(f"kernel exponent {beta} not integrable in d={d}")
    coef = -(d - 1) * (beta + d)
    kffts = _cached_kernel_ffts(g, "c", beta, exponent=beta, radius=radius)
    return ScalarField(g, _convolve_with_ffts(f.values, g, kffts)[0] / coef)


def coefficient_fields(f: ScalarField, pot: Potential) -> CoefficientFields:
    """A[f], b[f], c_gamma[f] by zero-padded FFT convolution (local c for Coulomb)."""
    g = f.grid
    if pot.d != g.d:
        raise ValueError("potential dimension does not match grid")
    if not f.check_finite():
        raise ValueError("non-finite distribution passed to coefficient_fields")
    if f.min < 0 and abs(f.min) > 1e-5 * max(f.max, 1e-300):
        warnings.warn(
            f"coefficient_fields called with negative parts (min {f.min:.3e})",
            stacklevel=2,
        )
    a_ffts = _cached_kernel_ffts(g, "a", pot.gamma)
    b_ffts = _cached_kernel_ffts(g, "b", pot.gamma)
    if pot.coulomb:
        c_vals = -pot.c_d * f.values
        conv = _convolve_with_ffts(f.values, g, a_ffts + b_ffts)
    else:
        c_ffts = _cached_kernel_ffts(g, "c", pot.gamma)
        conv = _convolve_with_ffts(f.values, g, a_ffts + b_ffts + c_ffts)
        c_vals = conv[-1]
    nA = len(a_ffts)
    return CoefficientFields(
        A=MatrixField(g, np.stack(conv[:nA])),
        b=VectorField(g, np.stack(conv[nA:nA + g.d])),
        c=ScalarField(g, c_vals),
        pot=pot,
    )


def truncated_c(f: ScalarField, pot: Potential, exponent: float | None = None,
                radius: float = 1.0) -> ScalarField:
    """Truncated singular mass: convolution with -(d-1)(d+expo)|z|^expo 1_{|z|<=radius}.

    The default exponent is gamma, valid for gamma > -d; the Coulomb analogue
    uses exponent 1-d (pass it explicitly).
    """
    g = f.grid
    expo = pot.gamma if exponent is None else float(exponent)
    if expo <= -g.d:
        raise ValueError(
            f"truncated_c needs exponent > -d; got {expo} (pass exponent=1-d for Coulomb)"
        )
    kffts = _cached_kernel_ffts(g, "c", pot.gamma, exponent=expo, radius=float(radius))
    return ScalarField(g, _convolve_with_ffts(f.values, g, kffts)[0])


def _point_convolutions(f: ScalarField, comps: list[tuple], v,
                        radius: float | None = None, near_radius: float = 2.0,
                        refine: int = 8) -> list[float]:
    """Direct-sum kernel convolutions evaluated at an arbitrary point v.

    Far cells use plain midpoint sums.  Cells near v (and, with a cutoff
    radius, all cells inside it) are oversampled at h/refine resolution with
    cubic interpolation of f; subcells whose closure touches v use exact
    kernel averages.  Keeps second-order accuracy with a small constant for
    off-node evaluations despite the kernel singularity.
    """
    from scipy.ndimage import map_coordinates

    g = f.grid
    d, h = g.d, g.spacing
    v = np.asarray(v, dtype=np.float64)
    coords = g.coords()
    zs = [v[ax] - c for ax, c in enumerate(coords)]
    hd = h**d

    near_half = max(near_radius, h)
    if radius is not None:
        near_half = max(near_half, radius + h)
    near_mask = np.ones(g.shape, dtype=bool)
    for z in zs:
        near_mask &= np.abs(z) <= near_half + 1e-12
    near_idx = np.argwhere(near_mask)

    axis = g.axis
    hs = h / refine
    offs = (np.arange(refine) + 0.5) / refine - 0.5  # subcell offsets, fractions of h
    sub_centers = []
    for idx in near_idx:
        base = np.array([axis[i] for i in idx])
        local = np.meshgrid(*[(base[ax] + offs * h) for ax in range(d)], indexing="ij")
        sub_centers.append(np.stack([lc.ravel() for lc in local], axis=1))
    if sub_centers:
        sub_centers = np.concatenate(sub_centers, axis=0)
        idx_coords = [(sub_centers[:, ax] + g.extent) / h - 0.5 for ax in range(d)]
        f_sub = map_coordinates(f.values, np.stack(idx_coords), order=3, mode="nearest")
        z_sub = [v[ax] - sub_centers[:, ax] for ax in range(d)]
        singular = np.ones(sub_centers.shape[0], dtype=bool)
        for ax in range(d):
            singular &= np.abs(z_sub[ax]) <= hs / 2.0 + 1e-12
        sing_rows = np.nonzero(singular)[0]
        if radius is not None:
            r2_sub = sum(z**2 for z in z_sub)
            f_sub = np.where(r2_sub <= radius**2, f_sub, 0.0)
    else:
        f_sub = np.zeros(0)
        z_sub = [np.zeros(0)] * d
        sing_rows = np.zeros(0, dtype=int)

    far_vals = f.values.copy()
    if radius is not None:
        r2 = sum(z**2 for z in zs)
        far_vals = np.where(r2 <= radius**2, far_vals, 0.0)

    out = []
    for func, beta in comps:
        vals = np.where(near_mask, 0.0, func(zs))
        total = float(np.sum(vals * far_vals)) * hd
        if f_sub.size:
            kv = func(z_sub)
            for row in sing_rows:
                center = np.array([z_sub[ax][row] for ax in range(d)])
                kv[row] = _cell_average_general(func, beta, center, hs)
            total += float(np.sum(kv * f_sub)) * hs**d
        out.append(total)
    return out


def coefficients_at_point(f: ScalarField, pot: Potential, v) -> tuple:
    """A[f](v), b[f](v), c_gamma[f](v) by direct summation at an arbitrary point."""
    g = f.grid
    d = g.d
    gamma = pot.gamma
    comps = _component_callables("a", gamma, d) + _component_callables("b", gamma, d)
    if not pot.coulomb:
        comps = comps + _component_callables("c", gamma, d)
    vals = _point_convolutions(f, comps, v)
    A = np.empty((d, d))
    npairs = len(sym_index_pairs(d))
    for k, (i, j) in enumerate(sym_index_pairs(d)):
        A[i, j] = A[j, i] = vals[k]
    b = np.array(vals[npairs:npairs + d])
    if pot.coulomb:
        h = g.spacing
        idx = tuple(int(np.clip(round((vi + g.extent) / h - 0.5), 0, g.n - 1)) for vi in np.asarray(v))
        c = -pot.c_d * float(f.values[idx])
    else:
        c = vals[-1]
    return A, b, c


def truncated_c_at_point(f: ScalarField, pot: Potential, v,
                         exponent: float | None = None, radius: float = 1.0) -> float:
    """Truncated singular mass c-bar evaluated at an arbitrary point."""
    expo = pot.gamma if exponent is None else float(exponent)
    if expo <= -f.grid.d:
        raise ValueError(f"truncated_c needs exponent > -d; got {expo}")
    comps = _component_callables("c", pot.gamma, f.grid.d, exponent=expo)
    return _point_convolutions(f, comps, v, radius=radius)[0]
