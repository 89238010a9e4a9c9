"""Truncated velocity domain, discrete calculus, and field containers.

The domain is the cube [-L, L]^d discretized with n cell-centered points per
axis, v_i = -L + (i + 1/2) h, h = 2L/n.  All quadrature in the package goes
through :meth:`Grid.integrate` (midpoint rule with a fixed summation order) so
conservation identities hold to rounding.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray

SNAPSHOT_MAGIC = b"LANDAU01"


@dataclass(frozen=True)
class Grid:
    """Uniform cell-centered lattice on [-L, L]^d."""

    d: int = 3
    n: int = 32
    extent: float = 8.0
    _weight_cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        if self.d < 1:
            raise ValueError(f"d must be >= 1, got {self.d}")
        if self.n < 8 or self.n % 2 != 0:
            raise ValueError(f"n must be even and >= 8, got {self.n}")
        if self.extent <= 0:
            raise ValueError(f"extent must be positive, got {self.extent}")

    @property
    def spacing(self) -> float:
        return 2.0 * self.extent / self.n

    @property
    def shape(self) -> tuple:
        return (self.n,) * self.d

    @property
    def axis(self) -> NDArray[np.float64]:
        """Cell-center coordinates along one axis."""
        h = self.spacing
        return -self.extent + (np.arange(self.n) + 0.5) * h

    def coords(self) -> list[NDArray[np.float64]]:
        """Broadcastable coordinate arrays, one per axis."""
        out = []
        for ax in range(self.d):
            sh = [1] * self.d
            sh[ax] = self.n
            out.append(self.axis.reshape(sh))
        return out

    def radius_sq(self) -> NDArray[np.float64]:
        key = ("r2",)
        if key not in self._weight_cache:
            r2 = np.zeros(self.shape)
            for c in self.coords():
                r2 = r2 + c**2
            self._weight_cache[key] = r2
        return self._weight_cache[key]

    def weight(self, k: float) -> NDArray[np.float64]:
        """Japanese bracket weight <v>^k = (1 + |v|^2)^{k/2}, memoized per k."""
        key = ("w", float(k))
        if key not in self._weight_cache:
            if k == 0:
                w = np.ones(self.shape)
            else:
                w = (1.0 + self.radius_sq()) ** (0.5 * k)
            self._weight_cache[key] = w
        return self._weight_cache[key]

    def integrate_values(self, values: NDArray, k: float = 0.0) -> float:
        """Midpoint quadrature of values * <v>^k over the cube."""
        if k == 0:
            s = float(np.sum(values))
        else:
            s = float(np.sum(values * self.weight(k)))
        return s * self.spacing**self.d


@dataclass
class ScalarField:
    grid: Grid
    values: NDArray[np.float64]

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape != self.grid.shape:
            raise ValueError(
                f"scalar field shape {self.values.shape} != grid shape {self.grid.shape}"
            )

    @property
    def min(self) -> float:
        return float(self.values.min())

    @property
    def max(self) -> float:
        return float(self.values.max())

    @property
    def nonnegative(self) -> bool:
        return self.min >= 0.0

    def check_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.values)))

    def copy(self) -> "ScalarField":
        return ScalarField(self.grid, self.values.copy())


@dataclass
class VectorField:
    grid: Grid
    values: NDArray[np.float64]  # shape (d,) + grid.shape

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        want = (self.grid.d,) + self.grid.shape
        if self.values.shape != want:
            raise ValueError(f"vector field shape {self.values.shape} != {want}")


def sym_index_pairs(d: int) -> list[tuple[int, int]]:
    """Component ordering of the packed symmetric storage: (0,0),(0,1),...,(d-1,d-1)."""
    return [(i, j) for i in range(d) for j in range(i, d)]


@dataclass
class MatrixField:
    """Symmetric matrix field in packed upper-triangular storage."""

    grid: Grid
    values: NDArray[np.float64]  # shape (d(d+1)/2,) + grid.shape

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        d = self.grid.d
        want = (d * (d + 1) // 2,) + self.grid.shape
        if self.values.shape != want:
            raise ValueError(f"matrix field shape {self.values.shape} != {want}")

    def component(self, i: int, j: int) -> NDArray[np.float64]:
        if i > j:
            i, j = j, i
        idx = sym_index_pairs(self.grid.d).index((i, j))
        return self.values[idx]

    def dense(self) -> NDArray[np.float64]:
        """Full (..., d, d) array; used by eigensolves."""
        d = self.grid.d
        out = np.empty(self.grid.shape + (d, d))
        for idx, (i, j) in enumerate(sym_index_pairs(d)):
            out[..., i, j] = self.values[idx]
            out[..., j, i] = self.values[idx]
        return out

    def at(self, node: tuple) -> NDArray[np.float64]:
        d = self.grid.d
        m = np.empty((d, d))
        for idx, (i, j) in enumerate(sym_index_pairs(d)):
            m[i, j] = m[j, i] = self.values[idx][node]
        return m


def gradient(f: ScalarField) -> VectorField:
    """Second-order central differences; one-sided second-order at the boundary."""
    h = f.grid.spacing
    comps = np.gradient(f.values, h, edge_order=2)
    if f.grid.d == 1:
        comps = [comps]
    return VectorField(f.grid, np.stack(comps))


def _central_zero_ext(a: NDArray, axis: int, h: float) -> NDArray:
    """Central difference treating values outside the cube as zero."""
    pad = [(0, 0)] * a.ndim
    pad[axis] = (1, 1)
    ap = np.pad(a, pad)
    lo = [slice(None)] * a.ndim
    hi = [slice(None)] * a.ndim
    lo[axis] = slice(0, a.shape[axis])
    hi[axis] = slice(2, a.shape[axis] + 2)
    return (ap[tuple(hi)] - ap[tuple(lo)]) / (2.0 * h)


def divergence(F: VectorField) -> ScalarField:
    """Central-difference divergence, adjoint-compatible with :func:`gradient`.

    Values outside the cube are taken as zero, which makes the discrete
    integration-by-parts identity exact for fields vanishing near the boundary
    and makes the cube integral of the divergence a pure telescoping boundary
    flux.
    """
    h = F.grid.spacing
    out = np.zeros(F.grid.shape)
    for ax in range(F.grid.d):
        out += _central_zero_ext(F.values[ax], ax, h)
    return ScalarField(F.grid, out)


def integrate(f: ScalarField, weight_exponent: float = 0.0) -> float:
    return f.grid.integrate_values(f.values, weight_exponent)


# -- shared binary snapshot format -------------------------------------------

_KIND_NCOMP = {"scalar": lambda d: 1, "vector": lambda d: d, "matrix": lambda d: d * (d + 1) // 2}


def write_snapshot(path, field, gamma: float, time: float) -> None:
    """Write a field in the shared binary snapshot format.

    Layout: magic "LANDAU01", 4-byte little-endian header length, UTF-8 JSON
    header, then little-endian float64 payload in row-major order with
    components outermost.
    """
    if isinstance(field, ScalarField):
        kind, payload = "scalar", field.values
    elif isinstance(field, VectorField):
        kind, payload = "vector", field.values
    elif isinstance(field, MatrixField):
        kind, payload = "matrix", field.values
    else:
        raise TypeError(f"cannot snapshot {type(field).__name__}")
    g = field.grid
    header = json.dumps(
        {"d": g.d, "n": g.n, "L": g.extent, "gamma": gamma, "time": time, "kind": kind}
    ).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(SNAPSHOT_MAGIC)
        fh.write(struct.pack("<I", len(header)))
        fh.write(header)
        fh.write(np.ascontiguousarray(payload, dtype="<f8").tobytes())


def read_snapshot(path):
    """Read a snapshot; returns (field, header dict)."""
    with open(path, "rb") as fh:
        magic = fh.read(8)
        if magic != SNAPSHOT_MAGIC:
            raise ValueError(f"bad snapshot magic {magic!r}")
        (hlen,) = struct.unpack("<I", fh.read(4))
        header = json.loads(fh.read(hlen).decode("utf-8"))
        raw = fh.read()
    grid = Grid(d=header["d"], n=header["n"], extent=header["L"])
    kind = header["kind"]
    ncomp = _KIND_NCOMP[kind](grid.d)
    data = np.frombuffer(raw, dtype="<f8").astype(np.float64)
    shape = grid.shape if kind == "scalar" else (ncomp,) + grid.shape
    data = data.reshape(shape)
    cls = {"scalar": ScalarField, "vector": VectorField, "matrix": MatrixField}[kind]
    return cls(grid, data), header
