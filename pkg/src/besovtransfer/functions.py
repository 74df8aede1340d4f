"""Function representations: piecewise constants on a grid level, the Haar
transform, and Souza atoms.

A level-K function stores one value per level-K cell.  In dimension 1 the
values array has shape ``(2**K,)`` indexed by the cell index; in dimension 2
it has shape ``(2**K, 2**K)`` indexed ``[ix, iy]``.  The Haar coefficients
are indexed by the *parent* cell being split: one detail per cell in
dimension 1, three (horizontal/vertical/diagonal tensor details) in
dimension 2.  All transforms are exact up to float rounding and Parseval
holds: ``mean^2 + sum(details^2) == L2 norm^2``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, List

import numpy as np

from .grid import GridCell, Region

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(8)


@dataclass(frozen=True)
class PiecewiseConstantFn:
    """Function constant on every cell of one grid level."""

    dim: int
    level: int
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        n = 1 << self.level
        shape = (n,) if self.dim == 1 else (n, n)
        if v.shape != shape:
            raise ValueError(f"values shape {v.shape} != {shape}")
        object.__setattr__(self, "values", v)

    @property
    def cell_measure(self) -> float:
        return math.ldexp(1.0, -self.level * self.dim)

    def integral(self) -> float:
        return float(self.values.sum()) * self.cell_measure

    def l1_norm(self) -> float:
        return float(np.abs(self.values).sum()) * self.cell_measure

    def l2_norm(self) -> float:
        return math.sqrt(float(np.square(self.values).sum()) * self.cell_measure)

    def cell_value(self, cell: GridCell) -> float:
        if cell.level != self.level or cell.dim != self.dim:
            raise ValueError("cell level/dim mismatch")
        return float(self.values[cell.index])

    def __add__(self, other):
        self._check(other)
        return PiecewiseConstantFn(self.dim, self.level, self.values + other.values)

    def __sub__(self, other):
        self._check(other)
        return PiecewiseConstantFn(self.dim, self.level, self.values - other.values)

    def __mul__(self, c):
        return PiecewiseConstantFn(self.dim, self.level, self.values * float(c))

    __rmul__ = __mul__

    def _check(self, other):
        if (self.dim, self.level) != (other.dim, other.level):
            raise ValueError("level/dim mismatch")


def constant(c: float, level: int, dim: int = 1) -> PiecewiseConstantFn:
    n = 1 << level
    shape = (n,) if dim == 1 else (n, n)
    return PiecewiseConstantFn(dim, level, np.full(shape, float(c)))


def refine(f: PiecewiseConstantFn, level: int) -> PiecewiseConstantFn:
    """Re-express a level-K function on a finer level (values repeat)."""
    if level < f.level:
        raise ValueError("refine only goes to finer levels")
    r = 1 << (level - f.level)
    if f.dim == 1:
        return PiecewiseConstantFn(1, level, np.repeat(f.values, r))
    v = np.repeat(np.repeat(f.values, r, axis=0), r, axis=1)
    return PiecewiseConstantFn(2, level, v)


def coarsen(f: PiecewiseConstantFn, level: int) -> PiecewiseConstantFn:
    """Conditional expectation onto a coarser level (cell averages)."""
    if level > f.level:
        raise ValueError("coarsen only goes to coarser levels")
    r = 1 << (f.level - level)
    n = 1 << level
    if f.dim == 1:
        v = f.values.reshape(n, r).mean(axis=1)
        return PiecewiseConstantFn(1, level, v)
    v = f.values.reshape(n, r, n, r).mean(axis=(1, 3))
    return PiecewiseConstantFn(2, level, v)


# ---------------------------------------------------------------------------
# Projection of arbitrary functions
# ---------------------------------------------------------------------------


def _cell_average_1d(f, a, b, tol, max_splits):
    """Adaptive Gauss-Legendre average of f over [a,b].

    Bisects panels where the order-8 rule disagrees with its split by more
    than tol; this also pins down jump discontinuities to ~2^-max_splits.
    """
    def gl(lo, hi):
        x = 0.5 * (hi - lo) * _GL_NODES + 0.5 * (hi + lo)
        return 0.5 * (hi - lo) * float(np.dot(_GL_WEIGHTS, f(x)))

    total = 0.0
    stack = [(a, b, gl(a, b), 0)]
    while stack:
        lo, hi, est, depth = stack.pop()
        mid = 0.5 * (lo + hi)
        left, right = gl(lo, mid), gl(mid, hi)
        if abs(left + right - est) <= tol * (b - a) or depth >= max_splits:
            total += left + right
        else:
            stack.append((lo, mid, left, depth + 1))
            stack.append((mid, hi, right, depth + 1))
    return total / (b - a)


def project(
    f: Callable,
    level: int,
    dim: int = 1,
    tol: float = 1e-13,
    max_splits: int = 42,
) -> PiecewiseConstantFn:
    """Project a function onto level-``level`` piecewise constants by
    per-cell adaptive quadrature (the conditional expectation E_K).

    ``f`` must accept numpy arrays: shape (n,) in dim 1, two arrays (x, y)
    in dim 2.
    """
    n = 1 << level
    h = math.ldexp(1.0, -level)
    if dim == 1:
        vals = np.empty(n)
        for i in range(n):
            vals[i] = _cell_average_1d(f, i * h, (i + 1) * h, tol, max_splits)
        if not np.all(np.isfinite(vals)):
            raise ValueError("non-finite samples in projection")
        return PiecewiseConstantFn(1, level, vals)
    # dim 2: tensor Gauss-Legendre, one refinement pass on disagreement
    gx = _GL_NODES
    gw = _GL_WEIGHTS
    vals = np.empty((n, n))
    for ix in range(n):
        xs = ix * h + 0.5 * h * (gx + 1.0)
        for iy in range(n):
            ys = iy * h + 0.5 * h * (gx + 1.0)
            X, Y = np.meshgrid(xs, ys, indexing="ij")
            vals[ix, iy] = float(gw @ f(X, Y) @ gw) / 4.0
    if not np.all(np.isfinite(vals)):
        raise ValueError("non-finite samples in projection")
    return PiecewiseConstantFn(2, level, vals)


def indicator(region: Region, level: int) -> PiecewiseConstantFn:
    """Exact cell averages of the indicator function of a region
    (intervals and rectangle unions only)."""
    n = 1 << level
    m = math.ldexp(1.0, -level * region.dim)
    if region.dim == 1:
        vals = np.array(
            [region.overlap(GridCell(1, level, (i,))) / m for i in range(n)]
        )
        return PiecewiseConstantFn(1, level, vals)
    vals = np.empty((n, n))
    for ix in range(n):
        for iy in range(n):
            vals[ix, iy] = region.overlap(GridCell(2, level, (ix, iy))) / m
    return PiecewiseConstantFn(2, level, vals)


# ---------------------------------------------------------------------------
# Haar transform
# ---------------------------------------------------------------------------


@dataclass
class HaarCoeffs:
    """Mean plus per-cell detail coefficients.

    ``details[k]`` holds the coefficients of the cells at level k being
    split: shape ``(2**k,)`` in dim 1 and ``(3, 2**k, 2**k)`` in dim 2
    (orientations horizontal, vertical, diagonal).  The underlying Haar
    functions are L2-normalised: ``|Q|**-0.5`` times the +-1 sign pattern
    on the children of Q, positive on the low-index child.
    """

    dim: int
    level: int
    mean: float
    details: List[np.ndarray] = field(default_factory=list)

    def copy(self):
        return HaarCoeffs(
            self.dim, self.level, self.mean, [d.copy() for d in self.details]
        )

    def detail_at(self, cell: GridCell, orientation: int = 0) -> float:
        d = self.details[cell.level]
        if self.dim == 1:
            return float(d[cell.index[0]])
        return float(d[orientation][cell.index])

    def sum_of_squares(self) -> float:
        return self.mean**2 + sum(float(np.square(d).sum()) for d in self.details)


def haar_analysis(f: PiecewiseConstantFn) -> HaarCoeffs:
    """Exact Haar coefficients of a level-K piecewise constant."""
    K = f.level
    details = [None] * K
    if f.dim == 1:
        avg = f.values
        for k in range(K - 1, -1, -1):
            a0, a1 = avg[0::2], avg[1::2]
            cellm = math.ldexp(1.0, -k)  # measure of the level-k parent
            details[k] = math.sqrt(cellm) * 0.5 * (a0 - a1)
            avg = 0.5 * (a0 + a1)
        return HaarCoeffs(1, K, float(avg[0]), details)
    avg = f.values
    for k in range(K - 1, -1, -1):
        a00 = avg[0::2, 0::2]
        a10 = avg[1::2, 0::2]
        a01 = avg[0::2, 1::2]
        a11 = avg[1::2, 1::2]
        cellm = math.ldexp(1.0, -2 * k)
        w = math.sqrt(cellm) * 0.25
        dh = w * ((a00 + a01) - (a10 + a11))  # sign follows the x-axis split
        dv = w * ((a00 + a10) - (a01 + a11))
        dd = w * ((a00 + a11) - (a10 + a01))
        details[k] = np.stack([dh, dv, dd])
        avg = 0.25 * (a00 + a10 + a01 + a11)
    return HaarCoeffs(2, K, float(avg[0, 0]), details)


def haar_synthesis(c: HaarCoeffs) -> PiecewiseConstantFn:
    """Exact inverse of :func:`haar_analysis`."""
    K = c.level
    if c.dim == 1:
        avg = np.array([c.mean])
        for k in range(K):
            d = c.details[k] / math.sqrt(math.ldexp(1.0, -k))
            nxt = np.empty(2 * avg.size)
            nxt[0::2] = avg + d
            nxt[1::2] = avg - d
            avg = nxt
        return PiecewiseConstantFn(1, K, avg)
    avg = np.array([[c.mean]])
    for k in range(K):
        w = math.sqrt(math.ldexp(1.0, -2 * k))
        dh, dv, dd = (c.details[k][i] / w for i in range(3))
        n = avg.shape[0]
        nxt = np.empty((2 * n, 2 * n))
        nxt[0::2, 0::2] = avg + dh + dv + dd
        nxt[1::2, 0::2] = avg - dh + dv - dd
        nxt[0::2, 1::2] = avg + dh - dv - dd
        nxt[1::2, 1::2] = avg - dh - dv + dd
        avg = nxt
    return PiecewiseConstantFn(2, K, avg)


# ---------------------------------------------------------------------------
# Souza atoms
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SouzaAtom:
    """The function |Q|^(s-1/p) 1_Q supported on a grid cell Q."""

    cell: GridCell
    s: float
    p: float

    @property
    def sup(self) -> float:
        return self.cell.measure ** (self.s - 1.0 / self.p)


def atom_as_fn(atom: SouzaAtom, level: int) -> PiecewiseConstantFn:
    """Represent an atom exactly at grid level >= the atom cell's level."""
    q = atom.cell
    if level < q.level:
        raise ValueError("level too coarse for the atom cell")
    n = 1 << level
    r = 1 << (level - q.level)
    if q.dim == 1:
        v = np.zeros(n)
        (i,) = q.index
        v[i * r : (i + 1) * r] = atom.sup
        return PiecewiseConstantFn(1, level, v)
    v = np.zeros((n, n))
    ix, iy = q.index
    v[ix * r : (ix + 1) * r, iy * r : (iy + 1) * r] = atom.sup
    return PiecewiseConstantFn(2, level, v)


# ---------------------------------------------------------------------------
# Serialization (CSV with a small header; see the cli module docs)
# ---------------------------------------------------------------------------


def save_fn(f: PiecewiseConstantFn, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# dim={f.dim}\n# level={f.level}\n")
        for v in f.values.ravel():
            fh.write(f"{float(v)!r}\n")


def load_fn(path) -> PiecewiseConstantFn:
    dim = level = None
    vals = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                key, _, val = line[1:].strip().partition("=")
                if key.strip() == "dim":
                    dim = int(val)
                elif key.strip() == "level":
                    level = int(val)
            else:
                vals.append(float(line))
    if dim is None or level is None:
        raise ValueError("missing dim/level header")
    arr = np.array(vals)
    n = 1 << level
    if dim == 2:
        arr = arr.reshape(n, n)
    return PiecewiseConstantFn(dim, level, arr)
