"""Discretized transfer operators.

The Ulam/Galerkin matrix of a map at grid level K has entries

    entry(Q, P) = (1/|Q|) * sum_r m( h_r(Q cap image_r) cap P )

with rows indexed by the output cell Q and columns by the input cell P,
so that ``apply`` realises the projected operator E_K Phi E_K on level-K
piecewise constants.  For jacobian weights g = |h'| the entries are
computed from exact interval preimages (no quadrature); the general
weighted operator with weights g^tau integrates per entry with
Gauss-Legendre panels.

For piecewise-affine Markov maps the atom-level action is available in
closed form: an atom on a level-(k+1) dynamical cell P maps to the atom
on f(P) with multiplier sigma^(1/p - s - 1), where sigma is the branch
expansion on P.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict

import numpy as np
import scipy.sparse as sp

from .besov import BesovParams
from .functions import PiecewiseConstantFn
from .maps import Branch, MapSpec, partition_levels, sorted_branches

_GL8 = np.polynomial.legendre.leggauss(8)
_GL16 = np.polynomial.legendre.leggauss(16)


@dataclass
class SparseOperator:
    """A discretized transfer operator at one grid level."""

    level: int
    dim: int
    matrix: sp.csr_matrix
    meta: Dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    @property
    def cell_measure(self) -> float:
        return math.ldexp(1.0, -self.level * self.dim)


def _branch_breakpoints(branch: Branch, N: int):
    """Image-side breakpoints splitting the branch at every output-cell
    boundary and every preimage of an input-cell boundary."""
    c, d = branch.image
    a, b = branch.domain
    grid = np.arange(N + 1) / N
    ys = grid[(grid > c) & (grid < d)]
    xs = grid[(grid > a) & (grid < b)]
    y_from_x = np.asarray(branch.forward(xs), dtype=float)
    bp = np.unique(np.concatenate([[c, d], ys, y_from_x]))
    bp = bp[(bp >= c - 1e-15) & (bp <= d + 1e-15)]
    return bp


def _branch_segments(branch: Branch, N: int):
    """(y_lo, y_hi, row, col, x_len) arrays for one branch at level K=log2 N.

    Each segment lies inside a single output cell (row) and its preimage
    inside a single input cell (col); x_len is the exact preimage length.
    """
    bp = _branch_breakpoints(branch, N)
    if bp.size < 2:
        return None
    y_lo, y_hi = bp[:-1], bp[1:]
    keep = y_hi - y_lo > 1e-15
    y_lo, y_hi = y_lo[keep], y_hi[keep]
    mids = 0.5 * (y_lo + y_hi)
    rows = np.minimum((mids * N).astype(np.int64), N - 1)
    x_at = np.asarray(branch.inverse(bp), dtype=float)
    x_len = np.abs(np.diff(x_at))[keep]
    x_mid = np.asarray(branch.inverse(mids), dtype=float)
    cols = np.minimum((x_mid * N).astype(np.int64), N - 1)
    return y_lo, y_hi, rows, cols, x_len


def ulam_matrix(m: MapSpec, level: int) -> SparseOperator:
    """Galerkin projection of the transfer operator with weights g = |h'|.

    Entries are exact interval (or rectangle) preimage measures; branch
    endpoints finer than the grid are handled by the same exact
    intersections, so no minimum level is required beyond memory.
    """
    N = 1 << level
    if m.dim == 1:
        rows, cols, vals = [], [], []
        for br in m.branches:
            seg = _branch_segments(br, N)
            if seg is None:
                continue
            _, _, r, c, xl = seg
            rows.append(r)
            cols.append(c)
            vals.append(xl * N)
        mat = sp.coo_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(N, N),
        ).tocsr()
        return SparseOperator(level, 1, mat, {
            "map": m.name, "mode": "exact-measure", "tolerance": 0.0,
        })
    # dim 2, axis-affine branches: the entry factorizes per axis
    mat = sp.csr_matrix((N * N, N * N))
    for br in m.branches:
        ax = _axis_matrix(N, (br.domain[0], br.domain[1]), (br.image[0], br.image[1]))
        ay = _axis_matrix(N, (br.domain[2], br.domain[3]), (br.image[2], br.image[3]))
        mat = mat + sp.kron(ax, ay, format="csr")
    return SparseOperator(level, 2, mat.tocsr(), {
        "map": m.name, "mode": "exact-measure", "tolerance": 0.0,
    })


def _axis_matrix(N: int, dom, img) -> sp.csr_matrix:
    """1D factor A[q, p] = N * length(h(Q_q cap img) cap P_p) for the
    affine contraction h : img -> dom."""
    a, b = dom
    c, d = img
    s = (b - a) / (d - c)
    br = Branch(
        domain=(a, b),
        image=(c, d),
        forward=lambda x: c + (np.asarray(x, dtype=float) - a) / s,
        inverse=lambda y: a + (np.asarray(y, dtype=float) - c) * s,
        inv_jacobian=lambda y: np.full_like(np.asarray(y, dtype=float), s),
        affine=(1.0 / s, c - a / s),
    )
    seg = _branch_segments(br, N)
    if seg is None:
        return sp.csr_matrix((N, N))
    _, _, r, cidx, xl = seg
    return sp.coo_matrix((xl * N, (r, cidx)), shape=(N, N)).tocsr()


def weighted_matrix(
    m: MapSpec, tau: float, level: int, tol: float = 1e-12
) -> SparseOperator:
    """Operator with weights g_r^tau (tau >= 1, typically 1 + s p').

    entry(Q, P) = (1/|Q|) * sum_r  int over Q cap image_r cap h_r^{-1}(P)
    of g_r^tau dm, by order-8 Gauss-Legendre with one refinement pass;
    segments still disagreeing after order escalation raise.
    """
    if m.dim != 1:
        raise ValueError("weighted_matrix is 1D only")
    if tau < 1.0:
        raise ValueError("tau must be >= 1")
    N = 1 << level
    rows, cols, vals = [], [], []
    for br in m.branches:
        seg = _branch_segments(br, N)
        if seg is None:
            continue
        y_lo, y_hi, r, c, _ = seg

        def quad(lo, hi, rule):
            nodes, weights = rule
            half = 0.5 * (hi - lo)
            pts = lo[:, None] + half[:, None] * (nodes[None, :] + 1.0)
            gv = np.asarray(br.inv_jacobian(pts.ravel()), dtype=float).reshape(pts.shape)
            return half * ((gv**tau) @ weights)

        coarse = quad(y_lo, y_hi, _GL8)
        mid = 0.5 * (y_lo + y_hi)
        fine = quad(y_lo, mid, _GL8) + quad(mid, y_hi, _GL8)
        bad = np.abs(fine - coarse) > tol * np.maximum(np.abs(fine), 1.0)
        for i in np.nonzero(bad)[0]:
            # order escalation, then adaptive bisection (endpoint
            # singularities of Lorenz-type jacobians land here)
            fine[i] = _adaptive_segment(br, tau, float(y_lo[i]), float(y_hi[i]), tol)
        rows.append(r)
        cols.append(c)
        vals.append(fine * N)
    mat = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(N, N),
    ).tocsr()
    mat.data[np.abs(mat.data) < 1e-15] = 0.0
    mat.eliminate_zeros()
    return SparseOperator(level, 1, mat, {
        "map": m.name, "mode": "quadrature", "order": 8, "tolerance": tol,
        "tau": tau,
    })


def _adaptive_segment(br, tau, lo, hi, tol, max_depth=48):
    """Adaptive Gauss-Legendre for int g^tau over [lo, hi]; escalates to
    order 16 and bisects panels until the local error is below tol."""

    def gl(a, b, rule):
        nodes, weights = rule
        half = 0.5 * (b - a)
        pts = a + half * (nodes + 1.0)
        gv = np.asarray(br.inv_jacobian(pts), dtype=float)
        return half * float((gv**tau) @ weights)

    total = 0.0
    stack = [(lo, hi, gl(lo, hi, _GL16), 0)]
    while stack:
        a, b, est, depth = stack.pop()
        m = 0.5 * (a + b)
        left, right = gl(a, m, _GL16), gl(m, b, _GL16)
        if abs(left + right - est) <= tol * max(abs(left + right), 1e-3):
            total += left + right
        elif depth >= max_depth:
            raise ArithmeticError("quadrature failed to converge on a segment")
        else:
            stack.append((a, m, left, depth + 1))
            stack.append((m, b, right, depth + 1))
    return total


def apply(op: SparseOperator, f: PiecewiseConstantFn) -> PiecewiseConstantFn:
    """Matrix-vector action of the discretized operator."""
    if f.level != op.level or f.dim != op.dim:
        raise ValueError("level/dim mismatch between operator and function")
    out = op.matrix @ f.values.ravel()
    if op.dim == 2:
        n = 1 << op.level
        out = out.reshape(n, n)
    return PiecewiseConstantFn(f.dim, f.level, out)


def mass_balance_error(op: SparseOperator) -> float:
    """max_P |sum_Q m(Q) entry(Q,P) - m(P)|; zero for measure-preserving
    full-branch maps up to rounding."""
    colsum = np.asarray(op.matrix.sum(axis=0)).ravel()
    return float(np.max(np.abs(colsum - 1.0))) * op.cell_measure


def export_operator(op: SparseOperator, path) -> None:
    """Coordinate-format text dump: one ``row col weight`` line per entry."""
    coo = op.matrix.tocoo()
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# map={op.meta.get('map', '?')}\n")
        fh.write(f"# level={op.level}\n# dim={op.dim}\n")
        fh.write(f"# mode={op.meta.get('mode', '?')}\n")
        fh.write("row col weight\n")
        for r, c, v in zip(coo.row, coo.col, coo.data):
            fh.write(f"{r} {c} {float(v)!r}\n")


# ---------------------------------------------------------------------------
# Exact atom action for piecewise-affine Markov maps
# ---------------------------------------------------------------------------


@dataclass
class AtomAction:
    """Closed-form image of every dynamical-partition atom up to ``depth``.

    ``levels[k]`` holds arrays (cells, images, multipliers): the atom on
    cells[i] (a level-k dynamical cell) maps to multipliers[i] times the
    atom on images[i] (a level-(k-1) cell).  ``root_multiplier`` is the
    factor on the level-0 atom (1 for maps preserving Lebesgue mass).
    """

    depth: int
    params: BesovParams
    levels: Dict[int, tuple]
    root_multiplier: float


def exact_atom_action(m: MapSpec, params: BesovParams, depth: int) -> AtomAction:
    """Atom action for a piecewise-affine Markov map.

    Every branch must be affine and branch images must align with the
    dynamical partition (Markov).  The multiplier on a level-(k+1) atom is
    sigma^(1/p - s - 1) with sigma the absolute branch slope, evaluated in
    closed form.
    """
    if m.dim != 1 or any(b.affine is None for b in m.branches):
        raise ValueError("map not affine-Markov")
    parts = partition_levels(m, depth)  # raises if not Markov
    bs = sorted_branches(m)
    lefts = np.array([b.domain[0] for b in bs])
    slopes = np.array([b.affine[0] for b in bs])
    intercepts = np.array([b.affine[1] for b in bs])
    expo = 1.0 / params.p - params.s - 1.0

    levels = {}
    for k in range(1, depth + 1):
        cells = parts[k]
        mids = 0.5 * (cells[:, 0] + cells[:, 1])
        bi = np.clip(np.searchsorted(lefts, mids, side="right") - 1, 0, len(bs) - 1)
        sig = np.abs(slopes[bi])
        mult = sig**expo
        ylo = slopes[bi] * cells[:, 0] + intercepts[bi]
        yhi = slopes[bi] * cells[:, 1] + intercepts[bi]
        images = np.sort(np.stack([ylo, yhi], axis=1), axis=1)
        levels[k] = (cells, images, mult)

    # level-0 atom: sum of the branch weights on the common image
    full = all(
        abs(b.image[0]) < 1e-12 and abs(b.image[1] - 1.0) < 1e-12 for b in bs
    )
    root = float(np.sum(1.0 / np.abs(slopes))) if full else float("nan")
    return AtomAction(depth, params, levels, root)
