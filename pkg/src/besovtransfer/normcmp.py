"""Comparison norms for piecewise-constant observables: Keller's
generalized-variation norm, Butterley's interpolation-type norm (from
above), a Liverani-type dual norm (from below), and the inclusion
inequalities tying them to the Haar Besov norms.

Directions matter and are part of the contract: the Liverani value is a
lower bound (finite dictionary of admissible C^1 test functions), the
Butterley value an upper bound (one explicit interpolation family), so
each sits on the small side of its inclusion.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Optional

import numpy as np
from numpy.polynomial.legendre import Legendre
from scipy.ndimage import maximum_filter1d, minimum_filter1d

from .besov import BesovParams, besov_norm_haar, besov_norm_osc
from .functions import (
    HaarCoeffs,
    PiecewiseConstantFn,
    coarsen,
    haar_analysis,
    haar_synthesis,
    refine,
)


# ---------------------------------------------------------------------------
# Keller: var_{1,s}(f) = sup_eps OSC_1(f, eps) / eps^s
# ---------------------------------------------------------------------------


def osc_window_integral(f: PiecewiseConstantFn, i: int) -> float:
    """OSC_1(f, 2^-i) = int osc(f, eps, y) dy for eps = 2^-i, exactly.

    For a level-K piecewise constant and dyadic eps the oscillation over
    the window (y-eps, y+eps) is constant on level-K cells: the max minus
    min over the cells meeting the window in positive measure (the
    essential sup ignores the measure-zero cell boundaries).
    """
    if f.dim != 1:
        raise ValueError("Keller variation is 1D")
    K = f.level
    v = f.values
    if i == 0:
        return float(v.max() - v.min())
    q = 1 << (K - i) if i <= K else 0
    if q == 0:
        # eps below the grid scale: window spans at most two cells
        q = 1
    win = 2 * q + 1
    mx = maximum_filter1d(v, size=win, mode="nearest")
    mn = minimum_filter1d(v, size=win, mode="nearest")
    return float((mx - mn).mean())


def keller_var(f: PiecewiseConstantFn, s: float) -> float:
    """sup over dyadic window radii eps = 2^-i, i = 0..K, of
    OSC_1(f, eps) / eps^s."""
    K = f.level
    best = 0.0
    for i in range(K + 1):
        val = osc_window_integral(f, i) * (2.0**i) ** s
        best = max(best, val)
    return best


# ---------------------------------------------------------------------------
# Butterley: upper bound via the conditional-expectation family
# ---------------------------------------------------------------------------


def total_variation(f: PiecewiseConstantFn) -> float:
    if f.dim != 1:
        raise ValueError("1D only")
    return float(np.abs(np.diff(f.values)).sum())


def butterley_upper(f: PiecewiseConstantFn, s: float):
    """Upper bound of the interpolation norm

        inf over families sup_{0<k<=1} k^-s |f_k - f|_1 + k^(1-s) ||f_k||_BV

    using the candidate family f_k = E_i f for 2^-i <= k < 2^-i+1 (f_k = f
    below the grid scale).  The BV norm is |.|_1 plus the exact total
    variation of the piecewise-constant representative; the factor 2^(1-s)
    accounts for k ranging over the whole dyadic block.  Returns
    (value, binding_level).
    """
    K = f.level
    best, arg = 0.0, 0
    for i in range(K + 1):
        gi = refine(coarsen(f, i), K)
        l1diff = (gi - f).l1_norm()
        bv = gi.l1_norm() + total_variation(coarsen(f, i))
        val = (2.0**i) ** s * l1diff + 2.0 ** (1 - s) * (2.0**-i) ** (1 - s) * bv
        if val > best:
            best, arg = val, i
    return best, arg


# ---------------------------------------------------------------------------
# Liverani: lower bound by a dictionary of normalised C^1 test functions
# ---------------------------------------------------------------------------


def _holder_norm_upper(M: float, L: float, sigma: float) -> float:
    """Upper bound for sup|g| + Holder_sigma(g) from sup|g| = M and
    sup|g'| = L: the Holder quotient is at most min(L d^(1-sigma),
    2M/d^sigma), maximised at d = 2M/L."""
    return M + (L**sigma) * (2.0 * M) ** (1.0 - sigma)


def _bump_edge_values(edges: np.ndarray, a: float, h: float) -> np.ndarray:
    """sin^2(pi (x-a)/h) on [a, a+h], zero outside, at the given points."""
    u = (edges - a) / h
    out = np.sin(np.pi * np.clip(u, 0.0, 1.0)) ** 2
    out[(u <= 0.0) | (u >= 1.0)] = 0.0
    return out


class _DictEntry:
    __slots__ = ("edge_values", "norm", "kind")

    def __init__(self, edge_values, norm, kind):
        self.edge_values = edge_values
        self.norm = norm
        self.kind = kind


def _build_dictionary(f: PiecewiseConstantFn, s: float) -> List[_DictEntry]:
    K = f.level
    N = 1 << K
    edges = np.arange(N + 1) / N
    sigma = 1.0 - s
    entries: List[_DictEntry] = []
    # polynomials (Legendre on [0,1]); |P_k| <= 1, |P_k'| <= k(k+1)/2 on [-1,1]
    for k in range(1, 9):
        basis = Legendre.basis(k)
        vals = basis(2.0 * edges - 1.0)
        L = 2.0 * k * (k + 1) / 2.0
        entries.append(_DictEntry(vals, _holder_norm_upper(1.0, L, sigma), f"P{k}"))
    # single smooth bumps on dyadic cells, levels 0..4
    for lev in range(0, 5):
        h = 2.0**-lev
        L = math.pi / h
        norm = _holder_norm_upper(1.0, L, sigma)
        for idx in range(1 << lev):
            vals = _bump_edge_values(edges, idx * h, h)
            entries.append(_DictEntry(vals, norm, f"bump{lev}.{idx}"))
    # per-level signed profiles matched to the Haar details of f
    co = haar_analysis(f)
    for lev in range(K):
        d = co.details[lev]
        signs = np.where(d >= 0.0, 1.0, -1.0)
        h = 2.0**-lev
        cell_idx = np.minimum((edges / h).astype(np.int64), (1 << lev) - 1)
        u = edges / h - cell_idx
        vals = signs[cell_idx] * np.sin(np.pi * np.clip(u, 0.0, 1.0)) ** 2
        L = math.pi / h
        entries.append(
            _DictEntry(vals, _holder_norm_upper(1.0, L, sigma), f"profile{lev}")
        )
    return entries


def liverani_lower(
    f: PiecewiseConstantFn, s: float, dict_size: Optional[int] = None
) -> float:
    """Lower bound for sup |int g' f dm| over C^1 test functions g with
    |g|_{C^{1-s}} <= 1: the max over a finite dictionary, each element
    divided by a certified upper bound of its C^{1-s} norm.

    The value is monotone non-decreasing in ``dict_size``.
    """
    if f.dim != 1:
        raise ValueError("1D only")
    entries = _build_dictionary(f, s)
    if dict_size is not None:
        entries = entries[:dict_size]
    v = f.values
    best = 0.0
    for e in entries:
        # int g' f = sum_cells value * (g at right edge - g at left edge)
        val = abs(float(np.dot(v, np.diff(e.edge_values)))) / e.norm
        best = max(best, val)
    return best


# ---------------------------------------------------------------------------
# Inclusion suite
# ---------------------------------------------------------------------------


@dataclass
class NormReport:
    fid: str
    s: float
    level: int
    keller: float
    butterley: float
    liverani: float
    besov_haar_11: float
    besov_osc: float
    keller_ok: bool
    liverani_ok: bool
    butterley_ok: bool

    def csv_row(self):
        return [
            self.fid, self.s, self.level, self.keller, self.butterley,
            self.liverani, self.besov_haar_11, self.besov_osc,
            int(self.keller_ok), int(self.liverani_ok), int(self.butterley_ok),
        ]


def inclusion_suite(
    fns, s: float, slack: float = 1e-9, ids: Optional[List[str]] = None
) -> List[NormReport]:
    """Check, per function, the three inclusion inequalities

        besov_osc <= 2^s * keller_var + |int f| + slack
        liverani_lower <= besov(1,1) + slack
        besov_osc <= 4 * butterley_upper + slack

    Violations are recorded in the report (the callers' tests fail on
    them); the explicit constants are part of the contract.
    """
    p11 = BesovParams(s, 1.0, 1.0)
    out = []
    for i, f in enumerate(fns):
        fid = ids[i] if ids else f"f{i}"
        kv = keller_var(f, s)
        bu, _ = butterley_upper(f, s)
        lv = liverani_lower(f, s)
        b11 = besov_norm_haar(haar_analysis(f), p11)
        bo = besov_norm_osc(f, s)
        out.append(
            NormReport(
                fid=fid, s=s, level=f.level,
                keller=kv, butterley=bu, liverani=lv,
                besov_haar_11=b11, besov_osc=bo,
                keller_ok=bo <= 2.0**s * kv + abs(f.integral()) + slack,
                liverani_ok=lv <= b11 + slack,
                butterley_ok=bo <= 4.0 * bu + slack,
            )
        )
    return out


def norm_corpus(K: int, n: int, seed: int = 20240811) -> List[PiecewiseConstantFn]:
    """Seeded mix of indicators, staircases, Haar-sparse functions, smooth
    samples and random piecewise constants at level K."""
    rng = np.random.Generator(np.random.Philox(key=seed))
    N = 1 << K
    xs = (np.arange(N) + 0.5) / N
    fns: List[PiecewiseConstantFn] = []
    fns.append(PiecewiseConstantFn(1, K, np.ones(N)))
    fns.append(PiecewiseConstantFn(1, K, (xs < 0.5).astype(float)))
    for njump in (4, 16, 64):
        stair = np.floor(xs * njump) / njump
        fns.append(PiecewiseConstantFn(1, K, stair))
    while len(fns) < n:
        kind = len(fns) % 4
        if kind == 0:
            a = float(rng.uniform(0, 0.9))
            b = float(rng.uniform(a + 0.05, 1.0))
            fns.append(PiecewiseConstantFn(1, K, ((xs >= a) & (xs < b)).astype(float)))
        elif kind == 1:
            c = HaarCoeffs(1, K, float(rng.normal()),
                           [np.zeros(1 << k) for k in range(K)])
            for _ in range(int(rng.integers(2, 10))):
                lev = int(rng.integers(0, K))
                c.details[lev][int(rng.integers(0, 1 << lev))] = float(rng.normal())
            fns.append(haar_synthesis(c))
        elif kind == 2:
            k1 = int(rng.integers(1, 9))
            ph = float(rng.uniform(0, 2 * math.pi))
            fns.append(PiecewiseConstantFn(1, K, np.sin(2 * math.pi * k1 * xs + ph)))
        else:
            lev = int(rng.integers(2, min(7, K)))
            vals = rng.normal(size=1 << lev)
            fns.append(refine(PiecewiseConstantFn(1, lev, vals), K))
    return fns[:n]
