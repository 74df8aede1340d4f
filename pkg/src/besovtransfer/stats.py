"""Dynamical statistics: invariant densities, correlation decay, the
infinite-branch escape experiment, and support structure of densities.

All stochastic experiments use the counter-based Philox generator with a
fixed default seed, so identical parameters reproduce results bit for bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np

from .besov import BesovParams, besov_norm_haar
from .functions import PiecewiseConstantFn, haar_analysis
from .grid import GridCell
from .maps import (
    MapSpec,
    skew_drift_exact,
    skew_g,
    skew_psi,
    wild_family,
    wild_level_start,
    wild_piece_values,
    wild_slopes,
)
from .spectral import leading_eigen
from .transfer import SparseOperator, apply, ulam_matrix

DEFAULT_SEED = 20240811


def make_rng(seed: int = DEFAULT_SEED, stream: int = 0) -> np.random.Generator:
    """Counter-based Philox generator; (seed, stream) fixes the sequence."""
    return np.random.Generator(np.random.Philox(key=[seed, stream]))


# ---------------------------------------------------------------------------
# Invariant densities
# ---------------------------------------------------------------------------


@dataclass
class AcimResult:
    density: PiecewiseConstantFn
    lam1: float
    residual: float
    level: int
    besov_norm: Optional[float] = None
    mass_deficit: float = 0.0
    diagnostics: Dict = field(default_factory=dict)
    op: Optional[SparseOperator] = None


def acim(
    m: MapSpec,
    K: int,
    tol: float = 1e-10,
    params: Optional[BesovParams] = None,
    op: Optional[SparseOperator] = None,
) -> AcimResult:
    """Normalized nonnegative fixed density of the Ulam matrix.

    For partially defined maps (truncated branch families) the leading
    eigenvalue drops below 1 by the leaked mass; this is reported in
    ``mass_deficit`` rather than raised.
    """
    if op is None:
        op = ulam_matrix(m, K)
    lam1, v, diag = leading_eigen(op, tol=tol)
    vals = np.maximum(v.values, 0.0)
    integ = float(vals.sum()) * op.cell_measure
    if integ > 0:
        vals = vals / integ
    rho = PiecewiseConstantFn(op.dim, K, vals)
    res = apply(op, rho)
    residual = (res - lam1 * rho).l1_norm()
    out = AcimResult(
        density=rho,
        lam1=lam1,
        residual=residual,
        level=K,
        mass_deficit=max(0.0, 1.0 - lam1),
        diagnostics=diag,
        op=op,
    )
    if params is not None:
        out.besov_norm = besov_norm_haar(haar_analysis(rho), params)
    return out


# ---------------------------------------------------------------------------
# Correlations
# ---------------------------------------------------------------------------


def correlations(
    m: MapSpec,
    phi: PiecewiseConstantFn,
    psi: PiecewiseConstantFn,
    n_max: int,
    K: int,
    acim_result: Optional[AcimResult] = None,
    tail_floor: float = 1e-13,
):
    """C(n) = | int (phi o f^n) psi dm - int phi dmu int psi dm | through
    iterated operator application, plus a log-linear tail decay rate.

    Returns (C, rate); rate is NaN when the tail is numerically zero.
    """
    if acim_result is None:
        acim_result = acim(m, K)
    op = acim_result.op if acim_result.op is not None else ulam_matrix(m, K)
    cellm = op.cell_measure
    rho = acim_result.density
    mean_phi = float((phi.values * rho.values).sum()) * cellm
    int_psi = psi.integral()
    C = np.empty(n_max + 1)
    w = psi
    for n in range(n_max + 1):
        C[n] = abs(float((phi.values * w.values).sum()) * cellm - mean_phi * int_psi)
        if n < n_max:
            w = apply(op, w)
    tail = C[max(1, n_max // 3) :]
    pos = tail > tail_floor
    if pos.sum() >= 3:
        ns = np.arange(max(1, n_max // 3), n_max + 1)[pos]
        slope = np.polyfit(ns, np.log(tail[pos]), 1)[0]
        rate = float(math.exp(slope))
    else:
        rate = float("nan")
    return C, rate


# ---------------------------------------------------------------------------
# The wild-family escape experiment
# ---------------------------------------------------------------------------


@dataclass
class EscapeReport:
    alpha: float
    zeta: float
    k0: int
    n_orbits: int
    horizon: int
    threshold: float
    escaped_fraction: float
    absorbed_fraction: float
    drift_estimate: float
    drift_se: float
    drift_exact: float
    i_max: int
    seed: int

    def csv_row(self):
        return [
            self.alpha, self.zeta, self.k0, self.n_orbits, self.horizon,
            self.threshold, self.escaped_fraction, self.absorbed_fraction,
            self.drift_estimate, self.drift_se, self.drift_exact,
        ]


def _wild_step(x, alpha, zeta, i0, k0, i_max, piece_vals, slopes):
    """One vectorized step of the truncated infinite-branch map.

    Points in [2^-i0, 1) take the onto affine branches; deeper points use
    the three-piece branch of their dyadic block, evaluated through the
    exact mantissa/exponent split so the block selection never suffers
    rounding.  Points below the truncation scale return -1 (absorbed).
    """
    out = np.empty_like(x)
    base = math.ldexp(1.0, -i0)
    w = (1.0 - base) / k0
    hi = x >= base
    if hi.any():
        xr = x[hi]
        j = np.minimum(((xr - base) / w).astype(np.int64), k0 - 1)
        out[hi] = (xr - base - j * w) / w
    lo = ~hi
    if lo.any():
        xr = x[lo]
        mant, expo = np.frexp(xr)  # xr = mant * 2^expo, mant in [1/2, 1)
        absorbed = expo < -(i_max)  # level i = -expo exceeds i_max
        m1, m2, m3 = slopes
        v0, _, v2s, _, v3s, _ = piece_vals
        pu = np.where(
            mant < 11.0 / 16.0,
            v0 + m1 * (mant - 0.5),
            np.where(
                mant < 7.0 / 8.0,
                v2s + m2 * (mant - 11.0 / 16.0),
                v3s + m3 * (mant - 7.0 / 8.0),
            ),
        )
        y = np.ldexp(pu, expo)
        y[absorbed] = -1.0
        out[lo] = y
    out[out <= 0.0] = -1.0
    return out


def wild_escape(
    alpha: float,
    zeta: float,
    k0: int,
    n_orbits: int,
    horizon: int,
    threshold: float = 2.0**-20,
    seed: int = DEFAULT_SEED,
    i_max: int = 40,
    drift_orbits: int = 256,
    drift_steps: int = 4000,
    mode: str = "repaired",
) -> EscapeReport:
    """Simulate uniform random orbits of the truncated map and report the
    fraction ending in the neighbourhood of 0.

    An orbit counts as escaped when it is absorbed below the truncation
    scale 2^-(i_max+1) or sits below ``threshold`` at the horizon: the
    empirical version of convergence to the Dirac mass at 0.  The drift
    is the Birkhoff mean of the level increment along orbits of the
    conjugate skew product, with the exact piecewise integral alongside.
    """
    i0 = wild_level_start(alpha)
    slopes = wild_slopes(alpha, zeta)
    pv = wild_piece_values(alpha, zeta, mode)
    rng = make_rng(seed, stream=1)
    x = rng.uniform(0.0, 1.0, n_orbits)
    absorbed = x <= 0.0
    x[absorbed] = -1.0
    for _ in range(horizon):
        live = ~absorbed
        if not live.any():
            break
        x[live] = _wild_step(x[live], alpha, zeta, i0, k0, i_max, pv, slopes)
        absorbed |= x < 0.0
    escaped = absorbed | ((x >= 0.0) & (x < threshold))

    rngd = make_rng(seed, stream=2)
    xs = rngd.uniform(0.5, 1.0, drift_orbits)
    acc = np.zeros(drift_orbits)
    for _ in range(drift_steps):
        acc += skew_psi(xs)
        xs = skew_g(xs)
        xs = np.clip(xs, 0.5, np.nextafter(1.0, 0.0))
    per_orbit = acc / drift_steps
    drift = float(per_orbit.mean())
    se = float(per_orbit.std(ddof=1) / math.sqrt(drift_orbits))
    return EscapeReport(
        alpha=alpha, zeta=zeta, k0=k0, n_orbits=n_orbits, horizon=horizon,
        threshold=threshold,
        escaped_fraction=float(np.mean(escaped)),
        absorbed_fraction=float(np.mean(absorbed)),
        drift_estimate=drift, drift_se=se,
        drift_exact=skew_drift_exact(),
        i_max=i_max, seed=seed,
    )


def wild_operator(alpha, zeta, k0, K, i_max=30, mode="repaired"):
    """Ulam matrix of the truncated infinite-branch map."""
    return ulam_matrix(wild_family(alpha, zeta, k0, i_max=i_max, mode=mode), K)


# ---------------------------------------------------------------------------
# Support structure
# ---------------------------------------------------------------------------


@dataclass
class SupportReport:
    level: int
    floor: float
    cells: List[GridCell]
    measure: float
    refined_measure: float
    stable: bool

    @property
    def relative_change(self) -> float:
        if self.measure == 0.0:
            return math.inf
        return abs(self.refined_measure - self.measure) / self.measure


def support_cells(density: PiecewiseConstantFn, floor: float):
    mask = density.values > floor
    idx = np.argwhere(mask)
    cells = [
        GridCell(density.dim, density.level, tuple(int(v) for v in row))
        for row in idx
    ]
    measure = float(mask.sum()) * density.cell_measure
    return cells, measure, mask


def support_report(
    m: MapSpec,
    K: int,
    floor_rel: float = 1e-8,
    stability_tol: float = 0.02,
    acim_result: Optional[AcimResult] = None,
) -> SupportReport:
    """Support of the invariant density as a union of dyadic cells, with
    an openness proxy: the support measure must be stable (within 2%)
    under refinement K -> K+1."""
    if acim_result is None:
        acim_result = acim(m, K)
    rho = acim_result.density
    floor = floor_rel * float(rho.values.max())
    cells, measure, _ = support_cells(rho, floor)
    fine = acim(m, K + 1)
    floor2 = floor_rel * float(fine.density.values.max())
    _, measure2, _ = support_cells(fine.density, floor2)
    stable = abs(measure2 - measure) <= stability_tol * max(measure, 1e-300)
    return SupportReport(
        level=K, floor=floor, cells=cells, measure=measure,
        refined_measure=measure2, stable=stable,
    )


def support_forward_covering(
    m: MapSpec, density: PiecewiseConstantFn, floor: float,
    op: Optional[SparseOperator] = None,
):
    """Check that the dynamics pushes the support over itself: cells of
    the support not reached by the image of the support indicator must be
    confined to a boundary layer.

    Returns (uncovered_measure, allowed_measure): uncovered <= allowed
    is the forward-invariance-up-to-one-layer property.
    """
    K = density.level
    if op is None:
        op = ulam_matrix(m, K)
    _, _, mask = support_cells(density, floor)
    ind = PiecewiseConstantFn(density.dim, K, mask.astype(float))
    image = apply(op, ind)
    uncovered = mask & (image.values <= 1e-14)
    # perimeter cells: support cells adjacent to a non-support cell
    if density.dim == 1:
        padded = np.concatenate([[False], mask, [False]])
        perim = mask & (~padded[:-2] | ~padded[2:])
    else:
        p = np.pad(mask, 1, constant_values=False)
        perim = mask & ~(
            p[:-2, 1:-1] & p[2:, 1:-1] & p[1:-1, :-2] & p[1:-1, 2:]
        )
    uncovered_measure = float(uncovered.sum()) * density.cell_measure
    allowed = 4.0 * math.ldexp(1.0, -K) * float(perim.sum()) * density.cell_measure
    return uncovered_measure, allowed
