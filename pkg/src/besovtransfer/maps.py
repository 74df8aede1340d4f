"""The map bestiary: piecewise expanding maps as lists of branches.

Every 1D map lives on [0,1] internally (the tent family's native [-1,1]
domain is handled by a recorded affine conjugacy).  A branch stores its
domain, its image, the forward map, the inverse branch defined on the
image, and the jacobian of the inverse branch (the transfer-operator
weight g = |h'|), plus monotonicity/regularity metadata.

Infinite branch families are truncated at a configurable minimum scale;
the omitted mass is recorded in the map metadata.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.interpolate import PchipInterpolator


@dataclass
class Branch:
    """One monotone branch of a 1D piecewise map."""

    domain: Tuple[float, float]
    image: Tuple[float, float]
    forward: Callable
    inverse: Callable
    inv_jacobian: Callable
    monotone: int = 1  # +1 increasing, -1 decreasing
    tag: str = "affine"
    expansion: float = 1.0  # lower bound on |f'| over the branch
    affine: Optional[Tuple[float, float]] = None  # (slope, intercept) if affine

    @property
    def domain_measure(self) -> float:
        return self.domain[1] - self.domain[0]

    @property
    def image_measure(self) -> float:
        return self.image[1] - self.image[0]


@dataclass
class Branch2D:
    """An axis-affine branch of a planar map: a rectangle mapped onto a
    rectangle with per-axis scaling."""

    domain: Tuple[float, float, float, float]  # x0, x1, y0, y1
    image: Tuple[float, float, float, float]
    tag: str = "affine"

    @property
    def scales(self):
        dx0, dx1, dy0, dy1 = self.domain
        ix0, ix1, iy0, iy1 = self.image
        return (ix1 - ix0) / (dx1 - dx0), (iy1 - iy0) / (dy1 - dy0)

    @property
    def inv_jacobian_const(self) -> float:
        dx0, dx1, dy0, dy1 = self.domain
        ix0, ix1, iy0, iy1 = self.image
        return ((dx1 - dx0) * (dy1 - dy0)) / ((ix1 - ix0) * (iy1 - iy0))

    @property
    def expansion(self) -> float:
        return min(self.scales)

    def forward(self, x, y):
        sx, sy = self.scales
        dx0, _, dy0, _ = self.domain
        ix0, _, iy0, _ = self.image
        return ix0 + sx * (x - dx0), iy0 + sy * (y - dy0)

    def inverse(self, u, v):
        sx, sy = self.scales
        dx0, _, dy0, _ = self.domain
        ix0, _, iy0, _ = self.image
        return dx0 + (u - ix0) / sx, dy0 + (v - iy0) / sy


@dataclass
class MapSpec:
    """A piecewise expanding map: disjoint branch domains covering the
    declared domain set up to measure zero."""

    dim: int
    branches: list
    name: str
    params: Dict = field(default_factory=dict)
    meta: Dict = field(default_factory=dict)

    def min_expansion(self) -> float:
        return min(b.expansion for b in self.branches)


def _affine_branch(a, b, slope, intercept, tag="affine"):
    lo, hi = slope * a + intercept, slope * b + intercept
    if slope < 0:
        lo, hi = hi, lo
    g = 1.0 / abs(slope)
    return Branch(
        domain=(a, b),
        image=(lo, hi),
        forward=lambda x, s=slope, t=intercept: s * x + t,
        inverse=lambda y, s=slope, t=intercept: (y - t) / s,
        inv_jacobian=lambda y, g=g: np.full_like(np.asarray(y, dtype=float), g),
        monotone=1 if slope > 0 else -1,
        tag=tag,
        expansion=abs(slope),
        affine=(slope, intercept),
    )


def _invert_monotone(fn, lo, hi, y, iters=80):
    """Vectorized bisection for a scalar monotone increasing fn on [lo,hi]."""
    y = np.asarray(y, dtype=float)
    a = np.full(y.shape, lo)
    b = np.full(y.shape, hi)
    for _ in range(iters):
        m = 0.5 * (a + b)
        below = fn(m) < y
        a = np.where(below, m, a)
        b = np.where(below, b, m)
    return 0.5 * (a + b)


# ---------------------------------------------------------------------------
# Constructors
# ---------------------------------------------------------------------------


def linear_circle(ell: int) -> MapSpec:
    """x -> ell*x mod 1 with ell >= 2 full affine branches of slope ell."""
    if not (isinstance(ell, (int, np.integer)) and ell >= 2):
        raise ValueError("ell must be an integer >= 2")
    branches = [
        _affine_branch(i / ell, (i + 1) / ell, float(ell), -float(i))
        for i in range(ell)
    ]
    return MapSpec(1, branches, "linear_circle", {"ell": int(ell)})


def tent(t: float) -> MapSpec:
    """Tent map of slope 2t on [0,1]: x -> 2t*min(x, 1-x), t in (1/2, 1].

    The native form -2t|x|+2t-1 on [-1,1] is obtained through the recorded
    affine change of variable x -> 2x-1.
    """
    if not (0.5 < t <= 1.0):
        raise ValueError("t must be in (1/2, 1]")
    b1 = _affine_branch(0.0, 0.5, 2.0 * t, 0.0, tag="C1+Holder")
    b2 = _affine_branch(0.5, 1.0, -2.0 * t, 2.0 * t, tag="C1+Holder")
    meta = {"conjugacy": "y = (x+1)/2 maps [-1,1] onto [0,1]", "continuous": True}
    return MapSpec(1, [b1, b2], "tent", {"t": t}, meta)


def markov_holder(n: int, amplitude: float) -> MapSpec:
    """Full-branch circle map with smooth non-affine branches.

    On each I_i = [i/n,(i+1)/n) the branch is u + (A/2pi)(1 - cos 2pi u) in
    the rescaled coordinate u = nx - i, so f' = n(1 + A sin 2pi u) and the
    jacobian is smooth (hence Holder).  Requires n(1 - A) > 1.
    """
    if n < 2:
        raise ValueError("need at least two branches")
    A = float(amplitude)
    if not (0.0 <= A < 1.0 - 1.0 / n):
        raise ValueError("amplitude too large: expansion would drop below 1")
    if A == 0.0:
        m = linear_circle(n)
        m.name = "markov_holder"
        m.params = {"n": n, "amplitude": 0.0}
        return m

    def mk(i):
        a, b = i / n, (i + 1) / n

        def fwd(x):
            u = n * np.asarray(x, dtype=float) - i
            return u + (A / (2 * math.pi)) * (1.0 - np.cos(2 * math.pi * u))

        def inv(y):
            u = _invert_monotone(
                lambda u: u + (A / (2 * math.pi)) * (1.0 - np.cos(2 * math.pi * u)),
                0.0,
                1.0,
                y,
            )
            return (u + i) / n

        def jac(y):
            u = n * inv(y) - i
            return 1.0 / (n * (1.0 + A * np.sin(2 * math.pi * u)))

        return Branch(
            domain=(a, b),
            image=(0.0, 1.0),
            forward=fwd,
            inverse=inv,
            inv_jacobian=jac,
            monotone=1,
            tag="C1+Holder",
            expansion=n * (1.0 - A),
        )

    branches = [mk(i) for i in range(n)]
    return MapSpec(
        1, branches, "markov_holder", {"n": n, "amplitude": A},
        {"inf_w": n * (1.0 - A)},
    )


def _lorenz_branch(a, b, D, aJ, gamma):
    """F(x) = (D x - aJ)^(1/(1+gamma)) on [a,b]; needs D*a - aJ >= 0."""
    alpha = 1.0 + gamma
    if D <= 0 or D * a - aJ < -1e-15:
        raise ValueError("invalid Lorenz branch data")

    def fwd(x):
        return np.maximum(D * np.asarray(x, dtype=float) - aJ, 0.0) ** (1.0 / alpha)

    def inv(y):
        return (np.asarray(y, dtype=float) ** alpha + aJ) / D

    def jac(y):
        return alpha * np.asarray(y, dtype=float) ** gamma / D

    lo, hi = fwd(np.array([a, b]))
    # |F'| = (D/alpha) (Dx-aJ)^(-gamma/alpha), decreasing: inf at x=b
    expansion = (D / alpha) * max(D * b - aJ, 1e-300) ** (-gamma / alpha)
    return Branch(
        domain=(a, b),
        image=(float(lo), float(hi)),
        forward=fwd,
        inverse=inv,
        inv_jacobian=jac,
        monotone=1,
        tag="Lorenz",
        expansion=float(expansion),
    )


def lorenz_map(gamma: float, layout: Sequence = None) -> MapSpec:
    """A piecewise map whose branches are C^{1+} diffeomorphisms or Lorenz
    branches F(x) = (D x - a)^(1/(1+gamma)).

    ``layout`` is a list of tuples: ("affine", (a, b), slope, intercept) or
    ("lorenz", (a, b), D, aJ).  The default is an affine branch of slope 2
    on [0, 1/2) and the Lorenz branch (2x-1)^(1/(1+gamma)) on [1/2, 1].
    Branch domains must be pairwise disjoint.
    """
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    if layout is None:
        layout = [
            ("affine", (0.0, 0.5), 2.0, 0.0),
            ("lorenz", (0.5, 1.0), 2.0, 1.0),
        ]
    branches = []
    for spec in layout:
        kind, (a, b) = spec[0], spec[1]
        if kind == "affine":
            branches.append(_affine_branch(a, b, spec[2], spec[3], tag="C1+Holder"))
        elif kind == "lorenz":
            branches.append(_lorenz_branch(a, b, spec[2], spec[3], gamma))
        else:
            raise ValueError(f"unknown branch kind {kind!r}")
    doms = sorted(b.domain for b in branches)
    for (a0, b0), (a1, b1) in zip(doms, doms[1:]):
        if a1 < b0 - 1e-15:
            raise ValueError("overlapping branch domains")
    inf_fp = min(b.expansion for b in branches)
    return MapSpec(
        1, branches, "lorenz", {"gamma": gamma}, {"inf_abs_fprime": inf_fp}
    )


# -- wild family -------------------------------------------------------------


def wild_slopes(alpha: float, zeta: float):
    return (
        alpha * (3.5 - 13.0 * zeta / 6.0),
        alpha * (3.5 - 5.0 * zeta / 6.0),
        alpha * (3.5 + 4.5 * zeta),
    )


def wild_piece_values(alpha: float, zeta: float, mode: str = "repaired"):
    """Values of 2^i * G_{alpha,zeta,i}(x) at the piece breakpoints
    u = 2^i x in {1/2, 11/16, 7/8, 1}; independent of i."""
    m1, m2, m3 = wild_slopes(alpha, zeta)
    v_half = alpha * 0.25
    v1_end = v_half + m1 * (11.0 / 16.0 - 0.5)
    if mode == "repaired":
        v2_start = v1_end  # continuity at u = 11/16
    elif mode == "verbatim":
        v2_start = alpha * (0.5 - 13.0 * zeta / 32.0)
    else:
        raise ValueError("mode must be 'repaired' or 'verbatim'")
    v2_end = v2_start + m2 * (7.0 / 8.0 - 11.0 / 16.0)
    v3_start = alpha * (25.0 - 9.0 * zeta) / 16.0
    v3_end = alpha * 2.0
    return (v_half, v1_end, v2_start, v2_end, v3_start, v3_end)


def wild_level_start(alpha: float) -> int:
    """Smallest i >= 0 with alpha * 2^(1-i) <= 1, so branch images fit in I."""
    i0 = 0
    while alpha * math.ldexp(1.0, 1 - i0) > 1.0 + 1e-15:
        i0 += 1
    return i0


def wild_family(
    alpha: float,
    zeta: float,
    k0: int,
    i_max: int = 40,
    mode: str = "repaired",
) -> MapSpec:
    """The infinite-branch family: k0 affine onto branches on [2^-i0, 1]
    plus the three-piece expanding branches G on every dyadic block
    L_i = [2^-(i+1), 2^-i), i0 <= i <= i_max.

    ``mode='verbatim'`` keeps the discontinuous middle-piece offset of the
    printed formulas; the default repairs it so G is continuous on L_i.
    Blocks below 2^-(i_max+1) are omitted; their total measure is reported
    in ``meta['truncation_mass']``.
    """
    if alpha <= 0 or not (0.0 <= zeta <= 1.0) or k0 < 1:
        raise ValueError("need alpha > 0, zeta in [0,1], k0 >= 1")
    i0 = wild_level_start(alpha)
    if i_max < i0:
        raise ValueError("i_max below the first admissible block")
    m1, m2, m3 = wild_slopes(alpha, zeta)
    vals = wild_piece_values(alpha, zeta, mode)
    branches = []
    w = (1.0 - math.ldexp(1.0, -i0)) / k0
    for j in range(k0):
        a = math.ldexp(1.0, -i0) + j * w
        branches.append(_affine_branch(a, a + w, 1.0 / w, -a / w, tag="affine_onto"))
    u_break = (0.5, 11.0 / 16.0, 7.0 / 8.0, 1.0)
    piece_slope = (m1, m2, m3)
    piece_left = (vals[0], vals[2], vals[4])
    for i in range(i0, i_max + 1):
        h = math.ldexp(1.0, -i)
        for pc in range(3):
            a, b = u_break[pc] * h, u_break[pc + 1] * h
            slope = piece_slope[pc]
            intercept = piece_left[pc] * h - slope * a
            br = _affine_branch(a, b, slope, intercept, tag="wild")
            branches.append(br)
    meta = {
        "i0": i0,
        "i_max": i_max,
        "mode": mode,
        "truncation_mass": math.ldexp(1.0, -(i_max + 1)),
        "min_G_slope": min(m1, m2, m3),
    }
    return MapSpec(
        1, branches, "wild_family",
        {"alpha": alpha, "zeta": zeta, "k0": k0}, meta,
    )


def wild_G(alpha: float, zeta: float, i: int, x, mode: str = "repaired"):
    """Evaluate G_{alpha,zeta,i} on L_i = [2^-(i+1), 2^-i)."""
    m1, m2, m3 = wild_slopes(alpha, zeta)
    vals = wild_piece_values(alpha, zeta, mode)
    h = math.ldexp(1.0, -i)
    u = np.asarray(x, dtype=float) / h
    out = np.where(
        u < 11.0 / 16.0,
        vals[0] + m1 * (u - 0.5),
        np.where(
            u < 7.0 / 8.0,
            vals[2] + m2 * (u - 11.0 / 16.0),
            vals[4] + m3 * (u - 7.0 / 8.0),
        ),
    )
    return out * h


# -- skew product conjugate to the wild dynamics near 0 ----------------------


def skew_g(x):
    """The three-piece degree-3 map of [1/2, 1) preserving Lebesgue."""
    x = np.asarray(x, dtype=float)
    return np.where(
        x < 11.0 / 16.0,
        8.0 * x / 3.0 - 5.0 / 6.0,
        np.where(x < 7.0 / 8.0, 8.0 * x / 3.0 - 4.0 / 3.0, 4.0 * x - 3.0),
    )


def skew_psi(x, convention: str = "conjugacy"):
    """Level increment of the skew product.

    ``convention='conjugacy'`` is the sign fixed by H o T = G o H (level
    +1 on the first piece, which maps each block one scale closer to 0);
    ``'printed'`` is the opposite sign that circulates in the formulas.
    """
    x = np.asarray(x, dtype=float)
    base = np.where(x < 11.0 / 16.0, 1.0, np.where(x < 7.0 / 8.0, 0.0, -1.0))
    if convention == "conjugacy":
        return base
    if convention == "printed":
        return -base
    raise ValueError("convention must be 'conjugacy' or 'printed'")


def skew_drift_exact(convention: str = "conjugacy") -> float:
    """int psi dm for normalized Lebesgue on [1/2,1]: pieces of normalized
    lengths 3/8, 3/8, 1/4 with values (+1, 0, -1) in the conjugacy sign."""
    d = 3.0 / 8.0 - 1.0 / 4.0
    return d if convention == "conjugacy" else -d


def skew_product_step(x: float, i: int, convention: str = "conjugacy"):
    """One step of T(x, i) = (g(x), i + psi(x)) on [1/2,1) x Z."""
    if not (0.5 <= x < 1.0):
        raise ValueError("x must lie in [1/2, 1)")
    return float(skew_g(x)), int(i + skew_psi(x, convention))


def conjugacy_check(n: int = 4096, i: int = 12, seed: int = 7):
    """Decide the psi sign by testing H(T(x,i)) == G_{1,1}(H(x,i)) with
    H(x, i) = 2^-i x on random samples.  Returns the passing convention
    and the max errors of both candidates."""
    rng = np.random.default_rng(seed)
    x = rng.uniform(0.5, 1.0, n)
    gx = skew_g(x)
    target = wild_G(1.0, 1.0, i, math.ldexp(1.0, -i) * x)
    errs = {}
    for conv in ("conjugacy", "printed"):
        lev = i + skew_psi(x, conv)
        ht = np.ldexp(gx, -lev.astype(int))
        errs[conv] = float(np.max(np.abs(ht - target)))
    passing = min(errs, key=errs.get)
    return {"passing": passing, "errors": errs}


# -- jacobians of low Besov regularity ---------------------------------------


def sinlog_potential(x):
    """sin(2 pi log2 x): bounded, wildly oscillating toward 0."""
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    pos = x > 0
    out[pos] = np.sin(2.0 * math.pi * np.log2(x[pos]))
    return out


def sinlog_positive_infima(K: int) -> np.ndarray:
    """Exact per-cell infima at level K of max(sin(2 pi log2 x), 0) on
    (0, 1/2], zero on (1/2, 1].

    On a cell where sin(2 pi log2 x) dips to or below zero the infimum of
    the positive part is 0; otherwise it is the smaller endpoint value
    (the interior minimum u = 3/4 mod 1 of the sine forces a zero first).
    """
    n = 1 << K
    edges = np.arange(n + 1) / n
    out = np.zeros(n)
    half = n >> 1
    lo = np.log2(np.maximum(edges[0:half], 1e-300))
    lo[0] = -1e9  # first cell touches 0: infinitely many oscillations
    hi = np.log2(edges[1 : half + 1])
    va = np.sin(2.0 * math.pi * lo)
    vb = np.sin(2.0 * math.pi * hi)
    inf_end = np.minimum(va, vb)
    # does [lo, hi] contain a point with sin(2 pi u) <= 0, i.e. u mod 1 in
    # [1/2, 1] (or 0)?  it does iff floor(hi) > floor(lo) (a period boundary
    # inside) or the fractional parts straddle [1/2, 1].
    frac_lo = lo - np.floor(lo)
    frac_hi = hi - np.floor(hi)
    crosses = (np.floor(hi) > np.floor(lo)) | (frac_hi >= 0.5) | (frac_lo >= 0.5)
    cell_inf = np.where(crosses | (inf_end <= 0.0), 0.0, inf_end)
    cell_inf[~np.isfinite(cell_inf)] = 0.0
    out[:half] = cell_inf
    return out


def besov_jacobian_family(
    thetas: Sequence[float],
    images: Sequence[Tuple[float, float]],
    alphas: Sequence = None,
    n_tab: int = 1 << 18,
) -> MapSpec:
    """Piecewise expanding map whose inverse branches are cumulative
    integrals h_r(x) = a_r + int_[c_r, x] (alpha_r + theta_r) dm.

    The branch domains I_r partition [0,1] with |I_r| = theta_r * |J_r|
    (J_r = images[r]); the potentials alpha_r are mean-subtracted on J_r
    and must satisfy |alpha_r|_inf < min(1-theta_r, theta_r).  Inverse
    branches are tabulated on n_tab points with monotone cubic
    interpolation; forward evaluation inverts them by bisection.

    ``alphas`` entries: None (affine), a callable, or ("sinlog", rel_amp)
    for rel_amp * theta_r * sin(2 pi log2 x).
    """
    thetas = [float(t) for t in thetas]
    images = [(float(c), float(d)) for c, d in images]
    if alphas is None:
        alphas = [None] * len(thetas)
    if not (len(thetas) == len(images) == len(alphas)):
        raise ValueError("thetas, images, alphas must have equal length")
    lengths = [t * (d - c) for t, (c, d) in zip(thetas, images)]
    if abs(sum(lengths) - 1.0) > 1e-9:
        raise ValueError("branch domain lengths must sum to 1")
    for t, (c, d) in zip(thetas, images):
        if not (0.0 < t < 1.0):
            raise ValueError("theta_r must lie in (0,1)")
        if not (0.0 <= c < d <= 1.0):
            raise ValueError("image intervals must sit inside [0,1]")

    branches = []
    a = 0.0
    for r, (theta, (c, d)) in enumerate(zip(thetas, images)):
        spec = alphas[r]
        b = a + lengths[r]
        if spec is None:
            branches.append(
                _affine_branch(a, b, 1.0 / theta, c - a / theta, tag="besov-jacobian")
            )
            a = b
            continue
        if isinstance(spec, tuple) and spec[0] == "sinlog":
            rel = float(spec[1])
            raw = lambda x, rel=rel, theta=theta: rel * theta * sinlog_potential(x)
        else:
            raw = spec
        xs = np.linspace(c, d, n_tab + 1)
        vals = np.asarray(raw(xs), dtype=float)
        # mean subtraction with the same trapezoid rule used for h, so the
        # endpoint h(d) = b lands exactly
        dx = (d - c) / n_tab
        seg = 0.5 * (vals[1:] + vals[:-1]) * dx
        mean = float(seg.sum()) / (d - c)
        vals = vals - mean
        gvals = vals + theta
        if float(gvals.min()) <= 0.0:
            raise ValueError("jacobian alpha_r + theta_r vanishes")
        if float(np.abs(vals).max()) >= min(1.0 - theta, theta):
            raise ValueError("|alpha_r|_inf >= min(1-theta, theta)")
        cum = np.concatenate(([0.0], np.cumsum(0.5 * (gvals[1:] + gvals[:-1]) * dx)))
        hvals = a + cum
        h = PchipInterpolator(xs, hvals, extrapolate=False)

        def inv(y, h=h, c=c, d=d):
            return np.clip(h(np.clip(y, c, d)), None, None)

        def jac(y, raw=raw, mean=mean, theta=theta):
            return np.asarray(raw(np.asarray(y, dtype=float))) - mean + theta

        def fwd(x, h=h, c=c, d=d):
            return _invert_monotone(lambda u: h(u), c, d, np.asarray(x, dtype=float))

        gmin = float(gvals.min())
        branches.append(
            Branch(
                domain=(a, b),
                image=(c, d),
                forward=fwd,
                inverse=inv,
                inv_jacobian=jac,
                monotone=1,
                tag="besov-jacobian",
                expansion=1.0 / float(gvals.max()),
            )
        )
        a = b
    return MapSpec(
        1,
        branches,
        "besov_jacobian",
        {"thetas": thetas, "images": images},
        {"n_tab": n_tab},
    )


def besov_jacobian_example(delta: float = 0.1) -> MapSpec:
    """Packaged three-branch instance with the oscillating potential."""
    thetas = [0.4, 0.8, 0.85]
    images = [(1.0 / 16, 0.5), (0.25, 0.75), (0.5, 1.0)]
    alphas = [("sinlog", delta), ("sinlog", delta), ("sinlog", delta)]
    return besov_jacobian_family(thetas, images, alphas)


# -- 2D: the winky face ------------------------------------------------------


def winky_face(k0: int, targets: Dict[Tuple[int, int], Tuple] = None) -> MapSpec:
    """Affine bijections from the level-k0 squares onto larger rectangles.

    ``targets`` maps a source index (ix, iy) to a rectangle
    (x0, x1, y0, y1); every target must be strictly wider than the source
    square on both axes (metric expansion).  The packaged default sends
    (ix, iy) to a sheared level-(k0-1) square and two distinguished cells
    onto the whole square, so the invariant density is not constant.
    """
    if k0 < 1:
        raise ValueError("k0 must be >= 1")
    n = 1 << k0
    side = 1.0 / n
    if targets is None:
        m = 1 << (k0 - 1)
        tside = 1.0 / m
        targets = {}
        for ix in range(n):
            for iy in range(n):
                tx = (ix + (iy % 2)) % m
                ty = iy % m
                targets[(ix, iy)] = (
                    tx * tside, (tx + 1) * tside, ty * tside, (ty + 1) * tside,
                )
        targets[(0, 0)] = (0.0, 1.0, 0.0, 1.0)
        targets[(1, 0)] = (0.0, 1.0, 0.0, 1.0)
    branches = []
    for (ix, iy), rect in sorted(targets.items()):
        x0, x1, y0, y1 = (float(v) for v in rect)
        if not (0.0 <= x0 < x1 <= 1.0 and 0.0 <= y0 < y1 <= 1.0):
            raise ValueError(f"target {rect} outside the unit square")
        if x1 - x0 <= side + 1e-15 or y1 - y0 <= side + 1e-15:
            raise ValueError(f"non-expanding branch at {(ix, iy)}")
        dom = (ix * side, (ix + 1) * side, iy * side, (iy + 1) * side)
        branches.append(Branch2D(domain=dom, image=(x0, x1, y0, y1)))
    return MapSpec(2, branches, "winky_face", {"k0": k0})


# ---------------------------------------------------------------------------
# Generic evaluation and dynamical partitions
# ---------------------------------------------------------------------------


def sorted_branches(m: MapSpec) -> List[Branch]:
    return sorted(m.branches, key=lambda b: b.domain[0])


def apply_forward(m: MapSpec, x):
    """Evaluate the 1D map at points x (NaN where no branch is defined)."""
    if m.dim != 1:
        raise ValueError("apply_forward is 1D only")
    x = np.asarray(x, dtype=float)
    out = np.full(x.shape, np.nan)
    for b in m.branches:
        a, bb = b.domain
        mask = (x >= a) & (x < bb)
        if mask.any():
            out[mask] = b.forward(x[mask])
    return out


def partition_levels(m: MapSpec, depth: int, tol: float = 1e-9):
    """Dynamical partitions of a Markov map for levels 0..depth.

    Returns a list of (n, 2) arrays of cell endpoints.  Level 1 is the
    branch-domain partition; a level-(k+1) cell is h_i(Q) for a level-k
    cell Q contained in the image of branch i.  Raises if mass is lost in
    a refinement step (the map is not Markov for its branch partition).
    """
    if m.dim != 1:
        raise ValueError("1D maps only")
    parts = [np.array([[0.0, 1.0]])]
    if depth == 0:
        return parts
    doms = np.array(sorted(b.domain for b in m.branches))
    parts.append(doms)
    dom_total = float(np.sum(doms[:, 1] - doms[:, 0]))
    for _ in range(1, depth):
        prev = parts[-1]
        segs = []
        for br in m.branches:
            c, d = br.image
            mask = (prev[:, 0] >= c - tol) & (prev[:, 1] <= d + tol)
            if not mask.any():
                continue
            a = np.clip(prev[mask, 0], c, d)
            b = np.clip(prev[mask, 1], c, d)
            u, v = br.inverse(a), br.inverse(b)
            if br.monotone < 0:
                u, v = v, u
            segs.append(np.stack([u, v], axis=1))
        if not segs:
            raise ValueError("map is not Markov: no refinable cells")
        nxt = np.concatenate(segs)
        new_total = float(np.sum(nxt[:, 1] - nxt[:, 0]))
        if abs(new_total - dom_total) > 1e-6 * max(dom_total, 1.0):
            raise ValueError("map is not Markov: images do not align with cells")
        parts.append(nxt[np.argsort(nxt[:, 0])])
    return parts


def dynamical_partition(m: MapSpec, j: int, tol: float = 1e-9):
    """Level-j dynamical partition as a sorted (n, 2) endpoint array."""
    return partition_levels(m, j, tol)[j]


def monotone_piece_count(m: MapSpec, j: int, tol: float = 1e-12) -> int:
    """Number of monotonicity intervals of the j-th iterate of a 1D map."""
    if m.dim != 1:
        raise ValueError("1D maps only")
    pieces = [b.domain for b in sorted_branches(m)]
    bounds = sorted({b.domain[0] for b in m.branches} | {b.domain[1] for b in m.branches})

    def fj(x, steps):
        y = x
        for _ in range(steps):
            y = float(apply_forward(m, np.array([y]))[0])
            if math.isnan(y):
                return y
        return y

    for step in range(1, j):
        nxt = []
        for (a, b) in pieces:
            eps = (b - a) * 1e-9
            ya, yb = fj(a + eps, step), fj(b - eps, step)
            if math.isnan(ya) or math.isnan(yb):
                continue
            lo, hi = min(ya, yb), max(ya, yb)
            cuts = [c for c in bounds if lo + tol < c < hi - tol]
            xs = [a]
            for c in cuts:
                # monotone bisection for x with f^step(x) = c
                u, v = a + eps, b - eps
                increasing = ya < yb
                for _ in range(60):
                    mid = 0.5 * (u + v)
                    if (fj(mid, step) < c) == increasing:
                        u = mid
                    else:
                        v = mid
                xs.append(0.5 * (u + v))
            xs.append(b)
            xs.sort()
            nxt.extend((u, v) for u, v in zip(xs, xs[1:]) if v - u > tol)
        pieces = nxt
    return len(pieces)


def validate_map(m: MapSpec, n_samples: int = 1000, seed: int = 0) -> dict:
    """Check the branch invariants on random samples; returns the observed
    worst errors (raises nothing, callers assert)."""
    rng = np.random.default_rng(seed)
    rep = {"roundtrip": 0.0, "jacobian_mass": 0.0, "expansion_violation": 0.0}
    if m.dim == 2:
        for b in m.branches:
            x = rng.uniform(b.domain[0], b.domain[1], n_samples)
            y = rng.uniform(b.domain[2], b.domain[3], n_samples)
            u, v = b.forward(x, y)
            xr, yr = b.inverse(u, v)
            rep["roundtrip"] = max(
                rep["roundtrip"], float(np.max(np.abs(xr - x) + np.abs(yr - y)))
            )
            area_dom = (b.domain[1] - b.domain[0]) * (b.domain[3] - b.domain[2])
            area_img = (b.image[1] - b.image[0]) * (b.image[3] - b.image[2])
            rep["jacobian_mass"] = max(
                rep["jacobian_mass"],
                abs(b.inv_jacobian_const * area_img - area_dom),
            )
        return rep
    for b in m.branches:
        c, d = b.image
        y = rng.uniform(c, d, n_samples)
        x = b.inverse(y)
        err = float(np.max(np.abs(b.forward(x) - y)))
        rep["roundtrip"] = max(rep["roundtrip"], err)
        # jacobian consistency: int_image g = |domain|
        nodes, weights = np.polynomial.legendre.leggauss(48)
        xs = 0.5 * (d - c) * nodes + 0.5 * (c + d)
        mass = 0.5 * (d - c) * float(weights @ b.inv_jacobian(xs))
        rep["jacobian_mass"] = max(rep["jacobian_mass"], abs(mass - b.domain_measure))
        a, bb = b.domain
        u = rng.uniform(a, bb, n_samples)
        v = rng.uniform(a, bb, n_samples)
        keep = np.abs(u - v) > 1e-12
        u, v = u[keep], v[keep]
        ratio = np.abs(b.forward(u) - b.forward(v)) / np.abs(u - v)
        rep["expansion_violation"] = max(
            rep["expansion_violation"],
            float(np.max(b.expansion * (1 - 1e-9) - ratio, initial=0.0)),
        )
    return rep
