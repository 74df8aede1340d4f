"""Dyadic grids on [0,1] and [0,1]^2: cell addressing, refinement, regions.

Cells are half-open boxes ``[i/2^k, (i+1)/2^k)`` per axis, so the cells of
one level tile the unit cube exactly and every dyadic rational belongs to
the cell on its right/upper side.  Levels are capped at 30 per axis so all
cell coordinates and measures stay exact in double precision.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

MAX_LEVEL = 30

# classification codes used by Region.classify / cover
INSIDE = 1
PARTIAL = 0
OUTSIDE = -1


@dataclass(frozen=True)
class GridCell:
    """Address of one dyadic cell: dimension, level and per-axis index."""

    dim: int
    level: int
    index: tuple

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ValueError(f"dim must be 1 or 2, got {self.dim}")
        if not (0 <= self.level <= MAX_LEVEL):
            raise ValueError(f"level must be in [0, {MAX_LEVEL}], got {self.level}")
        idx = tuple(int(i) for i in self.index)
        object.__setattr__(self, "index", idx)
        if len(idx) != self.dim:
            raise ValueError("index length must equal dim")
        top = 1 << self.level
        if any(i < 0 or i >= top for i in idx):
            raise ValueError(f"index {idx} out of range at level {self.level}")

    @property
    def measure(self) -> float:
        """Lebesgue measure 2^(-level*dim), exact."""
        return math.ldexp(1.0, -self.level * self.dim)

    @property
    def side(self) -> float:
        return math.ldexp(1.0, -self.level)

    def bounds(self):
        """Per-axis (lo, hi) of the half-open box."""
        h = self.side
        return tuple((i * h, (i + 1) * h) for i in self.index)

    def children(self):
        lv = self.level + 1
        if lv > MAX_LEVEL:
            raise ValueError("refinement beyond MAX_LEVEL")
        if self.dim == 1:
            (i,) = self.index
            return [GridCell(1, lv, (2 * i,)), GridCell(1, lv, (2 * i + 1,))]
        ix, iy = self.index
        return [
            GridCell(2, lv, (2 * ix + dx, 2 * iy + dy))
            for dy in (0, 1)
            for dx in (0, 1)
        ]

    def parent(self):
        if self.level == 0:
            raise ValueError("root cell has no parent")
        return GridCell(self.dim, self.level - 1, tuple(i // 2 for i in self.index))

    def contains(self, point) -> bool:
        pt = _as_point(point, self.dim)
        return all(lo <= x < hi for x, (lo, hi) in zip(pt, self.bounds()))


def children(cell: GridCell):
    """The 2^dim cells of the next level tiling ``cell``."""
    return cell.children()


def _as_point(point, dim):
    if dim == 1:
        if isinstance(point, (tuple, list)):
            (x,) = point
            return (float(x),)
        return (float(point),)
    x, y = point
    return (float(x), float(y))


def locate(point, level: int, dim: int = None) -> GridCell:
    """The unique level-``level`` cell containing ``point`` in [0,1)^dim."""
    if dim is None:
        dim = 1 if not isinstance(point, (tuple, list)) else len(point)
    pt = _as_point(point, dim)
    if any(x < 0.0 or x >= 1.0 for x in pt):
        raise ValueError(f"point {pt} outside [0,1)^{dim}")
    n = 1 << level
    idx = tuple(min(int(x * n), n - 1) for x in pt)
    return GridCell(dim, level, idx)


# ---------------------------------------------------------------------------
# Regions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Region:
    """A finite union of half-open intervals (dim 1), a finite union of
    axis-aligned rectangles, or a convex polygon (dim 2), inside [0,1]^dim.

    Interval and rectangle components must be pairwise disjoint (up to
    measure zero); the polygon must be convex.  These cases are exactly the
    shapes needed for the regular-domain experiments: dyadic/linear regions
    and isometric images of rectangles.
    """

    dim: int
    kind: str  # "intervals" | "rects" | "polygon"
    data: tuple

    # -- constructors -------------------------------------------------------

    @staticmethod
    def intervals(parts: Iterable[Sequence[float]]) -> "Region":
        ps = tuple(sorted((float(a), float(b)) for a, b in parts))
        if not ps:
            raise ValueError("empty region")
        for a, b in ps:
            if not (0.0 <= a < b <= 1.0):
                raise ValueError(f"bad interval [{a}, {b})")
        for (a0, b0), (a1, b1) in zip(ps, ps[1:]):
            if a1 < b0 - 1e-15:
                raise ValueError("interval components overlap")
        return Region(1, "intervals", ps)

    @staticmethod
    def rects(parts: Iterable[Sequence[float]]) -> "Region":
        """parts: iterable of (x0, x1, y0, y1)."""
        ps = tuple(tuple(float(v) for v in r) for r in parts)
        if not ps:
            raise ValueError("empty region")
        for x0, x1, y0, y1 in ps:
            if not (0.0 <= x0 < x1 <= 1.0 and 0.0 <= y0 < y1 <= 1.0):
                raise ValueError(f"bad rectangle {(x0, x1, y0, y1)}")
        for i, r in enumerate(ps):
            for r2 in ps[i + 1 :]:
                ox = min(r[1], r2[1]) - max(r[0], r2[0])
                oy = min(r[3], r2[3]) - max(r[2], r2[2])
                if ox > 1e-15 and oy > 1e-15:
                    raise ValueError("rectangle components overlap")
        return Region(2, "rects", ps)

    @staticmethod
    def polygon(vertices: Iterable[Sequence[float]]) -> "Region":
        vs = [(float(x), float(y)) for x, y in vertices]
        if len(vs) < 3:
            raise ValueError("polygon needs at least 3 vertices")
        if _signed_area(vs) < 0:
            vs = vs[::-1]
        n = len(vs)
        for i in range(n):
            ax, ay = vs[i]
            bx, by = vs[(i + 1) % n]
            cx, cy = vs[(i + 2) % n]
            if (bx - ax) * (cy - ay) - (by - ay) * (cx - ax) < -1e-14:
                raise ValueError("polygon must be convex")
        for x, y in vs:
            if not (0.0 <= x <= 1.0 and 0.0 <= y <= 1.0):
                raise ValueError("polygon vertex outside [0,1]^2")
        if _signed_area(vs) <= 0:
            raise ValueError("degenerate polygon")
        return Region(2, "polygon", tuple(vs))

    # -- geometry -----------------------------------------------------------

    @property
    def measure(self) -> float:
        if self.kind == "intervals":
            return sum(b - a for a, b in self.data)
        if self.kind == "rects":
            return sum((x1 - x0) * (y1 - y0) for x0, x1, y0, y1 in self.data)
        return _signed_area(list(self.data))

    def overlap(self, cell: GridCell) -> float:
        """Measure of ``cell`` ∩ region (exact for intervals/rects)."""
        if self.kind == "intervals":
            (lo, hi), = cell.bounds()
            return sum(max(0.0, min(hi, b) - max(lo, a)) for a, b in self.data)
        if self.kind == "rects":
            (x0, x1), (y0, y1) = cell.bounds()
            tot = 0.0
            for a0, a1, b0, b1 in self.data:
                ox = max(0.0, min(x1, a1) - max(x0, a0))
                oy = max(0.0, min(y1, b1) - max(y0, b0))
                tot += ox * oy
            return tot
        raise NotImplementedError("exact overlap only for intervals/rects")

    def classify(self, cell: GridCell) -> int:
        """INSIDE if the cell is contained in the region, OUTSIDE if they are
        disjoint (both up to measure zero), PARTIAL otherwise."""
        if self.kind in ("intervals", "rects"):
            ov = self.overlap(cell)
            m = cell.measure
            if ov >= m * (1.0 - 1e-12):
                return INSIDE
            if ov <= m * 1e-12:
                return OUTSIDE
            return PARTIAL
        return self._classify_polygon(cell)

    def _classify_polygon(self, cell: GridCell) -> int:
        vs = self.data
        (x0, x1), (y0, y1) = cell.bounds()
        corners = [(x0, y0), (x1, y0), (x1, y1), (x0, y1)]
        ins = [_point_in_convex(vs, c) for c in corners]
        if all(ins):
            return INSIDE
        if any(ins):
            return PARTIAL
        # no cell corner inside: partial iff a vertex is inside the cell or
        # an edge crosses it; centre sampling backs up degenerate contacts
        for vx, vy in vs:
            if x0 <= vx < x1 and y0 <= vy < y1:
                return PARTIAL
        n = len(vs)
        for i in range(n):
            if _segment_hits_rect(vs[i], vs[(i + 1) % n], x0, x1, y0, y1):
                return PARTIAL
        if _point_in_convex(vs, ((x0 + x1) / 2, (y0 + y1) / 2)):
            return PARTIAL
        return OUTSIDE

    def bounding_cell(self) -> GridCell:
        """Smallest dyadic cell containing the region."""
        if self.kind == "intervals":
            lo = min(a for a, _ in self.data)
            hi = max(b for _, b in self.data)
            box = ((lo, hi),)
        elif self.kind == "rects":
            box = (
                (min(r[0] for r in self.data), max(r[1] for r in self.data)),
                (min(r[2] for r in self.data), max(r[3] for r in self.data)),
            )
        else:
            xs = [v[0] for v in self.data]
            ys = [v[1] for v in self.data]
            box = ((min(xs), max(xs)), (min(ys), max(ys)))
        cell = GridCell(self.dim, 0, (0,) * self.dim)
        while cell.level < MAX_LEVEL:
            inside = [
                ch
                for ch in cell.children()
                if all(
                    lo >= clo and hi <= chi
                    for (lo, hi), (clo, chi) in zip(box, _closed_bounds(ch))
                )
            ]
            if len(inside) != 1:
                return cell
            cell = inside[0]
        return cell


def _closed_bounds(cell):
    # the closure of the cell; right endpoints of the unit box stay included
    return cell.bounds()


def _signed_area(vs) -> float:
    s = 0.0
    n = len(vs)
    for i in range(n):
        x0, y0 = vs[i]
        x1, y1 = vs[(i + 1) % n]
        s += x0 * y1 - x1 * y0
    return 0.5 * s


def _point_in_convex(vs, p, tol=1e-14) -> bool:
    x, y = p
    n = len(vs)
    for i in range(n):
        ax, ay = vs[i]
        bx, by = vs[(i + 1) % n]
        if (bx - ax) * (y - ay) - (by - ay) * (x - ax) < -tol:
            return False
    return True


def _segment_hits_rect(p, q, x0, x1, y0, y1) -> bool:
    px, py = p
    qx, qy = q
    if max(px, qx) < x0 or min(px, qx) > x1 or max(py, qy) < y0 or min(py, qy) > y1:
        return False
    # clip the segment against the slab in x then y (Liang-Barsky)
    t0, t1 = 0.0, 1.0
    dx, dy = qx - px, qy - py
    for lo, hi, o, d in ((x0, x1, px, dx), (y0, y1, py, dy)):
        if d == 0.0:
            if o < lo or o > hi:
                return False
        else:
            ta, tb = (lo - o) / d, (hi - o) / d
            if ta > tb:
                ta, tb = tb, ta
            t0, t1 = max(t0, ta), min(t1, tb)
            if t0 > t1:
                return False
    return True


def cover(region: Region, level: int):
    """Split the level-``level`` cells meeting ``region`` into (inner, boundary).

    Inner cells lie fully inside the region, boundary cells meet it
    partially; together they cover the region.  The search descends the
    grid tree, so only cells near the region boundary cost work.
    """
    inner, boundary = [], []

    def expand(cell):
        # every descendant at the target level
        stack = [cell]
        while stack:
            c = stack.pop()
            if c.level == level:
                inner.append(c)
            else:
                stack.extend(c.children())

    def walk(cell):
        cls = region.classify(cell)
        if cls == OUTSIDE:
            return
        if cls == INSIDE:
            expand(cell)
            return
        if cell.level == level:
            boundary.append(cell)
            return
        for ch in cell.children():
            walk(ch)

    walk(GridCell(region.dim, 0, (0,) * region.dim))
    key = lambda c: c.index
    return sorted(inner, key=key), sorted(boundary, key=key)
