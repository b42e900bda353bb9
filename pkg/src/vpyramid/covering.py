"""Square coverings: greedy rectangles, q/u/r triangle splitting, dyadic Vitali coverings."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import product

import numpy as np
import shapely
from scipy.interpolate import CubicHermiteSpline
from shapely.geometry import Polygon, box

from .geometry import Number, PreconditionError, as_exact, format_scalar, parse_scalar


@dataclass(frozen=True)
class PlacedSquare:
    center: tuple[Number, Number]
    side: Number
    rotation: int = 0
    tag: str = ""
    level: int = 0

    @property
    def bounds(self) -> tuple[Number, Number, Number, Number]:
        h = self.side / 2
        cx, cy = self.center
        return cx - h, cy - h, cx + h, cy + h

    def corners(self) -> list[tuple[Number, Number]]:
        x0, y0, x1, y1 = self.bounds
        return [(x0, y0), (x1, y0), (x1, y1), (x0, y1)]

    def shape(self):
        return box(*(float(v) for v in self.bounds))

    def to_dict(self) -> dict:
        return {"center": [format_scalar(self.center[0]), format_scalar(self.center[1])],
                "side": format_scalar(self.side), "rotation": self.rotation,
                "tag": self.tag, "level": self.level}

    @classmethod
    def from_dict(cls, d: dict) -> "PlacedSquare":
        return cls((_num(d["center"][0]), _num(d["center"][1])), _num(d["side"]),
                   int(d.get("rotation", 0)), d.get("tag", ""), int(d.get("level", 0)))


def _num(text):
    if isinstance(text, str) and ("e" in text.lower() or "." in text) and "/" not in text:
        return float(text)
    return parse_scalar(text)


@dataclass
class Covering:
    squares: list[PlacedSquare]
    domain: list = field(default_factory=list)   # list of polygons (vertex lists)
    complete: bool = True
    kind: str = ""
    pending: list = field(default_factory=list)  # uncovered pieces, for tail bounds

    def __len__(self) -> int:
        return len(self.squares)

    def sum_of_sides(self) -> Number:
        return sum((s.side for s in self.squares), start=Fraction(0) if self._exact() else 0.0)

    def total_area(self) -> Number:
        return sum((s.side * s.side for s in self.squares), start=Fraction(0) if self._exact() else 0.0)

    def _exact(self) -> bool:
        return all(not isinstance(s.side, float) for s in self.squares)

    def region(self):
        return shapely.union_all([Polygon([(float(x), float(y)) for x, y in p]) for p in self.domain])

    def domain_area(self) -> float:
        return float(self.region().area)

    def residual_area(self) -> float:
        return self.domain_area() - float(self.total_area())

    def counts_by_level(self) -> dict[int, int]:
        out: dict[int, int] = {}
        for s in self.squares:
            out[s.level] = out.get(s.level, 0) + 1
        return dict(sorted(out.items()))

    def to_json(self) -> str:
        return json.dumps({
            "kind": self.kind,
            "complete": self.complete,
            "domain": [[[format_scalar(x), format_scalar(y)] for x, y in p] for p in self.domain],
            "squares": [s.to_dict() for s in self.squares],
        }, indent=1)

    @classmethod
    def from_json(cls, text: str) -> "Covering":
        d = json.loads(text)
        return cls([PlacedSquare.from_dict(s) for s in d["squares"]],
                   [[(_num(x), _num(y)) for x, y in p] for p in d["domain"]],
                   d.get("complete", True), d.get("kind", ""))


def _rect_polygon(x0, y0, x1, y1):
    return [(x0, y0), (x1, y0), (x1, y1), (x0, y1)]


# ---------------------------------------------------------------------------
# rectangles


def rectangle_covering(a: Number, b: Number, max_squares: int = 10 ** 6,
                       origin: tuple[Number, Number] = (0, 0)) -> Covering:
    """Greedy covering of (0, a) x (0, b): repeatedly the largest square at the lowest corner.

    Sides are exact (floats are converted exactly). The covering is finite when a/b is
    rational; otherwise it stops after ``max_squares`` with ``complete=False``.
    """
    a, b = as_exact(a), as_exact(b)
    if a <= 0 or b <= 0:
        raise ValueError("rectangle sides must be positive")
    ox, oy = as_exact(origin[0]), as_exact(origin[1])
    x, y, w, h = ox, oy, a, b
    squares: list[PlacedSquare] = []
    step = 0
    while w > 0 and h > 0 and len(squares) < max_squares:
        s = min(w, h)
        q = int(max(w, h) // s)
        q = min(q, max_squares - len(squares))
        for j in range(q):
            if w >= h:
                c = (x + j * s + s / 2, y + s / 2)
            else:
                c = (x + s / 2, y + j * s + s / 2)
            squares.append(PlacedSquare(c, s, 0, f"rectangle:{step}", step))
        if w >= h:
            x, w = x + q * s, w - q * s
        else:
            y, h = y + q * s, h - q * s
        step += 1
    complete = w == 0 or h == 0
    pending = [] if complete else [{"type": "rectangle", "w": w, "h": h}]
    return Covering(squares, [_rect_polygon(ox, oy, ox + a, oy + b)], complete, "rectangle", pending)


# ---------------------------------------------------------------------------
# triangular domains


class LinearProfile:
    """h(t) = intercept + slope * t with slope < 0."""

    def __init__(self, slope: Number, intercept: Number):
        self.slope = as_exact(slope) if not isinstance(slope, float) else slope
        self.intercept = as_exact(intercept) if not isinstance(intercept, float) else intercept
        if self.slope >= 0:
            raise ValueError("h must be strictly decreasing")

    def __call__(self, t):
        return self.intercept + self.slope * t

    def derivative(self, t):
        return self.slope + 0 * t

    def slope_range(self, a, b) -> tuple[Number, Number]:
        return self.slope, self.slope

    def integral(self, a, b):
        return self.intercept * (b - a) + self.slope * (b * b - a * a) / 2

    def to_dict(self) -> dict:
        return {"type": "linear", "slope": format_scalar(self.slope), "intercept": format_scalar(self.intercept)}


class SplineProfile:
    """C^1 cubic Hermite h from knot/value/derivative triples; must be strictly decreasing."""

    def __init__(self, knots, values, derivatives):
        self.knots = [float(k) for k in knots]
        self.values = [float(v) for v in values]
        self.derivs = [float(d) for d in derivatives]
        self._s = CubicHermiteSpline(self.knots, self.values, self.derivs)
        self._ds = self._s.derivative()
        lo, hi = self.slope_range(self.knots[0], self.knots[-1])
        if hi >= 0:
            raise ValueError("h must be strictly decreasing (h' < 0 on the whole interval)")

    def __call__(self, t):
        return float(self._s(t)) if np.isscalar(t) else self._s(t)

    def derivative(self, t):
        return float(self._ds(t)) if np.isscalar(t) else self._ds(t)

    def slope_range(self, a, b) -> tuple[float, float]:
        a, b = float(a), float(b)
        crit = [a, b] + [k for k in self.knots if a < k < b]
        crit += [r for r in np.atleast_1d(self._ds.derivative().roots(extrapolate=False)) if a < r < b]
        vals = self._ds(np.array(crit))
        return float(vals.min()), float(vals.max())

    def integral(self, a, b):
        return float(self._s.integrate(float(a), float(b)))

    def to_dict(self) -> dict:
        return {"type": "spline", "knots": self.knots, "values": self.values, "derivatives": self.derivs}


def profile_from_dict(d: dict):
    kind = d.get("type")
    if kind == "linear":
        return LinearProfile(_num(d["slope"]), _num(d["intercept"]))
    if kind == "spline":
        return SplineProfile([_num(x) for x in d["knots"]], [_num(x) for x in d["values"]],
                             [_num(x) for x in d["derivatives"]])
    raise ValueError(f"unknown h descriptor type {kind!r}")


@dataclass(frozen=True)
class TriangularDomain:
    """{a <= s <= b, h(b) <= t <= h(s)} for a strictly decreasing C^1 function h."""

    a: Number
    b: Number
    h: object

    def __post_init__(self):
        if not self.a < self.b:
            raise ValueError("need a < b")

    @property
    def c1(self):
        return -self.h.slope_range(self.a, self.b)[0]

    @property
    def c2(self):
        return -self.h.slope_range(self.a, self.b)[1]

    @property
    def base(self):
        return self.b - self.a

    @property
    def height(self):
        return self.h(self.a) - self.h(self.b)

    def area(self):
        return self.h.integral(self.a, self.b) - self.h(self.b) * (self.b - self.a)

    def polygon(self, samples: int = 256) -> list[tuple[float, float]]:
        if isinstance(self.h, LinearProfile):
            return [(self.a, self.h(self.b)), (self.b, self.h(self.b)), (self.a, self.h(self.a))]
        ts = np.linspace(float(self.a), float(self.b), samples + 1)
        top = [(float(t), float(self.h(t))) for t in ts[::-1]]
        return [(float(self.a), float(self.h(self.b)))] + top[:-1] + [top[-1]]

    def contains(self, pts, tol: float = 1e-9) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        s, t = pts[:, 0], pts[:, 1]
        ok = (s >= float(self.a) - tol) & (s <= float(self.b) + tol) & (t >= float(self.h(self.b)) - tol)
        return ok & (t <= np.asarray(self.h(np.clip(s, float(self.a), float(self.b))), dtype=float) + tol)


def split_point(T: TriangularDomain, tol: float = 1e-12):
    """The x with h(x) = x + h(b) - a: closed form for linear h, bisection otherwise."""
    a, b, h = T.a, T.b, T.h
    hb = h(b)
    f = lambda x: h(x) - (x + hb - a)
    if isinstance(h, LinearProfile):
        if not (f(a) > 0 and f(b) < 0):
            raise ValueError("malformed triangle")
        return (h.intercept - hb + a) / (1 - h.slope)
    lo, hi = float(a), float(b)
    flo, fhi = f(lo), f(hi)
    if not (flo > 0 and fhi < 0):
        raise ValueError("malformed triangle")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if f(mid) > 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def triangle_split(T: TriangularDomain):
    """(q, u, r): the square on the base at the left, the triangle above it, the one to its right.

    q is returned as (x0, y0, side).
    """
    x1 = split_point(T)
    hb = T.h(T.b)
    q = (T.a, hb, x1 - T.a)
    u = TriangularDomain(T.a, x1, T.h)
    r = TriangularDomain(x1, T.b, T.h)
    return q, u, r


@dataclass(frozen=True)
class Placement:
    """Rotation by a multiple of 90 degrees about the origin, then translation."""

    rotation: int = 0
    translation: tuple[Number, Number] = (0, 0)

    def __post_init__(self):
        if self.rotation % 90:
            raise ValueError("rotation must be a multiple of 90 degrees")

    def matrix(self) -> np.ndarray:
        q = (self.rotation // 90) % 4
        c, s = [(1, 0), (0, 1), (-1, 0), (0, -1)][q]
        return np.array([[c, -s], [s, c]], dtype=np.int64)

    def apply(self, p):
        m = self.matrix()
        x, y = p
        return (m[0, 0] * x + m[0, 1] * y + self.translation[0],
                m[1, 0] * x + m[1, 1] * y + self.translation[1])


def triangle_covering(T: TriangularDomain, m_max: int, placement: Placement | None = None) -> Covering:
    """q(sigma(T)) for all words sigma in {u, r}^m, m <= m_max, in lexicographic order per step."""
    placement = placement or Placement()
    squares: list[PlacedSquare] = []
    level = [("", T)]
    for m in range(m_max + 1):
        nxt = []
        for word, tri in sorted(level, key=lambda wt: wt[0]):
            (x0, y0, s), u, r = triangle_split(tri)
            c = placement.apply((x0 + s / 2, y0 + s / 2))
            squares.append(PlacedSquare(c, s, placement.rotation % 360, f"triangle:{word or '-'}", m))
            nxt += [("u" + word, u), ("r" + word, r)]
        level = nxt
    poly = [placement.apply(p) for p in T.polygon()]
    return Covering(squares, [poly], False, "triangle", [{"type": "triangle", "domain": T, "m_max": m_max}])


def alpha_compatible(T: TriangularDomain, alpha: float) -> tuple[bool, float, float]:
    """(2 max(r_B, r_H)^(alpha+1) < 1, r_B, r_H)."""
    c1, c2 = T.c1, T.c2
    r_b = 1 / (1 + 1 / c1)
    r_h = 1 / (1 + c2)
    ratio = max(r_b, r_h)
    if isinstance(ratio, Fraction) and float(alpha).is_integer():
        ok = 2 * ratio ** (int(alpha) + 1) < 1
    else:
        ok = 2 * float(ratio) ** (float(alpha) + 1) < 1
    return ok, r_b, r_h


def alpha_threshold(T: TriangularDomain) -> float:
    """Smallest alpha for which T is alpha-compatible (the test is strict above it)."""
    _, r_b, r_h = alpha_compatible(T, 1.0)
    r = float(max(r_b, r_h))
    return math.log(2) / math.log(1 / r) - 1


def covering_ratio(T: TriangularDomain, alpha: float) -> float:
    _, r_b, r_h = alpha_compatible(T, alpha)
    return 2 * float(max(r_b, r_h)) ** (alpha + 1)


# ---------------------------------------------------------------------------
# dyadic Vitali covering


def vitali_dyadic_covering(polygon, n_max: int) -> Covering:
    """Dyadic squares selected level by level inside a polygon.

    At level n the grid has side 2^-(n+1) (diagonal below eps_n = 2^-n). A candidate
    square not met by earlier selections is selected when its centre c satisfies
    d(c, boundary) > eps_n - half diagonal: such squares lie inside the domain and every
    square meeting {d > eps_n} qualifies. Unselected candidates meeting the domain are
    refined.
    """
    verts = [(as_exact(x), as_exact(y)) for x, y in polygon]
    poly = Polygon([(float(x), float(y)) for x, y in verts])
    if not poly.is_valid or poly.area <= 0:
        raise ValueError("domain must be a simple polygon with positive area")
    boundary = poly.exterior
    minx, miny, maxx, maxy = poly.bounds
    squares: list[PlacedSquare] = []
    s0 = Fraction(1, 2)
    i0, i1 = math.floor(minx / s0), math.ceil(maxx / s0)
    j0, j1 = math.floor(miny / s0), math.ceil(maxy / s0)
    ii, jj = np.meshgrid(np.arange(i0, i1), np.arange(j0, j1), indexing="ij")
    cand = np.stack([ii.ravel(), jj.ravel()], axis=1).astype(np.int64)
    for n in range(n_max + 1):
        s = Fraction(1, 2 ** (n + 1))
        fs = float(s)
        x0 = cand[:, 0] * fs
        y0 = cand[:, 1] * fs
        boxes = shapely.box(x0, y0, x0 + fs, y0 + fs)
        meets = shapely.intersects(boxes, poly) & (shapely.area(shapely.intersection(boxes, poly)) > 0)
        cand = cand[meets]
        x0, y0 = cand[:, 0] * fs, cand[:, 1] * fs
        centres = shapely.points(x0 + fs / 2, y0 + fs / 2)
        inside = shapely.contains(poly, centres)
        dist = shapely.distance(centres, boundary)
        eps = 2.0 ** -n
        sel = inside & (dist > eps - fs * math.sqrt(2) / 2)
        for i, j in cand[sel]:
            c = ((int(i) * 2 + 1) * s / 2, (int(j) * 2 + 1) * s / 2)
            squares.append(PlacedSquare(c, s, 0, f"vitali:{n}", n))
        rest = cand[~sel]
        cand = np.concatenate([2 * rest + np.array(d) for d in product((0, 1), repeat=2)]) \
            if len(rest) else rest
    return Covering(squares, [verts], False, "vitali")


# ---------------------------------------------------------------------------
# compatible domains and domain specs


@dataclass
class TrianglePiece:
    domain: TriangularDomain
    placement: Placement = field(default_factory=Placement)

    def polygon(self):
        return [self.placement.apply(p) for p in self.domain.polygon()]


@dataclass
class CompatibleDomain:
    rectangles: list[tuple[Number, Number, Number, Number]] = field(default_factory=list)
    triangles: list[TrianglePiece] = field(default_factory=list)
    alpha: float = 1.0

    def pieces(self) -> list:
        return [_rect_polygon(*r) for r in self.rectangles] + [t.polygon() for t in self.triangles]

    def region(self):
        return shapely.union_all([Polygon([(float(x), float(y)) for x, y in p]) for p in self.pieces()])

    def covering(self, m_max: int = 8, max_squares: int = 10 ** 5) -> Covering:
        squares, polys, complete, pending = [], [], True, []
        for x0, y0, x1, y1 in self.rectangles:
            cov = rectangle_covering(x1 - x0, y1 - y0, max_squares, origin=(x0, y0))
            squares += cov.squares
            polys += cov.domain
            complete &= cov.complete
            pending += cov.pending
        for t in self.triangles:
            cov = triangle_covering(t.domain, m_max, t.placement)
            squares += cov.squares
            polys += cov.domain
            complete = False
            pending += cov.pending
        kind = "rectangle" if not self.triangles else "compatible"
        return Covering(squares, polys, complete, kind, pending)


def assemble_compatible(rectangles=(), triangles=(), alpha: float = 1.0) -> CompatibleDomain:
    """Validate pieces (pairwise disjoint interiors, alpha-compatible triangles)."""
    rects = []
    for r in rectangles:
        x0, y0, x1, y1 = r
        if not (x0 < x1 and y0 < y1):
            raise ValueError(f"degenerate rectangle {r}")
        rects.append(tuple(r))
    tris = [t if isinstance(t, TrianglePiece) else TrianglePiece(*t) for t in triangles]
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    for n, t in enumerate(tris):
        ok, r_b, r_h = alpha_compatible(t.domain, alpha)
        if not ok:
            raise PreconditionError(
                f"triangle {n} is not alpha-compatible at alpha={alpha}: "
                f"2*max(r_B={float(r_b):.6g}, r_H={float(r_h):.6g})^(alpha+1) = "
                f"{covering_ratio(t.domain, alpha):.6g} >= 1 (threshold alpha > {alpha_threshold(t.domain):.6g})")
    dom = CompatibleDomain(rects, tris, alpha)
    shapes = [Polygon([(float(x), float(y)) for x, y in p]) for p in dom.pieces()]
    for i in range(len(shapes)):
        for j in range(i + 1, len(shapes)):
            if shapes[i].intersection(shapes[j]).area >= 1e-12:
                raise ValueError(f"pieces {i} and {j} overlap")
    return dom


@dataclass
class DomainSpec:
    """Parsed domain-spec file: a compatible domain or a general polygon."""

    compatible: CompatibleDomain | None = None
    polygon: list | None = None
    alpha: float = 1.0

    def covering(self, depth: int) -> Covering:
        """Covering with ``depth`` triangle steps or Vitali levels."""
        if self.polygon is not None:
            return vitali_dyadic_covering(self.polygon, depth)
        return self.compatible.covering(m_max=depth)


def parse_domain_spec(data: dict | str) -> DomainSpec:
    if isinstance(data, str):
        data = json.loads(data)
    if not isinstance(data, dict):
        raise ValueError("domain spec must be a JSON object")
    alpha = float(_num(data.get("alpha", "1")))
    if "polygon" in data:
        poly = [(_num(x), _num(y)) for x, y in data["polygon"]]
        if len(poly) < 3:
            raise ValueError("polygon needs at least three vertices")
        return DomainSpec(polygon=poly, alpha=alpha)
    rects = []
    for r in data.get("rectangles", []):
        if isinstance(r, dict):
            r = [r["x0"], r["y0"], r["x1"], r["y1"]]
        if len(r) != 4:
            raise ValueError(f"rectangle needs four numbers: {r}")
        rects.append(tuple(_num(v) for v in r))
    tris = []
    for t in data.get("triangles", []):
        dom = TriangularDomain(_num(t["a"]), _num(t["b"]), profile_from_dict(t["h"]))
        tr = t.get("translation", [0, 0])
        tris.append(TrianglePiece(dom, Placement(int(t.get("rotation", 0)), (_num(tr[0]), _num(tr[1])))))
    if not rects and not tris:
        raise ValueError("domain spec has no pieces")
    return DomainSpec(compatible=assemble_compatible(rects, tris, alpha), alpha=alpha)


def load_domain_spec(path) -> DomainSpec:
    with open(path) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValueError(f"invalid JSON: {exc}") from exc
    return parse_domain_spec(data)
