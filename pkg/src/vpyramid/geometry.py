"""Scalars, the gradient set E, convex cells, segment sets and set metrics."""
from __future__ import annotations

import math
import re
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np
import shapely
from shapely.geometry import LineString, MultiLineString, Point

Number = int | float | Fraction


class PreconditionError(ValueError):
    """A mathematical precondition does not hold (divergent series, incompatible piece, ...)."""


# ---------------------------------------------------------------------------
# scalars

_DYADIC_RE = re.compile(r"^\s*([+-]?\d+)\s*/\s*2\s*\^\s*(\d+)\s*$")
_RATIONAL_RE = re.compile(r"^\s*([+-]?\d+)\s*/\s*(\d+)\s*$")


def parse_scalar(text: str | Number) -> Fraction:
    """Parse a decimal string, ``p/q`` or ``p/2^k`` into an exact Fraction."""
    if isinstance(text, Fraction):
        return text
    if isinstance(text, (int, float)) and not isinstance(text, bool):
        return as_exact(text)
    if not isinstance(text, str):
        raise ValueError(f"not a number: {text!r}")
    m = _DYADIC_RE.match(text)
    if m:
        return Fraction(int(m.group(1)), 2 ** int(m.group(2)))
    m = _RATIONAL_RE.match(text)
    if m:
        if int(m.group(2)) == 0:
            raise ValueError(f"zero denominator in {text!r}")
        return Fraction(int(m.group(1)), int(m.group(2)))
    try:
        return Fraction(text.strip())
    except (ValueError, ZeroDivisionError) as exc:
        raise ValueError(f"not a number: {text!r}") from exc


def as_exact(x: Number) -> Fraction:
    """Exact value of ``x`` (floats are converted without rounding)."""
    if isinstance(x, Fraction):
        return x
    if isinstance(x, float):
        if not math.isfinite(x):
            raise ValueError(f"non-finite scalar {x!r}")
        return Fraction(x)
    return Fraction(int(x))


def is_dyadic(x: Number) -> bool:
    q = as_exact(x)
    d = q.denominator
    return d & (d - 1) == 0


def format_scalar(x: Number) -> str:
    """Exact numeral: integer, ``p/2^k`` for dyadics, ``p/q`` otherwise; floats via repr."""
    if isinstance(x, float):
        return repr(x)
    q = as_exact(x)
    if q.denominator == 1:
        return str(q.numerator)
    d = q.denominator
    if d & (d - 1) == 0:
        return f"{q.numerator}/2^{d.bit_length() - 1}"
    return f"{q.numerator}/{q.denominator}"


# ---------------------------------------------------------------------------
# the eight matrices


class SignedMatrix(Enum):
    """The gradient labels: plus or minus A1..A4."""

    P1 = ("+A1", ((1, 0), (0, 1)))
    M1 = ("-A1", ((-1, 0), (0, -1)))
    P2 = ("+A2", ((0, 1), (1, 0)))
    M2 = ("-A2", ((0, -1), (-1, 0)))
    P3 = ("+A3", ((-1, 0), (0, 1)))
    M3 = ("-A3", ((1, 0), (0, -1)))
    P4 = ("+A4", ((0, -1), (1, 0)))
    M4 = ("-A4", ((0, 1), (-1, 0)))

    @property
    def label(self) -> str:
        return self.value[0]

    @property
    def entries(self) -> tuple[tuple[int, int], tuple[int, int]]:
        return self.value[1]

    @property
    def index(self) -> int:
        return _ORDER.index(self)

    @property
    def matrix(self) -> np.ndarray:
        return np.array(self.entries, dtype=np.int64)

    def __neg__(self) -> "SignedMatrix":
        return from_matrix(-self.matrix)

    def __matmul__(self, other: "SignedMatrix") -> "SignedMatrix":
        return from_matrix(self.matrix @ other.matrix)

    @property
    def T(self) -> "SignedMatrix":
        return from_matrix(self.matrix.T)

    @classmethod
    def from_label(cls, label: str) -> "SignedMatrix":
        key = label.strip()
        if not key.startswith(("+", "-")):
            key = "+" + key
        for m in cls:
            if m.label == key:
                return m
        raise ValueError(f"unknown gradient label {label!r}")

    def __repr__(self) -> str:
        return f"SignedMatrix({self.label})"


_ORDER = list(SignedMatrix)
E_MATRICES = np.array([m.entries for m in _ORDER], dtype=np.int64)
LABELS = tuple(m.label for m in _ORDER)


def matrix_set_E() -> list[SignedMatrix]:
    return list(_ORDER)


def label_index(matrices: np.ndarray) -> np.ndarray:
    """Index into E of each 2x2 matrix in ``matrices`` (shape (..., 2, 2)); -1 if not in E."""
    m = np.asarray(matrices)
    flat = m.reshape(-1, 4)
    eq = (flat[:, None, :] == E_MATRICES.reshape(1, 8, 4)).all(axis=2)
    idx = np.where(eq.any(axis=1), eq.argmax(axis=1), -1)
    return idx.reshape(m.shape[:-2])


def from_matrix(m) -> SignedMatrix:
    i = int(label_index(np.asarray(m, dtype=np.int64).reshape(1, 2, 2))[0])
    if i < 0:
        raise ValueError(f"matrix not in E: {np.asarray(m).tolist()}")
    return _ORDER[i]


# ---------------------------------------------------------------------------
# convex cells


Point2 = tuple[Number, Number]


@dataclass(frozen=True)
class ConvexCell:
    """A convex polygon carrying the affine map x -> gradient @ x + offset."""

    vertices: tuple[Point2, ...]
    gradient: SignedMatrix = SignedMatrix.P1
    offset: tuple[Number, Number] = (0, 0)

    def __post_init__(self):
        object.__setattr__(self, "vertices", tuple(tuple(v) for v in self.vertices))
        object.__setattr__(self, "offset", tuple(self.offset))

    def value(self, p: Point2) -> tuple[Number, Number]:
        (m11, m12), (m21, m22) = self.gradient.entries
        return (m11 * p[0] + m12 * p[1] + self.offset[0],
                m21 * p[0] + m22 * p[1] + self.offset[1])

    def area(self) -> Number:
        return polygon_area(self)

    def is_convex_ccw(self) -> bool:
        v = self.vertices
        n = len(v)
        if n < 3:
            return False
        for i in range(n):
            a, b, c = v[i], v[(i + 1) % n], v[(i + 2) % n]
            if (b[0] - a[0]) * (c[1] - b[1]) - (b[1] - a[1]) * (c[0] - b[0]) < 0:
                return False
        return signed_area(v) > 0


def _vertices(poly) -> Sequence[Point2]:
    return poly.vertices if isinstance(poly, ConvexCell) else poly


def signed_area(vertices: Sequence[Point2]) -> Number:
    n = len(vertices)
    s = 0
    for i in range(n):
        x0, y0 = vertices[i]
        x1, y1 = vertices[(i + 1) % n]
        s += x0 * y1 - x1 * y0
    return s / 2 if isinstance(s, float) else Fraction(s) / 2


def polygon_area(poly) -> Number:
    """Shoelace area; exact for exact vertices. Raises on a degenerate polygon."""
    a = abs(signed_area(_vertices(poly)))
    if a == 0:
        raise ValueError("zero-area cell")
    return a


def clip_polygon_halfplane(poly, point: Point2, normal: Point2):
    """Part of ``poly`` in {x : (x - point) . normal >= 0}; None if that part has no area.

    Accepts a ConvexCell (returns a ConvexCell with the same affine data) or a vertex list.
    """
    verts = list(_vertices(poly))
    px, py = point
    nx, ny = normal

    def side(v):
        return (v[0] - px) * nx + (v[1] - py) * ny

    out: list[Point2] = []
    n = len(verts)
    for i in range(n):
        a, b = verts[i], verts[(i + 1) % n]
        sa, sb = side(a), side(b)
        if sa >= 0:
            out.append(a)
        if (sa > 0 and sb < 0) or (sa < 0 and sb > 0):
            t = sa / (sa - sb) if isinstance(sa, float) or isinstance(sb, float) else Fraction(sa) / (sa - sb)
            out.append((a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])))
    # drop repeated points
    cleaned: list[Point2] = []
    for v in out:
        if not cleaned or cleaned[-1] != v:
            cleaned.append(v)
    if len(cleaned) > 1 and cleaned[0] == cleaned[-1]:
        cleaned.pop()
    if len(cleaned) < 3 or signed_area(cleaned) == 0:
        return None
    if isinstance(poly, ConvexCell):
        return ConvexCell(tuple(cleaned), poly.gradient, poly.offset)
    return cleaned


# ---------------------------------------------------------------------------
# disk / polygon intersection area


def _disk_triangle_signed(p: np.ndarray, q: np.ndarray, r: float) -> np.ndarray:
    """Signed area of disk(0, r) intersected with triangle (0, p, q), vectorised over rows."""
    px, py = p[:, 0], p[:, 1]
    dx, dy = q[:, 0] - px, q[:, 1] - py
    a = dx * dx + dy * dy
    b = px * dx + py * dy
    c = px * px + py * py - r * r
    disc = b * b - a * c
    safe_a = np.where(a > 0, a, 1.0)
    sq = np.sqrt(np.maximum(disc, 0.0))
    t1 = np.clip((-b - sq) / safe_a, 0.0, 1.0)
    t2 = np.clip((-b + sq) / safe_a, 0.0, 1.0)
    hit = (disc > 0) & (a > 0)
    t1 = np.where(hit, t1, 0.0)
    t2 = np.where(hit, t2, 0.0)

    def angle(ax, ay, bx, by):
        return np.arctan2(ax * by - ay * bx, ax * bx + ay * by)

    ax, ay = px + t1 * dx, py + t1 * dy
    bx, by = px + t2 * dx, py + t2 * dy
    # sector from p to entry, triangle over the chord inside, sector from exit to q
    s1 = 0.5 * r * r * angle(px, py, ax, ay)
    tri = 0.5 * (ax * by - ay * bx)
    s2 = 0.5 * r * r * angle(bx, by, q[:, 0], q[:, 1])
    full_sector = 0.5 * r * r * angle(px, py, q[:, 0], q[:, 1])
    return np.where(hit, s1 + tri + s2, full_sector)


def disk_polygon_areas(center: Point2, radius: float, polygons: np.ndarray) -> np.ndarray:
    """Area of the disk intersected with each polygon of ``polygons`` (shape (n, m, 2))."""
    if radius <= 0:
        raise ValueError("radius must be positive")
    polys = np.asarray(polygons, dtype=float) - np.asarray(center, dtype=float)
    n, m, _ = polys.shape
    total = np.zeros(n)
    for i in range(m):
        p = polys[:, i]
        q = polys[:, (i + 1) % m]
        total += _disk_triangle_signed(p, q, float(radius))
    return np.abs(total)


def disk_polygon_area(center: Point2, radius: float, poly) -> float:
    verts = np.array([[float(x), float(y)] for x, y in _vertices(poly)])
    return float(disk_polygon_areas(center, radius, verts[None])[0])


# ---------------------------------------------------------------------------
# segment sets


def _point_segment_distance(points: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Distance matrix (n_points, n_segments)."""
    d = b - a
    ll = (d * d).sum(axis=1)
    rel = points[:, None, :] - a[None, :, :]
    t = np.where(ll > 0, (rel * d[None]).sum(axis=2) / np.where(ll > 0, ll, 1.0), 0.0)
    t = np.clip(t, 0.0, 1.0)
    proj = a[None] + t[..., None] * d[None]
    return np.hypot(points[:, None, 0] - proj[..., 0], points[:, None, 1] - proj[..., 1])


class SegmentSet:
    """A finite union of closed segments (points allowed as degenerate segments)."""

    def __init__(self, segments: Iterable, merge: bool = True):
        arr = np.asarray(list(segments) if not isinstance(segments, np.ndarray) else segments, dtype=float)
        arr = arr.reshape(-1, 2, 2)
        self._points = arr[np.all(arr[:, 0] == arr[:, 1], axis=1), 0]
        segs = arr[~np.all(arr[:, 0] == arr[:, 1], axis=1)]
        self.segments = merge_collinear(segs) if merge and len(segs) else segs
        self._tree = None

    @property
    def points(self) -> np.ndarray:
        return self._points

    def __len__(self) -> int:
        return len(self.segments) + len(self._points)

    @property
    def is_empty(self) -> bool:
        return len(self) == 0

    def length(self) -> float:
        d = self.segments[:, 1] - self.segments[:, 0]
        return float(np.hypot(d[:, 0], d[:, 1]).sum())

    def all_segments(self) -> np.ndarray:
        pts = self._points
        return np.concatenate([self.segments, np.stack([pts, pts], axis=1)]) if len(pts) else self.segments

    def geometry(self):
        parts = [LineString(s) for s in self.segments] + [Point(p) for p in self._points]
        return shapely.GeometryCollection(parts) if parts else shapely.GeometryCollection()

    def distance(self, points) -> np.ndarray:
        """Euclidean distance from each point to the set (inf for the empty set)."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        segs = self.all_segments()
        if len(segs) == 0:
            return np.full(len(pts), np.inf)
        if len(segs) <= 512:
            out = np.empty(len(pts))
            step = max(1, 2_000_000 // len(segs))
            for i in range(0, len(pts), step):
                out[i:i + step] = _point_segment_distance(pts[i:i + step], segs[:, 0], segs[:, 1]).min(axis=1)
            return out
        if self._tree is None:
            self._geoms = shapely.linestrings(segs)
            self._tree = shapely.STRtree(self._geoms)
        geo = shapely.points(pts)
        _, dist = self._tree.query_nearest(geo, return_distance=True, all_matches=False)
        return np.asarray(dist)


def merge_collinear(segs: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    """Union of segments as non-overlapping maximal collinear pieces."""
    if len(segs) == 0:
        return segs.reshape(0, 2, 2)
    p, q = segs[:, 0], segs[:, 1]
    d = q - p
    ln = np.hypot(d[:, 0], d[:, 1])
    u = d / ln[:, None]
    flip = (u[:, 0] < -tol) | ((np.abs(u[:, 0]) <= tol) & (u[:, 1] < 0))
    u = np.where(flip[:, None], -u, u)
    off = u[:, 0] * p[:, 1] - u[:, 1] * p[:, 0]
    t0 = (p * u).sum(axis=1)
    t1 = (q * u).sum(axis=1)
    lo, hi = np.minimum(t0, t1), np.maximum(t0, t1)
    scale = 1e9
    keys = np.round(np.stack([u[:, 0], u[:, 1], off], axis=1) * scale).astype(np.int64)
    order = np.lexsort((lo, keys[:, 2], keys[:, 1], keys[:, 0]))
    out = []
    cur_key = None
    cur_lo = cur_hi = 0.0
    cur_u = cur_off = None
    for i in order:
        k = tuple(keys[i])
        if k == cur_key and lo[i] <= cur_hi + tol:
            cur_hi = max(cur_hi, hi[i])
            continue
        if cur_key is not None:
            out.append(_from_line(cur_u, cur_off, cur_lo, cur_hi))
        cur_key, cur_lo, cur_hi, cur_u, cur_off = k, lo[i], hi[i], u[i], off[i]
    out.append(_from_line(cur_u, cur_off, cur_lo, cur_hi))
    return np.array(out)


def _from_line(u, off, lo, hi):
    n = np.array([-u[1], u[0]])
    return [n * off + u * lo, n * off + u * hi]


# ---------------------------------------------------------------------------
# Hausdorff distance


def _directed_hausdorff(A: SegmentSet, B: SegmentSet, tol: float) -> float:
    """sup over A of d(., B) by branch and bound on segment parameters.

    Upper bound on an interval: each distance-to-segment is convex along a line, so the
    minimum over B of the endpoint maxima bounds the interval; combined with the 1-Lipschitz
    bound.
    """
    bsegs = B.all_segments()
    a_pts = A.points
    best = 0.0
    if len(a_pts):
        best = float(B.distance(a_pts).max())
    segs = A.segments
    if len(segs) == 0:
        return best
    p0, p1 = segs[:, 0], segs[:, 1]
    lengths = np.hypot(*(p1 - p0).T)
    idx = np.arange(len(segs))
    t0 = np.zeros(len(segs))
    t1 = np.ones(len(segs))

    def seg_dists(ii, tt):
        pts = p0[ii] + tt[:, None] * (p1[ii] - p0[ii])
        return _point_segment_distance(pts, bsegs[:, 0], bsegs[:, 1])

    d0 = seg_dists(idx, t0)
    d1 = seg_dists(idx, t1)
    best = max(best, float(d0.min(axis=1).max()), float(d1.min(axis=1).max()))
    for _ in range(80):
        f0, f1 = d0.min(axis=1), d1.min(axis=1)
        lip = 0.5 * (f0 + f1 + lengths[idx] * (t1 - t0))
        conv = np.maximum(d0, d1).min(axis=1)
        ub = np.minimum(lip, conv)
        keep = ub > best + tol
        if not keep.any():
            break
        idx, t0, t1, d0, d1 = idx[keep], t0[keep], t1[keep], d0[keep], d1[keep]
        tm = 0.5 * (t0 + t1)
        dm = seg_dists(idx, tm)
        best = max(best, float(dm.min(axis=1).max()))
        idx = np.concatenate([idx, idx])
        t0, t1 = np.concatenate([t0, tm]), np.concatenate([tm, t1])
        d0, d1 = np.concatenate([d0, dm]), np.concatenate([dm, d1])
    return best


def hausdorff_distance(A: SegmentSet, B: SegmentSet, diameter: float | None = None,
                       tol: float = 1e-12) -> float:
    """Hausdorff distance; an empty set is at distance ``diameter`` from any point."""
    if A.is_empty and B.is_empty:
        return 0.0
    if A.is_empty or B.is_empty:
        if diameter is None:
            raise ValueError("distance to the empty set needs the domain diameter")
        return float(diameter)
    return max(_directed_hausdorff(A, B, tol), _directed_hausdorff(B, A, tol))


# ---------------------------------------------------------------------------
# Minkowski tube estimator


def tube_area(S: SegmentSet, rho: float, quad_segs: int = 256) -> float:
    if rho <= 0:
        raise ValueError("rho must be positive")
    parts = []
    if len(S.segments):
        parts.append(MultiLineString([s.tolist() for s in S.segments]))
    if len(S.points):
        parts.append(shapely.MultiPoint(S.points))
    if not parts:
        return 0.0
    geom = shapely.union_all([shapely.buffer(p, rho, quad_segs=quad_segs) for p in parts])
    return float(geom.area)


def minkowski_ratio(S: SegmentSet, rho: float) -> float:
    """Area of the rho-neighbourhood divided by 2 rho."""
    return tube_area(S, rho) / (2 * rho)
