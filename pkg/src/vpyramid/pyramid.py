"""The vectorial pyramid on (-2, 2)^2 and the scalar pyramid.

The vectorial pyramid is built on the triangle T = {0 <= y <= x <= 2} from dyadic
squares Q[k, i] = (x_{k-1}, x_k) x (i / 2^(k-1), (i+1) / 2^(k-1)), x_k = 2 - 2^(1-k),
and extended to the whole square by making both components even under the
reflections in the axes and in the diagonals.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Callable, NamedTuple

import numpy as np
from scipy.optimize import linprog
from scipy.spatial import HalfspaceIntersection

from .cells import PiecewiseAffineMap
from .geometry import E_MATRICES, SignedMatrix, as_exact, from_matrix, matrix_set_E

# ---------------------------------------------------------------------------
# base functions on the unit cell [-1, 1]^2


def base_a(x, y):
    return min(1 + x, 1 - x, 1 + y, 1 - y)


def base_b(x, y):
    return max(1 - abs(x), 1 - abs(y))


def base_c(x, y):
    if abs(x) <= y:
        return 1 - abs(x)
    if abs(y) <= -x:
        return 1 - y
    if abs(x) <= -y:
        return 1 - x
    return 1 - abs(y)


def base_d(x, y):
    if abs(x) <= y:
        return 1 - x
    if abs(y) <= -x:
        return 1 + y
    if abs(x) <= -y:
        return 1 - abs(x)
    return 1 - abs(y)


BASE = {"a": base_a, "b": base_b, "c": base_c, "d": base_d}


def rescale(f: Callable, k: int, x, y):
    """2^-k f(2^k x, 2^k y)."""
    if k < 1:
        raise ValueError("k must be >= 1")
    s = 2 ** k
    v = f(x * s, y * s)
    return Fraction(v) / s if not isinstance(v, float) else v / s


# octants of a cell, counterclockwise from the lower half of the right sector:
# 0 RU (0<Y<X), 1 TR (0<X<Y), 2 TL (0<-X<Y), 3 LU (0<Y<-X),
# 4 LL (0<-Y<-X), 5 BL (0<-X<-Y), 6 BR (0<X<-Y), 7 RL (0<-Y<X)
OCTANT_NAMES = ("RU", "TR", "TL", "LU", "LL", "BL", "BR", "RL")
_OCTANT_CORNERS = (((1, 0), (1, 1)), ((1, 1), (0, 1)), ((0, 1), (-1, 1)), ((-1, 1), (-1, 0)),
                   ((-1, 0), (-1, -1)), ((-1, -1), (0, -1)), ((0, -1), (1, -1)), ((1, -1), (1, 0)))


def octant_of(X, Y) -> int | None:
    """Octant index of a local point, None on an octant boundary or outside the open cell."""
    if not (-1 < X < 1 and -1 < Y < 1):
        return None
    if X == 0 or Y == 0 or abs(X) == abs(Y):
        return None
    if Y > 0:
        if X > Y:
            return 0
        if X > 0:
            return 1
        return 2 if -X < Y else 3
    if -X > -Y:
        return 4
    if X < 0:
        return 5
    return 6 if X < -Y else 7


def _affine_gradient(f: Callable, octant: int) -> tuple[Fraction, Fraction]:
    """Exact gradient of a base function on an octant (it is affine there)."""
    (p1, p2) = _OCTANT_CORNERS[octant]
    cx = Fraction(p1[0] + p2[0], 3)
    cy = Fraction(p1[1] + p2[1], 3)
    eps = Fraction(1, 1000)
    f0 = f(cx, cy)
    gx = (f(cx + eps, cy) - f0) / eps
    gy = (f(cx, cy + eps) - f0) / eps
    return gx, gy


@lru_cache(maxsize=None)
def _kind_table(kind: str) -> tuple[SignedMatrix, ...]:
    out = []
    for o in range(8):
        ax, ay = _affine_gradient(base_a, o)
        fx, fy = _affine_gradient(BASE[kind], o)
        out.append(from_matrix([[int(ax), int(ay)], [int(fx), int(fy)]]))
    return tuple(out)


def gradient_table(parity: str) -> list[SignedMatrix]:
    """Gradient labels on the 8 octants (order of OCTANT_NAMES).

    ``parity`` is "even" (second component built from d), "odd" (from c) or
    "diagonal" (from b, the square on the diagonal).
    """
    kind = {"even": "d", "odd": "c", "diagonal": "b"}.get(parity)
    if kind is None:
        raise ValueError(f"unknown parity {parity!r}")
    return list(_kind_table(kind))


# ---------------------------------------------------------------------------
# layout


def x_level(k: int) -> Fraction:
    return 2 - Fraction(1, 2 ** (k - 1)) if k > 0 else Fraction(0)


def square_kind(k: int, i: int) -> str:
    last = 2 ** k - 2
    if not 0 <= i <= last:
        raise ValueError(f"index {i} out of range at level {k}")
    if i == last:
        return "b"
    return "d" if i % 2 == 0 else "c"


@dataclass(frozen=True)
class LayoutSquare:
    k: int
    i: int
    x0: Fraction
    x1: Fraction
    y0: Fraction
    y1: Fraction

    @property
    def kind(self) -> str:
        return square_kind(self.k, self.i)

    @property
    def center(self) -> tuple[Fraction, Fraction]:
        return (self.x0 + self.x1) / 2, (self.y0 + self.y1) / 2

    @property
    def side(self) -> Fraction:
        return self.x1 - self.x0


@dataclass(frozen=True)
class PyramidLayout:
    depth: int

    def __post_init__(self):
        if self.depth < 1:
            raise ValueError("depth must be >= 1")

    @property
    def squares(self) -> list[LayoutSquare]:
        out = []
        for k in range(1, self.depth + 1):
            h = Fraction(1, 2 ** (k - 1))
            for i in range(2 ** k - 1):
                out.append(LayoutSquare(k, i, x_level(k - 1), x_level(k), i * h, (i + 1) * h))
        return out

    def square(self, k: int, i: int) -> LayoutSquare:
        h = Fraction(1, 2 ** (k - 1))
        square_kind(k, i)
        return LayoutSquare(k, i, x_level(k - 1), x_level(k), i * h, (i + 1) * h)


# ---------------------------------------------------------------------------
# evaluation


class PvValue(NamedTuple):
    value: tuple | None
    gradient: SignedMatrix | None
    status: str  # "regular", "singular" or "untiled"


def _reduce(x, y):
    """Map (x, y) into T; returns the reduced point and g with reduced = g @ (x, y)."""
    sx = -1 if x < 0 else 1
    sy = -1 if y < 0 else 1
    g = np.array([[sx, 0], [0, sy]], dtype=np.int64)
    ax, ay = abs(x), abs(y)
    if ay > ax:
        g = np.array([[0, 1], [1, 0]], dtype=np.int64) @ g
        ax, ay = ay, ax
    return ax, ay, g


def pv_eval(p, depth: int | None = None) -> PvValue:
    """Value and gradient of the vectorial pyramid at ``p``, exact for exact input.

    ``depth=None`` evaluates the untruncated map. Points in the frame beyond the
    last generated level get status "untiled"; points on cell edges get "singular"
    (value still returned).
    """
    x, y = p
    exact = not (isinstance(x, float) or isinstance(y, float))
    if exact:
        x, y = as_exact(x), as_exact(y)
    if not (-2 < x < 2 and -2 < y < 2):
        raise ValueError(f"point {p} outside (-2, 2)^2")
    xr, yr, g = _reduce(x, y)
    k = 1
    while xr > x_level(k):
        k += 1
        if depth is not None and k > depth:
            return PvValue(None, None, "untiled")
    h = Fraction(1, 2 ** (k - 1))
    i = min(int(yr / h) if exact else int(np.floor(yr / float(h))), 2 ** k - 2)
    cx = 2 - Fraction(3, 2 ** k)
    cy = (2 * i + 1) * Fraction(1, 2 ** k)
    s = 2 ** k
    if exact:
        X, Y = (xr - cx) * s, (yr - cy) * s
    else:
        X, Y = (xr - float(cx)) * s, (yr - float(cy)) * s
    kind = square_kind(k, i)
    a = base_a(X, Y)
    f = BASE[kind](X, Y)
    value = (a / s, f / s) if not exact else (Fraction(a) / s, Fraction(f) / s)
    o = octant_of(X, Y)
    if o is None or xr == yr or yr == 0 or xr == x_level(k):
        return PvValue(value, None, "singular")
    grad = _kind_table(kind)[o].matrix @ g
    return PvValue(value, from_matrix(grad), "regular")


def _reduce_many(pts: np.ndarray):
    x, y = pts[:, 0], pts[:, 1]
    sx = np.where(x < 0, -1, 1)
    sy = np.where(y < 0, -1, 1)
    ax, ay = np.abs(x), np.abs(y)
    swap = ay > ax
    xr = np.where(swap, ay, ax)
    yr = np.where(swap, ax, ay)
    n = len(pts)
    g = np.zeros((n, 2, 2), dtype=np.int64)
    g[:, 0, 0] = np.where(swap, 0, sx)
    g[:, 0, 1] = np.where(swap, sy, 0)
    g[:, 1, 0] = np.where(swap, sx, 0)
    g[:, 1, 1] = np.where(swap, 0, sy)
    return xr, yr, g


def _octant_many(X, Y):
    o = np.full(X.shape, -1)
    up = Y > 0
    o = np.where(up & (X > Y), 0, o)
    o = np.where(up & (X > 0) & (X < Y), 1, o)
    o = np.where(up & (X < 0) & (-X < Y), 2, o)
    o = np.where(up & (X < 0) & (-X > Y), 3, o)
    dn = Y < 0
    o = np.where(dn & (X < 0) & (-X > -Y), 4, o)
    o = np.where(dn & (X < 0) & (-X < -Y), 5, o)
    o = np.where(dn & (X > 0) & (X < -Y), 6, o)
    o = np.where(dn & (X > 0) & (X > -Y), 7, o)
    bad = (X == 0) | (Y == 0) | (np.abs(X) == np.abs(Y)) | (np.abs(X) >= 1) | (np.abs(Y) >= 1)
    return np.where(bad, -1, o)


def _kind_code_tables():
    tabs = np.zeros((3, 8, 2, 2), dtype=np.int64)
    for j, kind in enumerate("dcb"):
        tabs[j] = [m.matrix for m in _kind_table(kind)]
    return tabs


def pv_eval_many(points, depth: int | None = None):
    """Vectorised float evaluation.

    Returns (values (n, 2), label indices (n,), status (n,)) where status is
    0 regular, 1 singular, 2 untiled; values are NaN for untiled points.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if np.any(np.abs(pts) >= 2):
        raise ValueError("points outside (-2, 2)^2")
    xr, yr, g = _reduce_many(pts)
    k = np.floor(1 - np.log2(np.maximum(2 - xr, 1e-300))).astype(np.int64) + 1
    k = np.maximum(k, 1)
    xk = lambda kk: 2.0 - 2.0 ** (1 - kk)
    for _ in range(3):
        k = np.where(xr > xk(k), k + 1, k)
        k = np.where((k > 1) & (xr <= xk(k - 1)), k - 1, k)
    limit = depth if depth is not None else 60
    untiled = k > limit
    k = np.minimum(k, limit)
    s = 2.0 ** k
    i = np.minimum(np.floor(yr * s / 2), s - 2).astype(np.int64)
    cx = 2 - 3 / s
    cy = (2 * i + 1) / s
    X, Y = (xr - cx) * s, (yr - cy) * s
    a = 1 - np.maximum(np.abs(X), np.abs(Y))
    b = 1 - np.minimum(np.abs(X), np.abs(Y))
    c = np.select([np.abs(X) <= Y, np.abs(Y) <= -X, np.abs(X) <= -Y], [1 - np.abs(X), 1 - Y, 1 - X], 1 - np.abs(Y))
    d = np.select([np.abs(X) <= Y, np.abs(Y) <= -X, np.abs(X) <= -Y], [1 - X, 1 + Y, 1 - np.abs(X)], 1 - np.abs(Y))
    is_b = i == (s - 2).astype(np.int64)
    code = np.where(is_b, 2, np.where(i % 2 == 0, 0, 1))
    f = np.choose(code, [d, c, b])
    vals = np.stack([a / s, f / s], axis=1)
    o = _octant_many(X, Y)
    singular = (o < 0) | (xr == yr) | (yr == 0)
    tabs = _kind_code_tables()
    m = tabs[code, np.maximum(o, 0)]
    grad = np.einsum("nij,njk->nik", m, g)
    idx = _label_many(grad)
    status = np.where(untiled, 2, np.where(singular, 1, 0))
    vals[untiled] = np.nan
    idx = np.where(status == 0, idx, -1)
    return vals, idx, status


def _label_many(m: np.ndarray) -> np.ndarray:
    flat = m.reshape(-1, 4)
    eq = (flat[:, None, :] == E_MATRICES.reshape(1, 8, 4)).all(axis=2)
    return np.where(eq.any(axis=1), eq.argmax(axis=1), -1)


# ---------------------------------------------------------------------------
# exact cell decomposition


# symmetry images: point maps g; diagonal squares only need the axis reflections
_SYMMETRIES = E_MATRICES
_AXIS_REFLECTIONS = np.array([[[1, 0], [0, 1]], [[-1, 0], [0, 1]], [[1, 0], [0, -1]], [[-1, 0], [0, -1]]],
                             dtype=np.int64)


def _octant_triangles(cx, cy, h):
    """(n, 8, 3, 2) octant triangles of squares with integer centres and half-sides."""
    corners = np.array(_OCTANT_CORNERS, dtype=np.int64)  # (8, 2, 2)
    c = np.stack([cx, cy], axis=1)[:, None, None, :]
    tri = np.empty((len(cx), 8, 3, 2), dtype=np.int64)
    tri[:, :, 0] = c[:, :, 0]
    tri[:, :, 1:] = c + h[:, None, None, None] * corners[None]
    return tri


@lru_cache(maxsize=16)
def pyramid_cells(depth: int) -> PiecewiseAffineMap:
    """Exact cell decomposition of the vectorial pyramid up to level ``depth``.

    Coordinates are integers in units of 2^-depth. Cells are ordered by level,
    square index, symmetry image and octant.
    """
    if depth < 1:
        raise ValueError("depth must be >= 1")
    K = depth
    unit = 2 ** K
    tabs = _kind_code_tables()
    verts, mats, offs, meta_k, meta_i = [], [], [], [], []
    for k in range(1, K + 1):
        h = 2 ** (K - k)
        n_sq = 2 ** k - 1
        i = np.arange(n_sq, dtype=np.int64)
        cx = np.full(n_sq, 2 * unit - 3 * h, dtype=np.int64)
        cy = (2 * i + 1) * h
        hh = np.full(n_sq, h, dtype=np.int64)
        tri = _octant_triangles(cx, cy, hh)
        code = np.where(i == n_sq - 1, 2, np.where(i % 2 == 0, 0, 1))
        base_m = tabs[code]  # (n_sq, 8, 2, 2)
        for sq in range(n_sq):
            group = _AXIS_REFLECTIONS if code[sq] == 2 else _SYMMETRIES
            for g in group:
                v = np.einsum("ij,otj->oti", g, tri[sq])
                if round(np.linalg.det(g)) < 0:
                    v = v[:, ::-1]
                m = np.einsum("oij,kj->oik", base_m[sq], g)  # M g^T, g orthogonal
                centre = g @ np.array([cx[sq], cy[sq]])
                o = np.array([h, h]) - np.einsum("oij,j->oi", m, centre)
                verts.append(v)
                mats.append(m)
                offs.append(o)
                meta_k.append(np.full(8, k))
                meta_i.append(np.full(8, sq))
    two = Fraction(2)
    xK = x_level(K)
    frame = [
        [(-two, -two), (two, -two), (two, -xK), (-two, -xK)],
        [(-two, xK), (two, xK), (two, two), (-two, two)],
        [(-two, -xK), (-xK, -xK), (-xK, xK), (-two, xK)],
        [(xK, -xK), (two, -xK), (two, xK), (xK, xK)],
    ]
    return PiecewiseAffineMap(
        vertices=np.concatenate(verts),
        matrices=np.concatenate(mats),
        offsets=np.concatenate(offs),
        scale=unit,
        domain=[[(-two, -two), (two, -two), (two, two), (-two, two)]],
        depth=K,
        untiled=frame,
        meta={"k": np.concatenate(meta_k), "i": np.concatenate(meta_i)},
    )


def square_cells(k: int, i: int, depth: int | None = None) -> np.ndarray:
    """Indices of the cells of Q[k, i] lying inside T (for diagonal squares, its lower half)."""
    pm = pyramid_cells(depth or k)
    sel = (pm.meta["k"] == k) & (pm.meta["i"] == i)
    idx = np.flatnonzero(sel)
    v = pm.vertices[idx]
    centroid = v.sum(axis=1)
    in_T = (centroid[:, 1] >= 0) & (centroid[:, 0] >= centroid[:, 1])
    return idx[in_T]


# ---------------------------------------------------------------------------
# scalar pyramid


@dataclass
class ScalarPyramid:
    """p(x) = r - max_i <xi_i, x - x0> and its positivity polytope."""

    xis: np.ndarray
    r: float
    x0: np.ndarray
    vertices: np.ndarray  # vertices of P = {p >= 0}

    def __call__(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return self.r - ((x - self.x0) @ self.xis.T).max(axis=1)

    def gradient(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return -self.xis[((x - self.x0) @ self.xis.T).argmax(axis=1)]


def scalar_pyramid(xis, r: float, x0) -> ScalarPyramid:
    """Build the scalar pyramid; requires 0 inside the interior of the hull of the xis."""
    xis = np.asarray(xis, dtype=float)
    x0 = np.asarray(x0, dtype=float)
    if r <= 0:
        raise ValueError("r must be positive")
    margin = _hull_margin(xis)
    if margin <= 1e-12:
        raise ValueError("unbounded pyramid")
    halfspaces = np.c_[xis, -(r + xis @ x0)]
    hs = HalfspaceIntersection(halfspaces, x0)
    return ScalarPyramid(xis, float(r), x0, hs.intersections)


def _hull_margin(xis: np.ndarray) -> float:
    """min over the unit l_inf sphere of max_i <xi_i, z>; positive iff 0 is interior to the hull."""
    m, n = xis.shape
    best = np.inf
    for j in range(n):
        for sgn in (1.0, -1.0):
            # minimise t subject to <xi_i, z> <= t, z_j = sgn, |z|_inf <= 1
            c = np.r_[np.zeros(n), 1.0]
            A = np.c_[xis, -np.ones(m)]
            bounds = [(-1.0, 1.0)] * n + [(None, None)]
            bounds[j] = (sgn, sgn)
            res = linprog(c, A_ub=A, b_ub=np.zeros(m), bounds=bounds, method="highs")
            if res.status != 0:
                return -np.inf
            best = min(best, res.fun)
    return float(best)
