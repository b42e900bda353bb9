"""Solutions assembled from rescaled pyramids on a square covering, and their checks."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import networkx as nx
import numpy as np
import shapely
from shapely.geometry import MultiLineString, Point, Polygon, box

from .cells import PiecewiseAffineMap, shared_edges
from .covering import Covering
from .geometry import (LABELS, PreconditionError, SegmentSet, disk_polygon_areas, label_index)
from .pyramid import pv_eval_many, pyramid_cells, x_level

_ROT = {0: ((1, 0), (0, 1)), 90: ((0, -1), (1, 0)), 180: ((-1, 0), (0, -1)), 270: ((0, 1), (-1, 0))}


def rotation_matrix(deg: int) -> np.ndarray:
    return np.array(_ROT[deg % 360], dtype=np.int64)


@dataclass
class Solution:
    """u = (l/4) p(R^-1 4 (x - c) / l) on every covering square (centre c, side l, rotation R).

    ``local`` holds the pyramid cells on (-2, 2)^2 shared by all squares.
    """

    covering: Covering
    depth: int
    local: PiecewiseAffineMap
    sigma: SegmentSet
    region: object
    centers: np.ndarray = field(repr=False, default=None)
    scales: np.ndarray = field(repr=False, default=None)
    rotations: np.ndarray = field(repr=False, default=None)

    def __post_init__(self):
        sq = self.covering.squares
        self.centers = np.array([[float(s.center[0]), float(s.center[1])] for s in sq])
        self.scales = np.array([float(s.side) / 4 for s in sq])
        self.rotations = np.array([s.rotation % 360 for s in sq], dtype=np.int64)

    @property
    def n_squares(self) -> int:
        return len(self.covering.squares)

    @property
    def n_cells(self) -> int:
        return self.n_squares * len(self.local)

    def _rot(self, i: int) -> np.ndarray:
        return rotation_matrix(int(self.rotations[i]))

    def square_cells(self, i: int):
        """Physical (vertices (m, 3, 2), matrices (m, 2, 2), offsets (m, 2)) of square i, floats."""
        R = self._rot(i)
        c, s = self.centers[i], self.scales[i]
        lv = self.local.float_vertices()
        verts = c + s * np.einsum("ij,nvj->nvi", R, lv)
        mats = np.einsum("nij,kj->nik", self.local.matrices, R)  # M R^-1 = M R^T
        offs = s * self.local.float_offsets() - np.einsum("nij,j->ni", mats, c)
        return verts, mats, offs

    def cell_map(self, exact: bool = False) -> PiecewiseAffineMap:
        """All cells in physical coordinates (Fractions when ``exact`` and the covering is exact)."""
        if exact:
            return self._exact_cell_map()
        vs, ms, os_ = zip(*(self.square_cells(i) for i in range(self.n_squares)))
        return PiecewiseAffineMap(np.concatenate(vs), np.concatenate(ms), np.concatenate(os_), 1,
                                  self.covering.domain, self.depth, self.untiled(),
                                  {"square": np.repeat(np.arange(self.n_squares), len(self.local))})

    def _exact_cell_map(self) -> PiecewiseAffineMap:
        n = len(self.local)
        K = self.local.scale
        verts = np.empty((self.n_squares * n, 3, 2), dtype=object)
        offs = np.empty((self.n_squares * n, 2), dtype=object)
        mats = np.empty((self.n_squares * n, 2, 2), dtype=np.int64)
        lv = self.local.vertices.astype(object)
        lo = self.local.offsets.astype(object)
        for i, sq in enumerate(self.covering.squares):
            R = self._rot(i).astype(object)
            c = np.array([Fraction(sq.center[0]), Fraction(sq.center[1])], dtype=object)
            s = Fraction(sq.side) / 4 / K
            m = np.einsum("nij,kj->nik", self.local.matrices, self._rot(i))
            sl = slice(i * n, (i + 1) * n)
            verts[sl] = c + np.einsum("ij,nvj->nvi", R, lv) * s
            mats[sl] = m
            offs[sl] = lo * s - np.einsum("nij,j->ni", m.astype(object), c)
        return PiecewiseAffineMap(verts, mats, offs, 1, self.covering.domain, self.depth, self.untiled())

    def inner_boxes(self) -> np.ndarray:
        """(x0, y0, x1, y1) of the tiled part of each square."""
        half = self.scales * float(x_level(self.depth))
        return np.c_[self.centers - half[:, None], self.centers + half[:, None]]

    def untiled(self) -> list:
        """Frames of the covering squares beyond the truncation depth (covering gaps not included)."""
        out = []
        for (x0, y0, x1, y1), (X0, Y0, X1, Y1) in zip(self._outer_boxes(), self.inner_boxes()):
            out += [[(x0, y0), (x1, y0), (x1, Y0), (x0, Y0)], [(x0, Y1), (x1, Y1), (x1, y1), (x0, y1)],
                    [(x0, Y0), (X0, Y0), (X0, Y1), (x0, Y1)], [(X1, Y0), (x1, Y0), (x1, Y1), (X1, Y1)]]
        return out

    def _outer_boxes(self) -> np.ndarray:
        h = 2 * self.scales
        return np.c_[self.centers - h[:, None], self.centers + h[:, None]]

    def square_of(self, points) -> np.ndarray:
        """Index of a covering square whose closure contains each point, -1 if none."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        tree = shapely.STRtree(shapely.box(*self._outer_boxes().T))
        hits = tree.query(shapely.points(pts), predicate="intersects")
        out = np.full(len(pts), -1, dtype=np.int64)
        out[hits[0][::-1]] = hits[1][::-1]
        return out

    def to_local(self, points, squares) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        rel = (pts - self.centers[squares]) / self.scales[squares, None]
        Rt = np.stack([rotation_matrix(int(r)).T for r in self.rotations[squares]]) if len(squares) else \
            np.zeros((0, 2, 2))
        return np.einsum("nij,nj->ni", Rt, rel)

    def evaluate(self, points) -> np.ndarray:
        """Values of the truncated solution; NaN in untiled frames and outside the squares."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        sq = self.square_of(pts)
        out = np.full((len(pts), 2), np.nan)
        ok = sq >= 0
        if ok.any():
            loc = np.clip(self.to_local(pts[ok], sq[ok]), -2 + 1e-15, 2 - 1e-15)
            vals, _, _ = pv_eval_many(loc, self.depth)
            out[ok] = vals * self.scales[sq[ok], None]
        return out


def _segments_of(geom) -> list:
    out = []
    for g in getattr(geom, "geoms", [geom]):
        if g.is_empty:
            continue
        if g.geom_type in ("Polygon",):
            rings = [g.exterior, *g.interiors]
        elif g.geom_type in ("LineString", "LinearRing"):
            rings = [g]
        else:
            out += _segments_of(g) if hasattr(g, "geoms") else []
            continue
        for ring in rings:
            c = np.asarray(ring.coords)
            out += [(tuple(c[i]), tuple(c[i + 1])) for i in range(len(c) - 1)]
    return out


def build_solution(cov: Covering, depth: int) -> Solution:
    """Transplant the depth-``depth`` pyramid into every covering square."""
    if not cov.squares:
        raise ValueError("empty covering")
    if depth < 1:
        raise ValueError("depth must be >= 1")
    pm = pyramid_cells(depth)
    local = PiecewiseAffineMap(pm.vertices.copy(), pm.matrices.copy(), pm.offsets.copy(), pm.scale,
                               pm.domain, pm.depth, pm.untiled, dict(pm.meta))
    region = cov.region()
    segs = _segments_of(region)
    for s in cov.squares:
        c = [(float(x), float(y)) for x, y in s.corners()]
        segs += [(c[i], c[(i + 1) % 4]) for i in range(4)]
    return Solution(cov, depth, local, SegmentSet(segs), region)


# ---------------------------------------------------------------------------
# verification


@dataclass
class VerificationReport:
    inclusion_fraction: float
    inclusion_failures: list
    continuity_defect: float
    continuity_failures: list
    trace_ratio: float              # max |u(v)| / d(v, boundary) over cell vertices (<= 1 required)
    boundary_decay: float           # max |u| on the outermost generated ring, relative to the square side
    edge_square_ratio: float        # sup |u| / (side / 2) over squares touching the boundary (<= 1 required)
    h1: dict
    h2: dict
    samples: int

    @property
    def passed(self) -> bool:
        return (self.inclusion_fraction == 1.0 and self.continuity_defect <= 1e-10
                and self.trace_ratio <= 1 + 1e-9 and self.edge_square_ratio <= 1 and all(self.h1.values()))

    def lines(self) -> list[str]:
        ok = lambda b: "ok" if b else "FAIL"
        out = [
            f"gradient inclusion: {self.inclusion_fraction:.6f} of {self.samples} samples "
            f"({ok(self.inclusion_fraction == 1.0)})",
            f"continuity defect: {self.continuity_defect:.3e} ({ok(self.continuity_defect <= 1e-10)})",
            f"zero trace |u| / d(., boundary): {self.trace_ratio:.6f} ({ok(self.trace_ratio <= 1 + 1e-9)})",
            f"sup |u| / (side / 2) on boundary squares: {self.edge_square_ratio:.6f} "
            f"({ok(self.edge_square_ratio <= 1)})",
            f"outer ring |u| / side: {self.boundary_decay:.3e}",
        ]
        for d, v in self.h1.items():
            out.append(f"H1 connected at delta={d:g}: {ok(v)}; H2 length {self.h2[d]['length']:.6g}, "
                       f"squares meeting {self.h2[d]['squares']}")
        if self.inclusion_failures:
            out.append(f"inclusion failures in cells {sorted(set(self.inclusion_failures))[:20]}")
        if self.continuity_failures:
            out.append(f"continuity failures on cell pairs {self.continuity_failures[:20]}")
        return out


def _sample_interior(tri: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    w = rng.dirichlet(np.ones(3), size=len(tri))
    w = 0.98 * w + 0.02 / 3  # stay off the edges
    return np.einsum("nv,nvi->ni", w, tri)


def verify_solution(sol: Solution, samples: int = 10000, seed: int = 0,
                    deltas=(0.25, 0.1)) -> VerificationReport:
    rng = np.random.default_rng(seed)
    local = sol.local
    n_local = len(local)

    # (i) gradient inclusion and agreement with the analytic pyramid
    sq = rng.integers(0, sol.n_squares, samples)
    cell = rng.integers(0, n_local, samples)
    X = _sample_interior(local.float_vertices()[cell], rng)
    _, analytic, status = pv_eval_many(X, sol.depth)
    stored = label_index(local.matrices[cell])
    good = (stored >= 0) & (status == 0) & (stored == analytic)
    failures = sorted(set(cell[~good].tolist()))

    # (ii) continuity across shared edges, exact in the local integer frame
    se = shared_edges(local.vertices)
    defect = 0.0
    bad_pairs = []
    if len(se):
        def val(c, p):
            return np.einsum("nij,nj->ni", local.matrices[c], p) + local.offsets[c]
        mid2 = se.p + se.q
        d = np.maximum.reduce([
            np.abs(val(se.left, se.p) - val(se.right, se.p)).max(axis=1),
            np.abs(val(se.left, se.q) - val(se.right, se.q)).max(axis=1),
            np.abs(2 * (local.offsets[se.left] - local.offsets[se.right])
                   + np.einsum("nij,nj->ni", local.matrices[se.left] - local.matrices[se.right], mid2)).max(axis=1) / 2,
        ])
        bad = np.flatnonzero(d > 0)
        bad_pairs = list(zip(se.left[bad].tolist(), se.right[bad].tolist()))
        defect = float(d.max()) / float(local.scale) * float(sol.scales.max())

    # (iii) zero trace: |u(v)| <= d(v, boundary) at every cell vertex
    lv, inv = np.unique(local.vertices.reshape(-1, 2), axis=0, return_inverse=True)
    vals = local.vertex_values().reshape(-1, 2)
    uv = np.zeros((len(lv), 2))
    uv[inv.reshape(-1)] = vals
    lvf = lv.astype(float) / float(local.scale)
    norm_loc = np.hypot(uv[:, 0], uv[:, 1]) / float(local.scale)
    boundary = sol.region.boundary
    ratio = edge = 0.0
    touching = shapely.distance(shapely.box(*sol._outer_boxes().T), boundary) < 1e-12
    for i in range(sol.n_squares):
        pts = sol.centers[i] + sol.scales[i] * (lvf @ rotation_matrix(int(sol.rotations[i])).T)
        dist = shapely.distance(shapely.points(pts), boundary)
        inside = shapely.contains_xy(sol.region, pts[:, 0], pts[:, 1]) | (dist < 1e-12)
        if not inside.all():
            ratio = math.inf
            break
        u = sol.scales[i] * norm_loc
        if touching[i]:
            # |u| is convex on each affine cell, so its sup sits at a vertex
            edge = max(edge, float(u.max()) / (2 * sol.scales[i]))
        with np.errstate(divide="ignore", invalid="ignore"):
            r = np.where(u > 0, u / np.maximum(dist, 1e-300), 0.0)
        ratio = max(ratio, float(r.max()))
    outer = np.abs(lvf).max(axis=1) >= float(x_level(sol.depth)) - 1e-15
    decay = float(norm_loc[outer].max()) / 4 if outer.any() else 0.0

    h1 = {}
    h2 = {}
    for delta in deltas:
        h1[delta] = check_h1(sol, delta)
        h2[delta] = check_h2(sol, delta)
    return VerificationReport(float(good.mean()), failures, defect, bad_pairs, ratio, decay, edge, h1, h2, samples)


def _inner_region(sol: Solution, delta: float):
    return sol.region.buffer(-delta, quad_segs=32)


def check_h1(sol: Solution, delta: float) -> bool:
    """Is (sigma within Omega_delta) union boundary(Omega_delta) connected?"""
    inner = _inner_region(sol, delta)
    if inner.is_empty:
        return True
    lines = MultiLineString([s.tolist() for s in sol.sigma.segments])
    parts = shapely.intersection(lines, inner)
    geom = shapely.union_all([parts, inner.boundary])
    noded = shapely.node(geom)
    g = nx.Graph()
    for a, b in _segments_of(noded):
        ka = (round(a[0], 9), round(a[1], 9))
        kb = (round(b[0], 9), round(b[1], 9))
        g.add_edge(ka, kb)
    return g.number_of_nodes() == 0 or nx.is_connected(g)


def check_h2(sol: Solution, delta: float) -> dict:
    """Length of sigma within Omega_delta and the number of covering squares meeting it."""
    inner = _inner_region(sol, delta)
    if inner.is_empty:
        return {"length": 0.0, "squares": 0}
    lines = MultiLineString([s.tolist() for s in sol.sigma.segments])
    length = float(shapely.intersection(lines, inner).length)
    boxes = shapely.box(*sol._outer_boxes().T)
    meets = shapely.intersects(boxes, inner) & (shapely.area(shapely.intersection(boxes, inner)) > 0)
    return {"length": length, "squares": int(meets.sum())}


# ---------------------------------------------------------------------------
# density


@dataclass
class DensityReport:
    point: tuple
    radius: float
    areas: dict             # label -> area of the ball within the cells of that gradient
    untiled_area: float
    threshold: float        # c r^2

    @property
    def cleared(self) -> int:
        return sum(a >= self.threshold for a in self.areas.values())

    def min_area(self) -> float:
        return min(self.areas.values())


def density_profile(sol: Solution, x, radii, c: float = 1 / 128) -> list[DensityReport]:
    """Areas of B(x, r) within each gradient set, from exact disk/triangle intersections.

    Untiled parts (frames beyond the truncation depth, covering gaps) only lower the
    computed areas. If they fill more than an eighth of the disk the depth is deemed
    insufficient.
    """
    x = np.asarray(x, dtype=float)
    dist = float(sol.region.boundary.distance(Point(x)))
    inside = sol.region.contains(Point(x))
    out = []
    for r in radii:
        r = float(r)
        if r <= 0:
            raise ValueError("radii must be positive")
        if inside and dist > 0 and r >= dist / 4:
            raise ValueError(f"radius {r} not below a quarter of the distance {dist} to the boundary")
        bb = (x[0] - r, x[1] - r, x[0] + r, x[1] + r)
        outer = sol._outer_boxes()
        near = np.flatnonzero((outer[:, 0] < bb[2]) & (outer[:, 2] > bb[0]) & (outer[:, 1] < bb[3]) & (outer[:, 3] > bb[1]))
        areas = np.zeros(8)
        for i in near:
            v, m, _ = sol.square_cells(int(i))
            keep = ((v[:, :, 0].min(1) < bb[2]) & (v[:, :, 0].max(1) > bb[0]) &
                    (v[:, :, 1].min(1) < bb[3]) & (v[:, :, 1].max(1) > bb[1]))
            if not keep.any():
                continue
            a = disk_polygon_areas(x, r, v[keep])
            np.add.at(areas, label_index(m[keep]), a)
        disk = Point(x).buffer(r, quad_segs=64)
        tiled = shapely.union_all(shapely.box(*sol.inner_boxes()[near].T)) if len(near) else Polygon()
        untiled = float(disk.intersection(sol.region).difference(tiled).area)
        if untiled > math.pi * r * r / 8:
            raise PreconditionError(f"insufficient depth: untiled area {untiled:.3g} inside the ball of radius {r}")
        out.append(DensityReport(tuple(x), r, dict(zip(LABELS, areas.tolist())), untiled, c * r * r))
    return out


def strip_areas(k: int, j: int) -> dict:
    """Areas of (Q[k, j] union Q[k, j+1]) within each gradient set of the pyramid (exact)."""
    pm = pyramid_cells(k)
    sel = (pm.meta["k"] == k) & ((pm.meta["i"] == j) | (pm.meta["i"] == j + 1))
    idx = np.flatnonzero(sel)
    cen = pm.vertices[idx].sum(axis=1)  # 3 x centroid
    in_T = (cen[:, 1] > 0) & (cen[:, 0] > cen[:, 1])
    idx = idx[in_T]
    twice = pm.signed_areas()[idx]
    lab = pm.labels[idx]
    out = {}
    for n, name in enumerate(LABELS):
        out[name] = Fraction(int(twice[lab == n].sum()), 2 * int(pm.scale) ** 2)
    return out


def cells_meeting_ball(sol: Solution, x, r: float) -> int:
    """Number of cells meeting the open ball B(x, r)."""
    x = np.asarray(x, dtype=float)
    count = 0
    outer = sol._outer_boxes()
    near = np.flatnonzero((outer[:, 0] < x[0] + r) & (outer[:, 2] > x[0] - r) &
                          (outer[:, 1] < x[1] + r) & (outer[:, 3] > x[1] - r))
    centre = shapely.points(x)
    for i in near:
        v, _, _ = sol.square_cells(int(i))
        count += int((shapely.distance(shapely.polygons(v), centre) < r).sum())
    return count
