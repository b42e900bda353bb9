"""Triangulated piecewise-affine maps and shared-edge extraction."""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
import shapely

from .geometry import ConvexCell, label_index, matrix_set_E


@dataclass
class PiecewiseAffineMap:
    """Triangular cells with affine data, stored in integer (or exact) units.

    Physical coordinates are ``stored / scale``. On cell ``n`` the map is
    ``U = matrices[n] @ X + offsets[n]`` in stored units, i.e. ``u = M x + offsets / scale``.
    """

    vertices: np.ndarray          # (n, 3, 2), counterclockwise
    matrices: np.ndarray          # (n, 2, 2) integer
    offsets: np.ndarray           # (n, 2)
    scale: int | Fraction = 1
    domain: list = field(default_factory=list)       # polygons, physical
    depth: int = 0
    untiled: list = field(default_factory=list)      # polygons, physical
    meta: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.vertices)

    @property
    def labels(self) -> np.ndarray:
        return label_index(self.matrices)

    def cell(self, n: int) -> ConvexCell:
        s = Fraction(self.scale) if not isinstance(self.scale, float) else self.scale
        conv = _exact if self.vertices.dtype != float else float
        verts = tuple((conv(x) / s, conv(y) / s) for x, y in self.vertices[n])
        off = tuple(conv(o) / s for o in self.offsets[n])
        idx = int(self.labels[n])
        if idx < 0:
            raise ValueError(f"cell {n} has a gradient outside E")
        return ConvexCell(verts, matrix_set_E()[idx], off)

    def cells(self):
        for n in range(len(self)):
            yield self.cell(n)

    def float_vertices(self) -> np.ndarray:
        return self.vertices.astype(float) / float(self.scale)

    def float_offsets(self) -> np.ndarray:
        return self.offsets.astype(float) / float(self.scale)

    def signed_areas(self) -> np.ndarray:
        """Twice the signed area of each cell, in stored units (exact for integer data)."""
        v = self.vertices
        e1 = v[:, 1] - v[:, 0]
        e2 = v[:, 2] - v[:, 0]
        return e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]

    def areas(self) -> np.ndarray:
        return np.abs(self.signed_areas().astype(float)) / 2 / float(self.scale) ** 2

    def locate(self, points) -> np.ndarray:
        """Index of a cell containing each point (closed cells), -1 if none."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        tree = self.meta.get("_tree")
        if tree is None:
            tri = self.float_vertices()
            polys = shapely.polygons(np.concatenate([tri, tri[:, :1]], axis=1))
            tree = shapely.STRtree(polys)
            self.meta["_tree"] = tree
        hits = tree.query(shapely.points(pts), predicate="intersects")
        out = np.full(len(pts), -1, dtype=np.int64)
        # first hit per point
        order = np.lexsort((hits[1], hits[0]))
        src, dst = hits[0][order], hits[1][order]
        first = np.ones(len(src), dtype=bool)
        first[1:] = src[1:] != src[:-1]
        out[src[first]] = dst[first]
        return out

    def evaluate(self, points) -> np.ndarray:
        """Values at points (NaN where no cell contains the point)."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        idx = self.locate(pts)
        out = np.full((len(pts), 2), np.nan)
        ok = idx >= 0
        m = self.matrices[idx[ok]].astype(float)
        out[ok] = np.einsum("nij,nj->ni", m, pts[ok]) + self.float_offsets()[idx[ok]]
        return out

    def vertex_values(self) -> np.ndarray:
        """Values at the cell vertices in stored units, shape (n, 3, 2)."""
        return np.einsum("nij,nvj->nvi", self.matrices, self.vertices) + self.offsets[:, None, :]


def _exact(x) -> Fraction:
    return x if isinstance(x, Fraction) else Fraction(int(x))


# ---------------------------------------------------------------------------
# shared edges


@dataclass
class SharedEdges:
    """Maximal segments shared by two cells: ``left`` lies to the left of ``p -> q``."""

    left: np.ndarray
    right: np.ndarray
    p: np.ndarray
    q: np.ndarray

    def __len__(self) -> int:
        return len(self.left)


def shared_edges(vertices: np.ndarray) -> SharedEdges:
    """Shared edges of an integer triangulation (T-junctions allowed)."""
    v = np.asarray(vertices)
    if v.dtype.kind not in "iu":
        return shared_edges_exact(v)
    v = v.astype(np.int64)
    n = len(v)
    P = np.concatenate([v[:, 0], v[:, 1], v[:, 2]])
    Q = np.concatenate([v[:, 1], v[:, 2], v[:, 0]])
    owner = np.tile(np.arange(n), 3)
    D = Q - P
    g = np.gcd(np.abs(D[:, 0]), np.abs(D[:, 1]))
    d = D // g[:, None]
    flip = (d[:, 0] < 0) | ((d[:, 0] == 0) & (d[:, 1] < 0))
    c = np.where(flip[:, None], -d, d)
    # cell interior is left of P->Q (ccw); flipped edges have the cell on the right
    side_right = flip
    off = c[:, 0] * P[:, 1] - c[:, 1] * P[:, 0]
    tP = c[:, 0] * P[:, 0] + c[:, 1] * P[:, 1]
    tQ = c[:, 0] * Q[:, 0] + c[:, 1] * Q[:, 1]
    lo, hi = np.minimum(tP, tQ), np.maximum(tP, tQ)

    keys = np.stack([c[:, 0], c[:, 1], off], axis=1)
    _, grp = np.unique(keys, axis=0, return_inverse=True)
    grp = grp.reshape(-1).astype(np.int64)
    span = int(max(np.abs(lo).max(), np.abs(hi).max())) * 2 + 4
    base = grp * (2 * span) + span

    # elementary intervals between consecutive breakpoints of each line
    bp = np.unique(np.concatenate([base + lo, base + hi]))
    bgrp = bp // (2 * span)
    same = bgrp[1:] == bgrp[:-1]
    a_key, b_key = bp[:-1][same], bp[1:][same]
    mid2 = a_key + b_key  # twice the midpoint key

    def cover(sel):
        lo2 = 2 * (base[sel] + lo[sel])
        hi2 = 2 * (base[sel] + hi[sel])
        own = owner[sel]
        order = np.argsort(lo2, kind="stable")
        lo2, hi2, own = lo2[order], hi2[order], own[order]
        pos = np.searchsorted(lo2, mid2, side="right") - 1
        ok = pos >= 0
        posc = np.where(ok, pos, 0)
        ok &= hi2[posc] > mid2
        return np.where(ok, own[posc], -1)

    L = cover(~side_right)
    R = cover(side_right)
    both = (L >= 0) & (R >= 0)
    a_key, b_key, L, R = a_key[both], b_key[both], L[both], R[both]
    g_of = a_key // (2 * span)
    ta, tb = a_key - g_of * 2 * span - span, b_key - g_of * 2 * span - span

    # merge consecutive pieces with the same cell pair
    if len(L):
        brk = np.ones(len(L), dtype=bool)
        brk[1:] = (L[1:] != L[:-1]) | (R[1:] != R[:-1]) | (a_key[1:] != b_key[:-1])
        start = np.flatnonzero(brk)
        end = np.append(start[1:], len(L)) - 1
        L, R, g_of, ta, tb = L[start], R[start], g_of[start], ta[start], tb[end]

    # representative direction/offset per group
    rep = np.zeros(grp.max() + 1 if len(grp) else 0, dtype=np.int64)
    rep[grp] = np.arange(len(grp))
    cc = c[rep[g_of]]
    oo = off[rep[g_of]]
    nn = (cc * cc).sum(axis=1)
    perp = np.stack([-cc[:, 1], cc[:, 0]], axis=1)

    def point(t):
        num = t[:, None] * cc + oo[:, None] * perp
        assert (num % nn[:, None] == 0).all()
        return num // nn[:, None]

    return SharedEdges(L, R, point(ta), point(tb))


def shared_edges_exact(vertices) -> SharedEdges:
    """Shared edges for exact (Fraction or int) coordinates; slow reference version."""
    polys = [[(_exact(x), _exact(y)) for x, y in cell] for cell in vertices]
    lines: dict = {}
    for n, poly in enumerate(polys):
        m = len(poly)
        for e in range(m):
            P, Q = poly[e], poly[(e + 1) % m]
            dx, dy = Q[0] - P[0], Q[1] - P[1]
            c = (Fraction(1), dy / dx) if dx != 0 else (Fraction(0), Fraction(1))
            flip = dx < 0 or (dx == 0 and dy < 0)
            off = c[0] * P[1] - c[1] * P[0]
            tP = c[0] * P[0] + c[1] * P[1]
            tQ = c[0] * Q[0] + c[1] * Q[1]
            lines.setdefault((c, off), []).append((min(tP, tQ), max(tP, tQ), n, flip))
    L, R, Ps, Qs = [], [], [], []
    for (c, off), items in sorted(lines.items()):
        nn = c[0] * c[0] + c[1] * c[1]

        def point(t):
            return ((t * c[0] - off * c[1]) / nn, (t * c[1] + off * c[0]) / nn)

        bps = sorted({t for it in items for t in it[:2]})
        prev = None
        for a, b in zip(bps[:-1], bps[1:]):
            mid = (a + b) / 2
            left = [it[2] for it in items if not it[3] and it[0] < mid < it[1]]
            right = [it[2] for it in items if it[3] and it[0] < mid < it[1]]
            if not left or not right:
                prev = None
                continue
            pair = (left[0], right[0])
            if prev == pair and Qs[-1] == point(a):
                Qs[-1] = point(b)
                continue
            prev = pair
            L.append(pair[0])
            R.append(pair[1])
            Ps.append(point(a))
            Qs.append(point(b))
    obj = np.empty((len(Ps), 2), dtype=object)
    objq = np.empty((len(Qs), 2), dtype=object)
    for i, (p, q) in enumerate(zip(Ps, Qs)):
        obj[i] = p
        objq[i] = q
    return SharedEdges(np.array(L, dtype=np.int64), np.array(R, dtype=np.int64), obj, objq)
