"""The nested double-frame ("accordion") map.

A double frame with radii s < t < l is split by the diagonals and the axes into 16
half-trapezoids. On the inner frame (s <= |x|_inf <= t) the map is M x + (alpha, beta),
on the outer frame (t <= |x|_inf <= l) it is M x + (alpha, 2t + beta), with M taken
from a fixed label table. Successive double frames (s_{j+2}, s_{j+1}, s_j), j odd,
are chained continuously and normalised so that u(1, 0) = (0, 1).
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

from .cells import PiecewiseAffineMap, shared_edges_exact
from .geometry import SignedMatrix
from .pyramid import OCTANT_NAMES, _OCTANT_CORNERS

INNER_LABELS = {"RU": "+A4", "TR": "+A3", "TL": "+A1", "LU": "-A2",
                "LL": "-A4", "BL": "-A3", "BR": "-A1", "RL": "+A2"}
OUTER_LABELS = {"RU": "-A2", "TR": "-A1", "TL": "-A3", "LU": "+A4",
                "LL": "+A2", "BL": "+A1", "BR": "+A3", "RL": "-A4"}


@dataclass(frozen=True)
class AccordionSpec:
    """Radii s_1 = 1 > s_2 > ... > s_{2N+1} > 0 for N double frames."""

    s: tuple

    def __post_init__(self):
        s = self.s
        if len(s) < 3 or len(s) % 2 == 0:
            raise ValueError("need 2N + 1 radii for N double frames")
        if any(not (a > b) for a, b in zip(s[:-1], s[1:])) or s[-1] <= 0:
            raise ValueError("radii must be strictly decreasing and positive")

    @property
    def frames(self) -> int:
        return (len(self.s) - 1) // 2

    @classmethod
    def from_function(cls, f, frames: int) -> "AccordionSpec":
        return cls(tuple(f(j) for j in range(1, 2 * frames + 2)))

    @classmethod
    def harmonic(cls, frames: int) -> "AccordionSpec":
        return cls.from_function(lambda j: Fraction(1, j), frames)

    @classmethod
    def shifted(cls, frames: int, limit: Fraction = Fraction(1, 2)) -> "AccordionSpec":
        """s_j = limit + (1 - limit) / j, decreasing to ``limit`` > 0."""
        return cls.from_function(lambda j: limit + (1 - limit) / j, frames)

    @classmethod
    def geometric(cls, frames: int, q: Fraction = Fraction(1, 2)) -> "AccordionSpec":
        return cls.from_function(lambda j: q ** (j - 1), frames)


def frame_constants(s: Sequence) -> list[tuple]:
    """(alpha, beta) for each double frame, chained so the map is continuous."""
    alpha = 0
    beta = 2 - 2 * s[1]  # u(s_1, 0) = (alpha, -s_1 + 2 s_2 + beta) = (0, 1) with s_1 = 1
    out = [(alpha, beta)]
    for j in range(3, len(s) - 1, 2):
        # inner value at (s_j, 0) equals the next outer value there
        beta = beta + 2 * s[j - 1] - 2 * s[j]
        out.append((alpha, beta))
    return out


def build_accordion(spec: AccordionSpec) -> PiecewiseAffineMap:
    """Exact cells (Fractions) of the accordion map on {s_{2N+1} <= |x|_inf <= 1}."""
    s = spec.s
    verts, mats, offs = [], [], []
    consts = frame_constants(s)
    for f, (alpha, beta) in enumerate(consts):
        l, t, sm = s[2 * f], s[2 * f + 1], s[2 * f + 2]
        for ring, (r0, r1, table, shift) in enumerate(((sm, t, INNER_LABELS, 0), (t, l, OUTER_LABELS, 2 * t))):
            for o, name in enumerate(OCTANT_NAMES):
                p1, p2 = _OCTANT_CORNERS[o]
                quad = [(r0 * p1[0], r0 * p1[1]), (r1 * p1[0], r1 * p1[1]),
                        (r1 * p2[0], r1 * p2[1]), (r0 * p2[0], r0 * p2[1])]
                m = SignedMatrix.from_label(table[name]).matrix
                for tri in ((quad[0], quad[1], quad[2]), (quad[0], quad[2], quad[3])):
                    verts.append(tri)
                    mats.append(m)
                    offs.append((alpha, beta + shift))
    v = np.empty((len(verts), 3, 2), dtype=object)
    for n, tri in enumerate(verts):
        for k, p in enumerate(tri):
            v[n, k] = [Fraction(p[0]), Fraction(p[1])]
    o = np.empty((len(offs), 2), dtype=object)
    for n, (a, b) in enumerate(offs):
        o[n] = [Fraction(a), Fraction(b)]
    one = Fraction(1)
    return PiecewiseAffineMap(v, np.array(mats, dtype=np.int64), o, 1,
                              [[(-one, -one), (one, -one), (one, one), (-one, one)]], spec.frames,
                              [[(-s[-1], -s[-1]), (s[-1], -s[-1]), (s[-1], s[-1]), (-s[-1], s[-1])]])


def evaluate_exact(pm: PiecewiseAffineMap, p) -> tuple:
    """Exact value at ``p`` from the first cell containing it."""
    px, py = Fraction(p[0]), Fraction(p[1])
    for n in range(len(pm)):
        tri = pm.vertices[n]
        if _in_triangle(tri, px, py):
            m = pm.matrices[n]
            o = pm.offsets[n]
            return (m[0, 0] * px + m[0, 1] * py + o[0], m[1, 0] * px + m[1, 1] * py + o[1])
    raise ValueError(f"point {p} not covered")


def _in_triangle(tri, px, py) -> bool:
    signs = []
    for k in range(3):
        (ax, ay), (bx, by) = tri[k], tri[(k + 1) % 3]
        signs.append((bx - ax) * (py - ay) - (by - ay) * (px - ax))
    return all(x >= 0 for x in signs)


def axis_values(spec: AccordionSpec) -> dict[int, tuple]:
    """u(s_j, 0) for j = 1 .. 2N+1, computed in closed form from the frame constants.

    The value at (s_j, 0) comes from the frame whose outer boundary is s_j (odd j) or
    from the inner/outer split at t = s_j (even j).
    """
    s = spec.s
    consts = frame_constants(s)
    out = {}
    for f, (alpha, beta) in enumerate(consts):
        l, t, sm = s[2 * f], s[2 * f + 1], s[2 * f + 2]
        # outer RU label -A2: u(x, 0) = (0, -x) + (alpha, 2t + beta)
        out[2 * f + 1] = (alpha, -l + 2 * t + beta)
        out[2 * f + 2] = (alpha, -t + 2 * t + beta)
        # inner RU label A4: u(x, 0) = (0, x) + (alpha, beta)
        out[2 * f + 3] = (alpha, sm + beta)
    return out


def axis_value_formula(s: Sequence, j: int) -> Fraction:
    """Second component of u(s_j, 0) by direct alternating summation (s indexed from 1)."""
    if j % 2 == 0:
        n = j // 2
        return -s[2 * n - 1] + 2 * sum((-1) ** (k + 1) * s[k - 1] for k in range(1, 2 * n))
    n = (j - 1) // 2
    return s[2 * n] + 2 * sum((-1) ** (k + 1) * s[k - 1] for k in range(1, 2 * n + 1))


def frame_boundary_length(s: Sequence, frames: int) -> Fraction:
    """8 * sum_{n=2}^{N} s_{n+1}: total perimeter of the frame boundaries."""
    return 8 * sum(s[n] for n in range(2, frames + 1))


def jump_length(pm: PiecewiseAffineMap) -> float:
    """Total length of edges shared by two cells with different gradients."""
    se = shared_edges_exact(pm.vertices)
    total = 0.0
    for a, b, p, q in zip(se.left, se.right, se.p, se.q):
        if (pm.matrices[a] != pm.matrices[b]).any():
            total += float(np.hypot(float(q[0] - p[0]), float(q[1] - p[1])))
    return total
