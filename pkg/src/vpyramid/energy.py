"""The singular-set energy: F1 on the singular set, F2 on the gradient jumps, tail bounds.

Inside a covering square Q the distance to the singular set equals the distance to the
boundary of Q, so on the rescaled pyramid the F2 weight is (l/4) (2 - |X|_inf) in local
coordinates X. That weight is piecewise linear along every segment, which makes the
integrals of its powers available in closed form.
"""
from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache

import numpy as np
import shapely

from .cells import shared_edges
from .covering import TriangularDomain, covering_ratio
from .geometry import PreconditionError, SignedMatrix, format_scalar, from_matrix
from .pyramid import pyramid_cells
from .solution import Solution, _segments_of

# ---------------------------------------------------------------------------
# jump segments


@dataclass(frozen=True)
class JumpSegment:
    p: tuple
    q: tuple
    left: SignedMatrix
    right: SignedMatrix

    @property
    def jump(self) -> np.ndarray:
        return self.left.matrix - self.right.matrix

    @property
    def length(self) -> float:
        return math.hypot(self.q[0] - self.p[0], self.q[1] - self.p[1])


@dataclass(frozen=True)
class LocalJumps:
    """Jump segments of the depth-K pyramid in local coordinates on (-2, 2)^2."""

    p: np.ndarray       # (n, 2) float, exact dyadics
    q: np.ndarray
    jump: np.ndarray    # (n, 2, 2) int, left - right
    left: np.ndarray    # cell indices
    right: np.ndarray


@lru_cache(maxsize=16)
def local_jumps(depth: int) -> LocalJumps:
    pm = pyramid_cells(depth)
    se = shared_edges(pm.vertices)
    J = pm.matrices[se.left] - pm.matrices[se.right]
    keep = np.abs(J).reshape(-1, 4).any(axis=1)
    s = float(pm.scale)
    return LocalJumps(se.p[keep] / s, se.q[keep] / s, J[keep], se.left[keep], se.right[keep])


def jump_segments(sol: Solution, region=None) -> list[JumpSegment]:
    """Jump segments of the truncated solution (optionally those meeting ``region``)."""
    lj = local_jumps(sol.depth)
    labels = sol.local.labels
    E = list(SignedMatrix)
    out = []
    for i in range(sol.n_squares):
        R = sol._rot(i)
        P = sol.centers[i] + sol.scales[i] * lj.p @ R.T
        Q = sol.centers[i] + sol.scales[i] * lj.q @ R.T
        if region is not None:
            hit = shapely.intersects(shapely.linestrings(np.stack([P, Q], axis=1)), region)
        else:
            hit = np.ones(len(P), dtype=bool)
        for n in np.flatnonzero(hit):
            left = from_matrix(E[labels[lj.left[n]]].matrix @ R.T)
            right = from_matrix(E[labels[lj.right[n]]].matrix @ R.T)
            out.append(JumpSegment(tuple(P[n]), tuple(Q[n]), left, right))
    return out


# ---------------------------------------------------------------------------
# closed-form integrals of (2 - |X|_inf)^alpha along local segments


def _power_integral(w0: np.ndarray, w1: np.ndarray, length: np.ndarray, alpha: float) -> np.ndarray:
    """Integral over a segment of length L of w^alpha with w linear from w0 to w1 (w >= 0)."""
    w0 = np.maximum(w0, 0.0)
    w1 = np.maximum(w1, 0.0)
    if alpha == 0:
        return length.copy()
    a1 = alpha + 1
    dw = w1 - w0
    scale = np.maximum(np.maximum(w0, w1), 1e-300)
    small = np.abs(dw) <= 1e-3 * scale
    safe = np.where(small, 1.0, dw)
    closed = length * (w1 ** a1 - w0 ** a1) / (a1 * safe)
    # 4-point Gauss-Legendre where the closed form would cancel
    x, wq = np.polynomial.legendre.leggauss(4)
    t = 0.5 * (x + 1)
    vals = (w0[:, None] + t[None] * dw[:, None]) ** alpha
    gl = length * 0.5 * (vals * wq[None]).sum(axis=1)
    return np.where(small, gl, closed)


def _weight_integrals(P: np.ndarray, Q: np.ndarray, t0: np.ndarray, t1: np.ndarray, alpha: float) -> np.ndarray:
    """Integral of (2 - |X|_inf)^alpha over X = P + t (Q - P), t in [t0, t1]."""
    D = Q - P
    seglen = np.hypot(D[:, 0], D[:, 1])
    cands = [t0, t1]
    for num, den in ((P[:, 0] - P[:, 1], D[:, 1] - D[:, 0]),     # X = Y
                     (P[:, 0] + P[:, 1], -(D[:, 0] + D[:, 1])),  # X = -Y
                     (-P[:, 0], D[:, 0]),                        # X = 0
                     (-P[:, 1], D[:, 1])):                       # Y = 0
        with np.errstate(divide="ignore", invalid="ignore"):
            t = np.where(den != 0, num / np.where(den != 0, den, 1.0), t0)
        cands.append(np.clip(t, t0, t1))
    T = np.sort(np.stack(cands, axis=1), axis=1)
    total = np.zeros(len(P))
    for k in range(T.shape[1] - 1):
        a, b = T[:, k], T[:, k + 1]
        Xa = P + a[:, None] * D
        Xb = P + b[:, None] * D
        wa = 2 - np.abs(Xa).max(axis=1)
        wb = 2 - np.abs(Xb).max(axis=1)
        total += _power_integral(wa, wb, (b - a) * seglen, alpha)
    return total


@lru_cache(maxsize=64)
def _local_full(depth: int, alpha: float) -> np.ndarray:
    lj = local_jumps(depth)
    n = len(lj.p)
    return _weight_integrals(lj.p, lj.q, np.zeros(n), np.ones(n), alpha)


def _f2_from(jump: np.ndarray, integrals: np.ndarray) -> np.ndarray:
    """F2[i, j] = sum |jump[j, i]| * integral (row i: derivative, column j: component)."""
    return np.einsum("nji,n->ij", np.abs(jump).astype(float), integrals)


def local_f2(depth: int, alpha: float, half_width: float = 2.0) -> np.ndarray:
    """F2 of the pyramid on (-2, 2)^2 restricted to |X|_inf <= half_width."""
    lj = local_jumps(depth)
    if half_width >= 2:
        return _f2_from(lj.jump, _local_full(depth, alpha))
    t0, t1 = _box_clip(lj.p, lj.q, half_width)
    ok = t1 > t0
    I = np.zeros(len(lj.p))
    I[ok] = _weight_integrals(lj.p[ok], lj.q[ok], t0[ok], t1[ok], alpha)
    return _f2_from(lj.jump, I)


def _box_clip(P: np.ndarray, Q: np.ndarray, w: float):
    """Parameter interval of each segment inside the box |X|_inf <= w (Liang-Barsky)."""
    D = Q - P
    t0 = np.zeros(len(P))
    t1 = np.ones(len(P))
    for k in range(2):
        for sgn in (1.0, -1.0):
            # sgn * (P + t D)_k <= w
            num = w - sgn * P[:, k]
            den = sgn * D[:, k]
            with np.errstate(divide="ignore", invalid="ignore"):
                t = num / np.where(den != 0, den, 1.0)
            t1 = np.where(den > 0, np.minimum(t1, t), t1)
            t0 = np.where(den < 0, np.maximum(t0, t), t0)
            t1 = np.where((den == 0) & (num < 0), -1.0, t1)
    return t0, t1


# ---------------------------------------------------------------------------
# distance-band removal: parts of segments within delta of a polygonal boundary


def _capsule_intervals(P, Q, A, B, delta):
    """For segments P->Q (n) and boundary edges A->B (m): [lo, hi] where d(x(t), AB) <= delta.

    Returns (n, m) arrays; empty intervals have lo > hi.
    """
    D = (Q - P)[:, None, :]
    P = P[:, None, :]
    A = A[None]
    B = B[None]
    E = B - A
    elen2 = (E * E).sum(axis=2)
    lo = np.full(np.broadcast_shapes(D.shape[:2], E.shape[:2]), np.inf)
    hi = np.full_like(lo, -np.inf)

    def merge(l, h):
        nonlocal lo, hi
        ok = l <= h
        lo = np.where(ok, np.minimum(lo, l), lo)
        hi = np.where(ok, np.maximum(hi, h), hi)

    # the two end disks
    for C in (A, B):
        rel = P - C
        a = (D * D).sum(axis=2)
        b = (rel * D).sum(axis=2)
        c = (rel * rel).sum(axis=2) - delta * delta
        disc = b * b - a * c
        sq = np.sqrt(np.maximum(disc, 0))
        safe = np.where(a > 0, a, 1.0)
        l, h = (-b - sq) / safe, (-b + sq) / safe
        merge(np.where(disc >= 0, l, np.inf), np.where(disc >= 0, h, -np.inf))
    # the slab: 0 <= proj <= 1 and |cross| <= delta
    elen = np.sqrt(elen2)
    nrm = np.stack([-E[..., 1], E[..., 0]], axis=-1) / elen[..., None]
    tan = E / elen2[..., None]
    l = np.full(lo.shape, -np.inf)
    h = np.full(lo.shape, np.inf)
    for f0, f1, lim0, lim1 in (
        ((P - A) * nrm, D * nrm, -delta, delta),
        ((P - A) * tan, D * tan, 0.0, 1.0),
    ):
        v0 = f0.sum(axis=2)
        dv = f1.sum(axis=2)
        with np.errstate(divide="ignore", invalid="ignore"):
            ta = (lim0 - v0) / dv
            tb = (lim1 - v0) / dv
        const = dv == 0
        inside = (v0 >= lim0) & (v0 <= lim1)
        l = np.where(const, np.where(inside, l, np.inf), np.maximum(l, np.minimum(ta, tb)))
        h = np.where(const, np.where(inside, h, -np.inf), np.minimum(h, np.maximum(ta, tb)))
    merge(l, h)
    return lo, hi


def _kept_intervals(t0, t1, lo, hi):
    """Subtract the union of [lo, hi] rows from [t0, t1]; returns list of (row, a, b)."""
    out_r, out_a, out_b = [], [], []
    for r in range(len(t0)):
        a, b = t0[r], t1[r]
        if b <= a:
            continue
        cuts = sorted((max(l, a), min(h, b)) for l, h in zip(lo[r], hi[r]) if l <= h and h > a and l < b)
        cur = a
        for l, h in cuts:
            if l > cur:
                out_r.append(r)
                out_a.append(cur)
                out_b.append(l)
            cur = max(cur, h)
        if cur < b:
            out_r.append(r)
            out_a.append(cur)
            out_b.append(b)
    return np.array(out_r, dtype=np.int64), np.array(out_a), np.array(out_b)


def _boundary_edges(sol: Solution) -> np.ndarray:
    return np.array(_segments_of(sol.region.boundary) if sol.region.boundary.geom_type != "MultiLineString"
                    else [s for g in sol.region.boundary.geoms for s in _segments_of(g)], dtype=float)


# ---------------------------------------------------------------------------
# F1 and F2


def _gauss_adaptive(f, a: np.ndarray, b: np.ndarray, tol: float = 1e-10, max_rounds: int = 40):
    """Vectorised adaptive Gauss-Legendre: integrals of f(row, t) over [a, b] per row.

    ``f(rows, t)`` evaluates the integrand at parameters ``t`` (shape (k, q)) for rows.
    """
    x5, w5 = np.polynomial.legendre.leggauss(5)
    x10, w10 = np.polynomial.legendre.leggauss(10)
    rows = np.arange(len(a))
    total = np.zeros(len(a))
    lo, hi = a.copy(), b.copy()

    def rule(r, l, h, x, w):
        t = 0.5 * (l[:, None] + h[:, None]) + 0.5 * (h - l)[:, None] * x[None]
        return 0.5 * (h - l) * (f(r, t) * w[None]).sum(axis=1)

    for _ in range(max_rounds):
        if len(rows) == 0:
            break
        coarse = rule(rows, lo, hi, x5, w5)
        fine = rule(rows, lo, hi, x10, w10)
        done = np.abs(fine - coarse) <= tol * np.maximum(1.0, (hi - lo))
        np.add.at(total, rows[done], fine[done])
        rows, lo, hi = rows[~done], lo[~done], hi[~done]
        mid = 0.5 * (lo + hi)
        rows = np.concatenate([rows, rows])
        lo, hi = np.concatenate([lo, mid]), np.concatenate([mid, hi])
    if len(rows):
        np.add.at(total, rows, rule(rows, lo, hi, x10, w10))
    return total


def F1(sol: Solution, delta: float = 0.0) -> float:
    """Integral of d(x, boundary) over the singular set within Omega_delta."""
    segs = sol.sigma.segments
    if len(segs) == 0:
        return 0.0
    bnd = _boundary_edges(sol)
    P, Q = segs[:, 0], segs[:, 1]
    # segments on the boundary carry zero weight
    probe = np.concatenate([P, Q, 0.5 * (P + Q)])
    d = _dist_to_edges(probe, bnd)
    n = len(P)
    on_boundary = (d[:n] < 1e-12) & (d[n:2 * n] < 1e-12) & (d[2 * n:] < 1e-12)
    P, Q = P[~on_boundary], Q[~on_boundary]
    if len(P) == 0:
        return 0.0
    t0, t1 = np.zeros(len(P)), np.ones(len(P))
    if delta > 0:
        lo, hi = _capsule_intervals(P, Q, bnd[:, 0], bnd[:, 1], delta)
        rows, a, b = _kept_intervals(t0, t1, lo, hi)
    else:
        rows, a, b = np.arange(len(P)), t0, t1
    if len(rows) == 0:
        return 0.0
    L = np.hypot(*(Q - P).T)

    def f(r, t):
        X = P[r][:, None, :] + t[..., None] * (Q - P)[r][:, None, :]
        return _dist_to_edges(X.reshape(-1, 2), bnd).reshape(t.shape) * L[r][:, None]

    vals = _gauss_adaptive(f, a, b)
    return float(math.fsum(vals.tolist()))


def _dist_to_edges(pts: np.ndarray, edges: np.ndarray) -> np.ndarray:
    out = np.empty(len(pts))
    A, B = edges[:, 0], edges[:, 1]
    D = B - A
    ll = (D * D).sum(axis=1)
    step = max(1, 4_000_000 // max(len(edges), 1))
    for i in range(0, len(pts), step):
        p = pts[i:i + step]
        rel = p[:, None, :] - A[None]
        t = np.clip((rel * D[None]).sum(axis=2) / ll[None], 0, 1)
        proj = A[None] + t[..., None] * D[None]
        out[i:i + step] = np.hypot(*(p[:, None, :] - proj).transpose(2, 0, 1)).min(axis=1)
    return out


def _square_f2(sol: Solution, i: int, alpha: float, delta: float, h: float, bnd: np.ndarray,
               needs_delta: bool) -> np.ndarray:
    lj = local_jumps(sol.depth)
    l = 4 * sol.scales[i]
    scale = sol.scales[i] ** (alpha + 1)
    w = 2 - 4 * h / l
    if w <= 0:
        return np.zeros((2, 2))
    if not needs_delta:
        return scale * local_f2(sol.depth, alpha, w)
    t0, t1 = _box_clip(lj.p, lj.q, w) if w < 2 else (np.zeros(len(lj.p)), np.ones(len(lj.p)))
    R = sol._rot(i)
    P = sol.centers[i] + sol.scales[i] * lj.p @ R.T
    Q = sol.centers[i] + sol.scales[i] * lj.q @ R.T
    live = t1 > t0
    lo, hi = _capsule_intervals(P[live], Q[live], bnd[:, 0], bnd[:, 1], delta)
    rows, a, b = _kept_intervals(t0[live], t1[live], lo, hi)
    idx = np.flatnonzero(live)[rows]
    I = np.zeros(len(lj.p))
    if len(idx):
        np.add.at(I, idx, _weight_integrals(lj.p[idx], lj.q[idx], a, b, alpha))
    return scale * _f2_from(lj.jump, I)


def F2(sol: Solution, alpha: float, delta: float = 0.0, h: float = 0.0, threads: int = 1) -> np.ndarray:
    """F2[i, j]: weighted total variation of the derivative in x_i of component j.

    Evaluated over Omega_delta minus the h-neighbourhood of the singular set, at the
    solution's truncation depth.
    """
    if alpha < 0:
        raise ValueError("alpha must be >= 0")
    bnd = _boundary_edges(sol)
    boxes = shapely.box(*sol._outer_boxes().T)
    dmin = shapely.distance(boxes, sol.region.boundary) if delta > 0 else np.full(sol.n_squares, np.inf)
    needs = np.asarray(dmin) <= delta
    # squares without distance clipping only depend on their side
    out = np.zeros((sol.n_squares, 2, 2))
    cache: dict = {}
    for i in np.flatnonzero(~needs):
        key = float(sol.scales[i])
        if key not in cache:
            cache[key] = _square_f2(sol, int(i), alpha, delta, h, bnd, False)
        out[i] = cache[key]
    todo = np.flatnonzero(needs).tolist()
    if todo:
        fn = lambda i: _square_f2(sol, i, alpha, delta, h, bnd, True)
        if threads > 1:
            with ThreadPoolExecutor(threads) as ex:
                res = list(ex.map(fn, todo))
        else:
            res = [fn(i) for i in todo]
        for i, r in zip(todo, res):
            out[i] = r
    return out.sum(axis=0)


# ---------------------------------------------------------------------------
# tail bounds


@lru_cache(maxsize=None)
def square_jump_constant() -> float:
    """Per-unit-side bound on sum_ij |jump_ij| * length attributable to one pyramid square.

    Internal jumps (diagonals, centre lines) are measured on every square type of the
    depth-3 decomposition; the whole boundary is charged at the largest possible entry
    sum of a difference of two matrices of E.
    """
    pm = pyramid_cells(3)
    lj = local_jumps(3)
    key = pm.meta["k"] * 10_000 + pm.meta["i"]
    # same square and same symmetry image: the two cells share the octant centre
    centre = lambda c: pm.vertices[c, 0]
    internal = (key[lj.left] == key[lj.right]) & (centre(lj.left) == centre(lj.right)).all(axis=1)
    w = np.abs(lj.jump).sum(axis=(1, 2)) * np.hypot(*(lj.q - lj.p).T)
    side = 2.0 ** (1 - pm.meta["k"][lj.left]) * 1.0
    per_square: dict = {}
    for n in np.flatnonzero(internal):
        c = tuple(centre(lj.left[n]))
        per_square[c] = per_square.get(c, 0.0) + w[n] / side[n]
    E = np.array([m.matrix for m in SignedMatrix])
    max_jump = max(int(np.abs(a - b).sum()) for a in E for b in E)
    return max(per_square.values()) + 4 * max_jump


def tail_bound_square(a: float, alpha: float, depth: int) -> float:
    """Upper bound on the F2 total (sum over i, j) of levels beyond ``depth`` on a side-a square."""
    if alpha <= 0:
        raise PreconditionError("divergent tail: alpha must be positive")
    c = square_jump_constant()
    series = 2.0 ** (-(depth + 1) * alpha) / (1 - 2.0 ** (-alpha))
    return (float(a) / 4) ** (alpha + 1) * 8 * c * 2.0 ** alpha * 2.0 ** (alpha + 1) * series


def unit_square_constant(alpha: float, depth: int = 6) -> float:
    """Upper bound on the complete F2 total of the side-1 square solution."""
    return float(local_f2(depth, alpha).sum()) / 4 ** (alpha + 1) + tail_bound_square(1.0, alpha, depth)


def tail_bound_triangle(T: TriangularDomain, alpha: float, m_max: int) -> float:
    """Upper bound on the complete F2 total of all squares of steps > m_max."""
    rho = covering_ratio(T, alpha)
    if rho >= 1:
        raise PreconditionError(f"series divergent: ratio {rho:.6g} >= 1")
    M = float(max(T.h(T.a) - T.h(T.b), T.b - T.a))
    return unit_square_constant(alpha) * M ** (alpha + 1) * rho ** (m_max + 1) / (1 - rho)


def covering_tail(sol: Solution, alpha: float) -> float | None:
    """Tail of the complete solution beyond the truncated one; None when not certified."""
    cov = sol.covering
    if cov.kind == "vitali":
        return None
    total = sum(tail_bound_square(float(s.side), alpha, sol.depth) for s in cov.squares)
    C = unit_square_constant(alpha)
    for piece in cov.pending:
        if piece["type"] == "rectangle":
            w, hh = float(piece["w"]), float(piece["h"])
            total += C * (w + hh) * min(w, hh) ** alpha
        elif piece["type"] == "triangle":
            total += tail_bound_triangle(piece["domain"], alpha, piece["m_max"])
    return total


# ---------------------------------------------------------------------------
# report


def _sig(x: float) -> float:
    return float(f"{x:.12g}")


@dataclass
class EnergyEntry:
    delta: float
    h: float
    F1: float
    F2: np.ndarray

    @property
    def F2_total(self) -> float:
        return float(self.F2.sum())


@dataclass
class EnergyReport:
    alpha: float
    depth: int
    entries: list
    tail_bound: float | None
    exact_flags: dict = field(default_factory=dict)
    info: dict = field(default_factory=dict)

    def entry(self, delta: float, h: float) -> EnergyEntry:
        for e in self.entries:
            if e.delta == delta and e.h == h:
                return e
        raise KeyError((delta, h))

    def to_dict(self) -> dict:
        return {
            "alpha": _sig(self.alpha),
            "depth": self.depth,
            "tail_bound": None if self.tail_bound is None else _sig(self.tail_bound),
            "exact_flags": self.exact_flags,
            "info": self.info,
            "entries": [{
                "delta": _sig(e.delta), "h": _sig(e.h),
                "F1": _sig(e.F1),
                "F2": [[_sig(v) for v in row] for row in e.F2.tolist()],
                "F2_total": _sig(e.F2_total),
                "total_with_tail": None if self.tail_bound is None
                else _sig(e.F1 + e.F2_total + self.tail_bound),
            } for e in self.entries],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def energy_report(sol: Solution, alpha: float, deltas=(0.0,), hs=(0.0,), threads: int = 1) -> EnergyReport:
    entries = []
    for d in deltas:
        f1 = F1(sol, d)
        for h in hs:
            entries.append(EnergyEntry(float(d), float(h), f1, F2(sol, alpha, d, h, threads)))
    try:
        tail = covering_tail(sol, alpha) if alpha > 0 else None
    except PreconditionError:
        tail = None
    cov = sol.covering
    info = {
        "squares": cov.__len__(),
        "covering": cov.kind,
        "covering_complete": cov.complete,
        "sum_of_sides": format_scalar(cov.sum_of_sides()) if not isinstance(cov.sum_of_sides(), float)
        else _sig(cov.sum_of_sides()),
        "sigma_length": _sig(sol.sigma.length()),
        "tail_certified": tail is not None,
    }
    flags = {"F1": "adaptive-gauss", "F2": "closed-form", "tail": "geometric-series" if tail is not None else "none"}
    return EnergyReport(float(alpha), sol.depth, entries, tail, flags, info)


def sweep_csv(rows: list[dict]) -> str:
    cols = ["depth", "alpha", "delta", "h", "F1", "F2_11", "F2_12", "F2_21", "F2_22", "F2_total", "tail_bound"]
    out = [",".join(cols)]
    for r in rows:
        out.append(",".join("" if r.get(c) is None else (str(r[c]) if isinstance(r[c], int) else f"{r[c]:.12g}")
                            for c in cols))
    return "\n".join(out) + "\n"


def depth_sweep(build, alpha: float, depths, delta: float = 0.0, h: float = 0.0, threads: int = 1) -> list[dict]:
    """Rows of F1/F2 for each depth; ``build(depth)`` returns the solution."""
    rows = []
    for K in depths:
        sol = build(K)
        f2 = F2(sol, alpha, delta, h, threads)
        try:
            tail = covering_tail(sol, alpha) if alpha > 0 else None
        except PreconditionError:
            tail = None
        rows.append({"depth": K, "alpha": alpha, "delta": delta, "h": h, "F1": F1(sol, delta),
                     "F2_11": f2[0, 0], "F2_12": f2[0, 1], "F2_21": f2[1, 0], "F2_22": f2[1, 1],
                     "F2_total": float(f2.sum()), "tail_bound": tail})
    return rows
