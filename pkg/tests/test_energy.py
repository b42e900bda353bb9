import math
from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import example, given, settings, strategies as st
from scipy.integrate import quad
from shapely.geometry import LineString, Polygon, box

from vpyramid import energy as en
from vpyramid.covering import LinearProfile, TriangularDomain, rectangle_covering
from vpyramid.geometry import PreconditionError, SegmentSet
from vpyramid.pyramid import pv_eval
from vpyramid.solution import build_solution


def test_constant_weight_segment():
    P, Q = np.array([[-1.0, 1.5]]), np.array([[1.0, 1.5]])
    for alpha, expect in ((0.0, 2.0), (1.0, 1.0), (2.0, 0.5), (0.5, 2 * 0.5 ** 0.5)):
        got = en._weight_integrals(P, Q, np.zeros(1), np.ones(1), alpha)[0]
        assert got == pytest.approx(expect, rel=1e-14)


@settings(max_examples=40)
@given(st.floats(-2, 2), st.floats(-2, 2), st.floats(-2, 2), st.floats(-2, 2), st.floats(0, 3))
@example(0.00390625, 1.0, 1.0, 0.0, 1.0)
@example(0.0, 0.04608480838009156, 2.0, -2.0, 0.5)
def test_weight_integral_against_quadrature(x0, y0, x1, y1, alpha):
    L = math.hypot(x1 - x0, y1 - y0)
    if L < 1e-6:
        return
    f = lambda t: (2 - max(abs(x0 + t * (x1 - x0)), abs(y0 + t * (y1 - y0)))) ** alpha * L
    # kinks of the weight: crossings of x = y, x = -y, x = 0, y = 0
    dx, dy = x1 - x0, y1 - y0
    cand = []
    for num, den in ((y0 - x0, dx - dy), (-(x0 + y0), dx + dy), (-x0, dx), (-y0, dy)):
        if abs(den) > 1e-15:
            cand.append(num / den)
    br = [0.0] + sorted({t for t in cand if 1e-9 < t < 1 - 1e-9}) + [1.0]
    expect = sum(quad(f, a, b, limit=200, epsabs=1e-14, epsrel=1e-13)[0] for a, b in zip(br, br[1:]))
    got = en._weight_integrals(np.array([[x0, y0]]), np.array([[x1, y1]]), np.zeros(1), np.ones(1), alpha)[0]
    assert got == pytest.approx(expect, rel=1e-8, abs=1e-10)


def test_f2_against_independent_oracle():
    depth, alpha = 3, 1.0
    lj = en.local_jumps(depth)
    oracle = np.zeros((2, 2))
    for p, q in zip(lj.p, lj.q):
        t = (q - p) / np.hypot(*(q - p))
        n = np.array([-t[1], t[0]])
        mid = (p + q) / 2
        a = pv_eval(tuple(mid + 1e-7 * n)).gradient.matrix
        b = pv_eval(tuple(mid - 1e-7 * n)).gradient.matrix
        L = np.hypot(*(q - p))
        w = quad(lambda s: (2 - np.abs(p + s * (q - p)).max()) ** alpha * L, 0, 1,
                 points=[0.5], epsabs=1e-13)[0]
        oracle += np.abs(a - b).T * w
    assert np.allclose(en.local_f2(depth, alpha), oracle, rtol=1e-10)


def test_f1_constant_distance_segment():
    fake = SimpleNamespace(sigma=SegmentSet([((3, 1), (7, 1))]), region=box(0, 0, 10, 10))
    assert en.F1(fake) == pytest.approx(4.0, abs=1e-8)
    assert en.F1(fake, delta=0.5) == pytest.approx(4.0, abs=1e-8)
    assert en.F1(fake, delta=1.0) == 0.0


def test_f1_of_rectangle():
    sol = build_solution(rectangle_covering(3, 2), 3)
    # x = 2 gives the integral of min(y, 2 - y, 1), y = 1 the integral of 3 - x over [2, 3]
    assert en.F1(sol) == pytest.approx(1.5, abs=1e-10)
    assert en.F1(sol, 0.1) == pytest.approx(0.99 + 0.495, abs=1e-10)
    assert en.F1(sol) <= 5 ** 0.5 * 4 * 5


def test_f1_vanishes_on_single_square():
    assert en.F1(build_solution(rectangle_covering(1, 1), 4)) == 0.0


@settings(max_examples=40)
@given(st.floats(0, 4), st.floats(0, 4), st.floats(0, 4), st.floats(0, 4), st.floats(0.01, 1))
def test_distance_band_removal_matches_shapely(x0, y0, x1, y1, delta):
    if math.hypot(x1 - x0, y1 - y0) < 1e-6:
        return
    poly = Polygon([(0, 0), (4, 0), (4, 3), (2, 4), (0, 3)])
    c = np.array(poly.exterior.coords)
    bnd = np.stack([c[:-1], c[1:]], axis=1)
    P, Q = np.array([[x0, y0]]), np.array([[x1, y1]])
    # a segment lying on the band boundary is dropped here (open Omega_delta) but kept by shapely
    cross = lambda u, v: u[0] * v[1] - u[1] * v[0]
    for a, b in bnd:
        e = (b - a) / np.hypot(*(b - a))
        if abs(cross(e, (x1 - x0, y1 - y0))) < 1e-9 and abs(abs(cross(e, (x0 - a[0], y0 - a[1]))) - delta) < 1e-9:
            return
    lo, hi = en._capsule_intervals(P, Q, bnd[:, 0], bnd[:, 1], delta)
    rows, a, b = en._kept_intervals(np.zeros(1), np.ones(1), lo, hi)
    got = float(((b - a) * math.hypot(x1 - x0, y1 - y0)).sum())
    band = poly.exterior.buffer(delta, quad_segs=512)
    expect = LineString([(x0, y0), (x1, y1)]).difference(band).length
    assert got == pytest.approx(expect, abs=1e-4 * delta + 1e-9)


def test_box_clip():
    P, Q = np.array([[-2.0, 0.0], [0.0, -2.0]]), np.array([[2.0, 0.0], [0.0, 2.0]])
    t0, t1 = en._box_clip(P, Q, 1.0)
    assert np.allclose(t0, 0.25) and np.allclose(t1, 0.75)


def test_jump_segments_are_rank_one_compatible():
    sol = build_solution(rectangle_covering(1, 1), 3)
    segs = en.jump_segments(sol)
    assert segs
    for s in segs:
        assert s.left != s.right
        t = np.array(s.q) - np.array(s.p)
        assert np.allclose(s.jump @ t, 0)
        assert set(np.abs(s.jump).ravel()) <= {0, 1, 2}


def test_jump_length_per_square_is_bounded():
    sol = build_solution(rectangle_covering(4, 4, origin=(-2, -2)), 3)
    region = box(0, 0, 1, 1)  # Q[1, 0]
    inside = [s for s in en.jump_segments(sol, region)
              if LineString([s.p, s.q]).intersection(region).length > 0]
    length = sum(LineString([s.p, s.q]).intersection(region).length for s in inside)
    # boundary, two diagonals and two centre lines of a unit square
    assert length <= 4 + 2 * 2 ** 0.5 + 2 + 1e-12


def test_scaling_law():
    f1 = en.F2(build_solution(rectangle_covering(1, 1), 5), 0.7)
    f2 = en.F2(build_solution(rectangle_covering(2, 2), 5), 0.7)
    assert np.allclose(f2, 2 ** 1.7 * f1, rtol=1e-12)


def test_monotone_truncation_grid():
    vals = {}
    for K in (3, 4, 5):
        sol = build_solution(rectangle_covering(3, 2), K)
        for d in (0.0, 0.05, 0.2):
            for h in (0.0, 0.01, 0.05):
                vals[K, d, h] = en.F2(sol, 1.0, d, h)
    for (K, d, h), v in vals.items():
        assert (v >= 0).all()
        if K < 5:
            assert (vals[K + 1, d, h] >= v - 1e-12).all()
        for d2 in (0.0, 0.05):
            if d2 < d:
                assert (vals[K, d2, h] >= v - 1e-12).all()
        for h2 in (0.0, 0.01):
            if h2 < h:
                assert (vals[K, d, h2] >= v - 1e-12).all()


def test_large_excision_removes_everything():
    sol = build_solution(rectangle_covering(1, 1), 3)
    assert (en.F2(sol, 1.0, 0.0, 0.5) == 0).all()


def test_alpha_zero_is_jump_length_weighted():
    lj = en.local_jumps(2)
    expect = np.einsum("nji,n->ij", np.abs(lj.jump).astype(float), np.hypot(*(lj.q - lj.p).T))
    assert np.allclose(en.local_f2(2, 0.0), expect)


def test_tail_bounds():
    with pytest.raises(PreconditionError, match="divergent tail"):
        en.tail_bound_square(1, 0.0, 4)
    assert en.tail_bound_square(1, 1.0, 5) == pytest.approx(en.tail_bound_square(1, 1.0, 4) / 2)
    assert en.tail_bound_square(3, 1.0, 4) == pytest.approx(9 * en.tail_bound_square(1, 1.0, 4))
    T = TriangularDomain(0.0, 1.0, LinearProfile(-1, 1))
    assert en.tail_bound_triangle(T, 1.0, 3) / en.tail_bound_triangle(T, 1.0, 4) == pytest.approx(2.0)
    with pytest.raises(PreconditionError, match="series divergent"):
        en.tail_bound_triangle(T, 0.0, 3)


def test_report_json_and_threads():
    cov = rectangle_covering(3, 2)
    sol = build_solution(cov, 4)
    a = en.energy_report(sol, 1.0, [0.0, 0.1], [0.0, 0.02], threads=1).to_json()
    b = en.energy_report(sol, 1.0, [0.0, 0.1], [0.0, 0.02], threads=4).to_json()
    assert a == b
    rep = en.energy_report(sol, 1.0)
    assert rep.info["sum_of_sides"] == "4" and rep.tail_bound > 0
    assert rep.entry(0.0, 0.0).F1 == pytest.approx(1.5)


def test_vitali_has_no_tail_certificate():
    from vpyramid.covering import vitali_dyadic_covering
    sol = build_solution(vitali_dyadic_covering([(0, 0), (2, 0), (0, 2)], 2), 2)
    assert en.energy_report(sol, 1.0).tail_bound is None


def test_sweep_csv():
    rows = en.depth_sweep(lambda K: build_solution(rectangle_covering(1, 1), K), 1.0, [2, 3])
    text = en.sweep_csv(rows)
    lines = text.strip().splitlines()
    assert lines[0].startswith("depth,alpha") and len(lines) == 3
    assert float(lines[2].split(",")[9]) > float(lines[1].split(",")[9])
