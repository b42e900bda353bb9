import itertools
import math
from fractions import Fraction

import numpy as np
import pytest
import shapely
from hypothesis import given, strategies as st
from shapely.geometry import LineString, Point, Polygon

from vpyramid.geometry import (
    E_MATRICES, LABELS, ConvexCell, SegmentSet, SignedMatrix, clip_polygon_halfplane, disk_polygon_area,
    format_scalar, from_matrix, hausdorff_distance, is_dyadic, label_index, matrix_set_E, minkowski_ratio,
    parse_scalar, polygon_area, tube_area,
)

coords = st.floats(-3, 3, allow_nan=False, allow_infinity=False)


def test_E_is_the_signed_permutation_group():
    mats = {tuple(map(tuple, m.matrix)) for m in matrix_set_E()}
    signed_perms = set()
    for perm in ([[1, 0], [0, 1]], [[0, 1], [1, 0]]):
        for sx, sy in itertools.product((1, -1), repeat=2):
            signed_perms.add(tuple(map(tuple, np.diag([sx, sy]) @ np.array(perm))))
    assert mats == signed_perms
    for a, b in itertools.product(matrix_set_E(), repeat=2):
        assert (a @ b) in matrix_set_E()
        assert (a @ a.T).label == "+A1"


def test_label_order_and_pairs():
    assert LABELS == ("+A1", "-A1", "+A2", "-A2", "+A3", "-A3", "+A4", "-A4")
    for m in SignedMatrix:
        assert (-m).label == ("-" if m.label[0] == "+" else "+") + m.label[1:]
    assert SignedMatrix.from_label("A3") is SignedMatrix.P3
    with pytest.raises(ValueError):
        SignedMatrix.from_label("B1")


def test_label_index_rejects_outside_E():
    m = np.array([[[1, 1], [0, 1]], [[0, -1], [1, 0]]])
    assert label_index(m).tolist() == [-1, LABELS.index("+A4")]
    with pytest.raises(ValueError):
        from_matrix([[2, 0], [0, 1]])
    assert (E_MATRICES[label_index(E_MATRICES)] == E_MATRICES).all()


@given(st.integers(-10 ** 6, 10 ** 6), st.integers(0, 40))
def test_dyadic_numerals_round_trip(p, k):
    x = Fraction(p, 2 ** k)
    assert parse_scalar(format_scalar(x)) == x
    assert is_dyadic(x)


@given(st.integers(-1000, 1000), st.integers(1, 1000))
def test_rational_numerals_round_trip(p, q):
    x = Fraction(p, q)
    assert parse_scalar(format_scalar(x)) == x


def test_parse_scalar_forms():
    assert parse_scalar("0.125") == Fraction(1, 8)
    assert parse_scalar("3/2^4") == Fraction(3, 16)
    assert parse_scalar("-2/6") == Fraction(-1, 3)
    for bad in ("abc", "1/0", ""):
        with pytest.raises(ValueError):
            parse_scalar(bad)


def test_zero_area_cell_rejected():
    with pytest.raises(ValueError, match="zero-area"):
        polygon_area([(0, 0), (1, 1), (2, 2)])


def test_cell_value_and_convexity():
    c = ConvexCell([(0, 0), (1, 0), (0, 1)], SignedMatrix.P4, (Fraction(1, 2), 0))
    assert c.value((1, 2)) == (Fraction(1, 2) - 2, 1)
    assert c.area() == Fraction(1, 2)
    assert c.is_convex_ccw()


@given(st.lists(st.tuples(coords, coords), min_size=3, max_size=8), coords, coords, coords, coords)
def test_halfplane_clip_matches_shapely(pts, px, py, nx, ny):
    hull = shapely.MultiPoint(pts).convex_hull
    if hull.geom_type != "Polygon" or hull.area < 1e-6 or math.hypot(nx, ny) < 1e-3:
        return
    poly = [tuple(map(Fraction, p)) for p in list(hull.exterior.coords)[:-1]]
    p, n = (Fraction(px), Fraction(py)), (Fraction(nx), Fraction(ny))
    clipped = clip_polygon_halfplane(poly, p, n)
    # oracle: intersect with a large box on the kept side
    u = np.array([nx, ny]) / math.hypot(nx, ny)
    d = np.array([-u[1], u[0]]) * 100
    nn = u * 100
    big = Polygon([np.array([px, py]) - d, np.array([px, py]) + d,
                   np.array([px, py]) + d + nn, np.array([px, py]) - d + nn])
    expect = hull.intersection(big).area
    got = 0.0 if clipped is None else abs(float(sum(a[0] * b[1] - b[0] * a[1]
                                                for a, b in zip(clipped, clipped[1:] + clipped[:1])))) / 2
    assert got == pytest.approx(expect, abs=1e-6 * max(1.0, hull.area))


@given(coords, coords, st.floats(0.05, 2))
def test_disk_polygon_area_against_buffered_disk(cx, cy, r):
    poly = [(-1.0, -0.5), (1.5, -1.0), (1.0, 1.0), (-0.5, 1.2)]
    expect = Point(cx, cy).buffer(r, quad_segs=2048).intersection(Polygon(poly)).area
    assert disk_polygon_area((cx, cy), r, poly) == pytest.approx(expect, abs=2e-5 * r * r + 1e-12)


def test_disk_area_exact_cases():
    assert disk_polygon_area((0, 0), 1, [(-5, -5), (5, -5), (5, 5), (-5, 5)]) == pytest.approx(math.pi, abs=1e-14)
    assert disk_polygon_area((0, 0), 1, [(0, 0), (5, 0), (5, 5), (0, 5)]) == pytest.approx(math.pi / 4, abs=1e-14)


@given(st.lists(st.tuples(coords, coords, coords, coords), min_size=1, max_size=12),
       st.lists(st.tuples(coords, coords), min_size=1, max_size=20))
def test_segment_distance_matches_shapely(segs, pts):
    S = SegmentSet([((a, b), (c, d)) for a, b, c, d in segs])
    # shapely's distance breaks down on segments of subnormal length, treat those as points
    geom = shapely.union_all([LineString([(a, b), (c, d)]) if math.hypot(c - a, d - b) > 1e-9 else Point(a, b)
                              for a, b, c, d in segs])
    got = S.distance(pts)
    expect = [geom.distance(Point(p)) for p in pts]
    assert np.allclose(got, expect, atol=1e-9)


def test_collinear_merge_keeps_length():
    S = SegmentSet([((0, 0), (1, 0)), ((1, 0), (2, 0)), ((0.5, 0), (1.5, 0)), ((0, 1), (0, 2))])
    assert len(S.segments) == 2
    assert S.length() == pytest.approx(3.0)


def _sample_set(S: SegmentSet, n=400):
    t = np.linspace(0, 1, n)
    out = [s[0] + t[:, None] * (s[1] - s[0]) for s in S.segments]
    return np.concatenate(out + [S.points]) if len(S.points) else np.concatenate(out)


@given(st.lists(st.tuples(coords, coords, coords, coords), min_size=1, max_size=5),
       st.lists(st.tuples(coords, coords, coords, coords), min_size=1, max_size=5))
def test_hausdorff_brackets_dense_sampling(a, b):
    A = SegmentSet([((p, q), (r, s)) for p, q, r, s in a])
    B = SegmentSet([((p, q), (r, s)) for p, q, r, s in b])
    if not len(A.segments) or not len(B.segments):
        return
    h = hausdorff_distance(A, B)
    sa, sb = _sample_set(A), _sample_set(B)
    sampled = max(B.distance(sa).max(), A.distance(sb).max())
    # the sampled value is a lower estimate; the sampling step bounds the gap
    step = max(np.hypot(*(s[1] - s[0])) for s in np.concatenate([A.segments, B.segments])) / 399
    assert sampled - 1e-9 <= h <= sampled + step + 1e-9


def test_hausdorff_empty_and_symmetric():
    A = SegmentSet([((0, 0), (1, 0))])
    B = SegmentSet([((0, 1), (1, 1))])
    assert hausdorff_distance(A, B) == pytest.approx(1.0)
    assert hausdorff_distance(A, SegmentSet([]), diameter=5) == 5
    with pytest.raises(ValueError):
        hausdorff_distance(A, SegmentSet([]))


def test_tube_area_of_one_segment():
    S = SegmentSet([((0, 0), (3, 0))])
    rho = 1e-2
    assert tube_area(S, rho) == pytest.approx(2 * rho * 3 + math.pi * rho ** 2, rel=1e-5)
    assert minkowski_ratio(S, 1e-5) == pytest.approx(3.0, rel=1e-4)
