import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from vpyramid.cells import shared_edges_exact
from vpyramid.covering import Covering, LinearProfile, TriangularDomain, rectangle_covering, triangle_covering, \
    vitali_dyadic_covering
from vpyramid.geometry import LABELS, PreconditionError
from vpyramid.io import dumps_cells, loads_cells
from vpyramid.pyramid import pv_eval
from vpyramid.solution import build_solution, cells_meeting_ball, density_profile, strip_areas, verify_solution


@pytest.fixture(scope="module")
def big_square():
    return build_solution(rectangle_covering(4, 4, origin=(-2, -2)), 6)


@pytest.fixture(scope="module")
def rect32():
    return build_solution(rectangle_covering(3, 2), 4)


def test_pyramid_solution_verifies(big_square):
    rep = verify_solution(big_square, samples=3000)
    assert rep.passed
    assert rep.inclusion_fraction == 1.0 and rep.continuity_defect == 0.0
    assert 0 < rep.edge_square_ratio <= 1
    assert rep.h1 and all(rep.h1.values())


def test_corrupted_cell_is_localised():
    sol = build_solution(rectangle_covering(1, 1), 3)
    sol.local.matrices[17] = [[1, 1], [0, 1]]
    rep = verify_solution(sol, samples=20000)
    assert not rep.passed
    assert rep.inclusion_fraction < 1 and 17 in rep.inclusion_failures
    assert set(rep.inclusion_failures) == {17}


def test_solution_is_the_rescaled_pyramid(rect32):
    rng = np.random.default_rng(1)
    pts = rng.uniform([0, 0], [3, 2], size=(200, 2))
    vals = rect32.evaluate(pts)
    for p, v in zip(pts, vals):
        if np.isnan(v).any():
            continue
        sq = next(s for s in rect32.covering.squares
                  if all(abs(p[k] - float(s.center[k])) < float(s.side) / 2 for k in range(2)))
        l, c = float(sq.side), np.array([float(sq.center[0]), float(sq.center[1])])
        expect = np.array(pv_eval(tuple(4 * (p - c) / l)).value, dtype=float) * l / 4
        assert np.allclose(v, expect, atol=1e-12)


def test_exact_continuity_across_covering_squares():
    sol = build_solution(rectangle_covering(3, 2), 2)
    pm = sol.cell_map(exact=True)
    se = shared_edges_exact(pm.vertices)
    assert len(se) > 0
    for a, b, p, q in zip(se.left, se.right, se.p, se.q):
        for x in (p, q):
            ua = pm.matrices[a] @ np.array(x, dtype=object) + pm.offsets[a]
            ub = pm.matrices[b] @ np.array(x, dtype=object) + pm.offsets[b]
            assert (ua == ub).all()


def test_singular_set_of_single_square_is_its_boundary():
    sol = build_solution(rectangle_covering(1, 1), 3)
    assert sol.sigma.length() == pytest.approx(4.0)
    rep = verify_solution(sol, samples=100, deltas=[0.1])
    assert rep.h1[0.1] and rep.h2[0.1]["length"] == 0


def test_rectangle_singular_set_length_bound(rect32):
    assert rect32.sigma.length() <= 4 * (3 + 2) + 1e-12
    assert rect32.sigma.length() == pytest.approx(13.0)


def test_triangle_and_vitali_solutions_verify():
    T = TriangularDomain(Fraction(0), Fraction(1), LinearProfile(-1, 1))
    for cov in (triangle_covering(T, 3), vitali_dyadic_covering([(0, 0), (3, 0), (3, 1), (0, 2)], 3)):
        rep = verify_solution(build_solution(cov, 3), samples=2000, deltas=[0.25])
        assert rep.passed


def test_empty_covering_rejected():
    with pytest.raises(ValueError, match="empty"):
        build_solution(Covering([], [[(0, 0), (1, 0), (1, 1)]]), 3)


def test_density_at_boundary_point():
    sol = build_solution(rectangle_covering(4, 4, origin=(-2, -2)), 7)
    (rep,) = density_profile(sol, (2, 0), [1 / 8])
    assert rep.threshold == pytest.approx(1 / 8192)
    assert rep.cleared == 8 and rep.min_area() >= 1 / 8192


def test_density_inside_a_cell_is_full():
    sol = build_solution(rectangle_covering(4, 4, origin=(-2, -2)), 4)
    x = (0.3, 0.1)  # inside one octant of the central square
    (rep,) = density_profile(sol, x, [1e-3])
    assert max(rep.areas.values()) == pytest.approx(math.pi * 1e-6, rel=1e-12)
    assert cells_meeting_ball(sol, x, 1e-3) == 1


def test_density_preconditions():
    sol = build_solution(rectangle_covering(4, 4, origin=(-2, -2)), 4)
    with pytest.raises(PreconditionError, match="insufficient depth"):
        density_profile(sol, (2, 0), [1 / 8])
    with pytest.raises(ValueError):
        density_profile(sol, (0, 0), [1.0])


@pytest.mark.parametrize("k", [2, 3, 4])
def test_strip_areas_sum_and_bound(k):
    for j in range(2 ** k - 2):
        areas = strip_areas(k, j)
        side = Fraction(1, 2 ** (k - 1))
        total = sum(areas.values())
        # the diagonal square contributes only its lower half
        full = j + 1 < 2 ** k - 2
        assert total == (2 * side ** 2 if full else side ** 2 + side ** 2 / 2)
        if full:
            assert min(areas.values()) >= Fraction(1, 8) / 4 ** k


def test_strip_with_half_diagonal_square_misses_a_label():
    areas = strip_areas(3, 5)
    assert min(areas.values()) == 0


def test_cell_export_round_trip(rect32):
    sol = build_solution(rectangle_covering(3, 2), 2)
    pm = sol.cell_map(exact=True)
    text = dumps_cells(pm)
    back = loads_cells(text)
    assert dumps_cells(back) == text
    assert (back.labels == pm.labels).all()
    with pytest.raises(ValueError):
        loads_cells("nonsense")
    with pytest.raises(ValueError):
        loads_cells(text.replace("cells ", "cells 1"))


@settings(max_examples=20)
@given(st.integers(1, 6), st.integers(1, 6))
def test_rectangle_solutions_have_zero_trace(a, b):
    sol = build_solution(rectangle_covering(a, b), 2)
    rep = verify_solution(sol, samples=200, deltas=[])
    assert rep.trace_ratio <= 1 and rep.continuity_defect == 0


def test_piecewise_constant_radius_is_distance_to_sigma():
    # cells accumulate only at sigma: balls inside it stop gaining cells with depth, larger ones do not
    # (depth 7 tiles every ball of radius 0.9 d once d > 0.15)
    sols = {K: build_solution(rectangle_covering(3, 2), K) for K in (7, 9)}
    rng = np.random.default_rng(5)
    pts = rng.uniform([0.1, 0.1], [2.9, 1.9], size=(12, 2))
    dist = sols[7].sigma.distance(pts)
    assert (dist > 0.15).sum() >= 4
    for x, d in zip(pts[dist > 0.15], dist[dist > 0.15]):
        inner = [cells_meeting_ball(sols[K], x, 0.9 * d) for K in (7, 9)]
        outer = [cells_meeting_ball(sols[K], x, 1.1 * d) for K in (7, 9)]
        assert inner[0] == inner[1]
        assert outer[1] > outer[0]
