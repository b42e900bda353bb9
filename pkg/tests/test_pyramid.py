from fractions import Fraction

import numpy as np
import pytest
from hypothesis import assume, given, strategies as st

from vpyramid.cells import shared_edges, shared_edges_exact
from vpyramid.geometry import LABELS
from vpyramid.pyramid import (
    OCTANT_NAMES, PyramidLayout, gradient_table, pv_eval, pv_eval_many, pyramid_cells, rescale, base_a,
    scalar_pyramid, square_cells, square_kind, x_level,
)

# label layouts read off the gradient maps of the even, odd and diagonal squares,
# octants listed as RU, TR, TL, LU, LL, BL, BR, RL
LAYOUT_EVEN = ["-A1", "-A2", "-A2", "+A1", "+A1", "+A2", "-A4", "+A3"]
LAYOUT_ODD = ["-A1", "-A2", "+A4", "-A3", "-A3", "-A4", "-A4", "+A3"]
LAYOUT_DIAGONAL = ["-A1", "-A2", "+A4", "-A3", "+A1", "+A2", "-A4", "+A3"]

inside = st.floats(-1.999, 1.999, allow_nan=False)


def test_gradient_tables_match_reference_layouts():
    assert [m.label for m in gradient_table("even")] == LAYOUT_EVEN
    assert [m.label for m in gradient_table("odd")] == LAYOUT_ODD
    assert [m.label for m in gradient_table("diagonal")] == LAYOUT_DIAGONAL
    with pytest.raises(ValueError):
        gradient_table("sideways")


def test_square_kinds():
    assert [square_kind(3, i) for i in range(7)] == ["d", "c", "d", "c", "d", "c", "b"]
    assert square_kind(1, 0) == "b"
    with pytest.raises(ValueError):
        square_kind(2, 3)


def test_layout_counts_and_area():
    lay = PyramidLayout(5)
    for k in range(1, 6):
        assert sum(1 for s in lay.squares if s.k == k) == 2 ** k - 1
    # level k fills (x_{k-1}, x_k) x (0, x_k)
    total = sum(s.side ** 2 for s in lay.squares)
    assert total == sum((x_level(k) - x_level(k - 1)) * x_level(k) for k in range(1, 6))
    sq = lay.square(2, 1)
    assert sq.center == (Fraction(5, 4), Fraction(3, 4)) and sq.side == Fraction(1, 2)


def test_rescale():
    assert rescale(base_a, 3, Fraction(1, 16), 0) == Fraction(1, 16)
    with pytest.raises(ValueError):
        rescale(base_a, 0, 0, 0)


@given(inside, inside)
def test_value_is_lipschitz_consistent_with_gradient(x, y):
    v = pv_eval((x, y))
    assume(v.status == "regular")
    M = v.gradient.matrix
    eps = 1e-9
    for i, (dx, dy) in enumerate(((eps, 0), (0, eps))):
        a, b = pv_eval((x + dx, y + dy)), pv_eval((x - dx, y - dy))
        assume(a.status == "regular" and b.status == "regular")
        assume(a.gradient == v.gradient == b.gradient)
        d = (np.array(a.value) - np.array(b.value)) / (2 * eps)
        assert np.allclose(d, M[:, i], atol=1e-5)


@given(inside, inside)
def test_values_vanish_at_the_boundary_rate(x, y):
    v = pv_eval((x, y))
    dist = 2 - max(abs(x), abs(y))
    assert max(abs(v.value[0]), abs(v.value[1])) <= dist + 1e-12


@given(st.integers(-2 ** 10 + 1, 2 ** 10 - 1), st.integers(-2 ** 10 + 1, 2 ** 10 - 1))
def test_exact_and_vectorised_evaluation_agree(p, q):
    x, y = Fraction(p, 2 ** 9), Fraction(q, 2 ** 9)
    v = pv_eval((x, y), depth=12)
    vals, lab, status = pv_eval_many(np.array([[float(x), float(y)]]), 12)
    assert status[0] in (0, 1)
    assert float(v.value[0]) == vals[0, 0] and float(v.value[1]) == vals[0, 1]
    if v.status == "regular":
        assert LABELS[lab[0]] == v.gradient.label


def test_outside_domain_rejected():
    with pytest.raises(ValueError):
        pv_eval((2, 0))
    assert pv_eval((Fraction(1999, 1000), 0), depth=3).status == "untiled"


@pytest.mark.parametrize("depth", [1, 3, 5])
def test_cells_are_continuous_with_gradients_in_E(depth):
    pm = pyramid_cells(depth)
    assert (pm.labels >= 0).all()
    assert (pm.signed_areas() > 0).all()
    se = shared_edges(pm.vertices)
    for end in (se.p, se.q):
        a = np.einsum("nij,nj->ni", pm.matrices[se.left], end) + pm.offsets[se.left]
        b = np.einsum("nij,nj->ni", pm.matrices[se.right], end) + pm.offsets[se.right]
        assert (a == b).all()
    # cells plus untiled frame fill the square
    untiled = 16 - float(x_level(depth)) ** 2 * 4
    assert pm.areas().sum() == pytest.approx(16 - untiled, abs=1e-12)


def test_cell_values_match_pointwise_evaluation():
    pm = pyramid_cells(4)
    c = pm.float_vertices().mean(axis=1)
    vals, lab, status = pv_eval_many(c, 4)
    assert (status == 0).all()
    assert (lab == pm.labels).all()
    assert np.allclose(vals, pm.evaluate(c), atol=1e-14)


def test_fast_shared_edges_match_exact_version():
    pm = pyramid_cells(3)
    fast = shared_edges(pm.vertices)
    exact = shared_edges_exact(pm.vertices)
    key = lambda se: sorted((min(a, b), max(a, b), *sorted([tuple(map(float, p)), tuple(map(float, q))]))
                            for a, b, p, q in zip(se.left, se.right, se.p, se.q))
    assert key(fast) == key(exact)


def test_square_cells_follow_reference_layout():
    from vpyramid.pyramid import octant_of
    pm = pyramid_cells(4)
    for k in range(2, 5):
        for i in range(2 ** k - 1):
            idx = square_cells(k, i, 4)
            table = {"d": LAYOUT_EVEN, "c": LAYOUT_ODD, "b": LAYOUT_DIAGONAL}[square_kind(k, i)]
            cx, cy = 2 - 3 / 2 ** k, (2 * i + 1) / 2 ** k
            for n in idx:
                g = pm.float_vertices()[n].mean(axis=0)
                o = octant_of((g[0] - cx) * 2 ** k, (g[1] - cy) * 2 ** k)
                assert LABELS[pm.labels[n]] == table[o], (k, i, OCTANT_NAMES[o])


def test_scalar_pyramid():
    p = scalar_pyramid([[1, 0], [-1, 0], [0, 1], [0, -1]], 1.0, [0.5, 0.5])
    assert p([[0.5, 0.5]])[0] == 1.0
    assert p([[1.5, 0.5]])[0] == pytest.approx(0.0)
    assert sorted(map(tuple, np.round(p.vertices, 12))) == [(-0.5, -0.5), (-0.5, 1.5), (1.5, -0.5), (1.5, 1.5)]
    assert p.gradient([[1.0, 0.6]]).tolist() == [[-1.0, -0.0]]
    with pytest.raises(ValueError, match="unbounded"):
        scalar_pyramid([[1, 0], [0, 1]], 1.0, [0, 0])


def test_base_function_values():
    from vpyramid.pyramid import base_b, base_c
    assert base_a(0, 0) == 1 and base_a(1, 0) == 0
    assert base_a(Fraction(1, 5), Fraction(-3, 5)) == Fraction(2, 5)
    assert base_b(Fraction(1, 5), Fraction(-3, 5)) == Fraction(4, 5)
    assert base_c(0, Fraction(1, 2)) == 1


@pytest.mark.parametrize("name", ["a", "b", "c", "d"])
def test_base_functions_are_continuous_across_sector_lines(name):
    from vpyramid.pyramid import BASE
    f = BASE[name]
    for t in np.linspace(-1, 1, 41):
        t = Fraction(t).limit_denominator(1000)
        for p in ((t, t), (t, -t)):
            e = Fraction(1, 10 ** 6)
            near = [f(p[0] + dx, p[1] + dy) for dx in (-e, 0, e) for dy in (-e, 0, e)]
            assert max(abs(v - f(*p)) for v in near) <= 2 * e
