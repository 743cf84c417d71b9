import numpy as np
from hypothesis import given
from hypothesis import strategies as st

from repgame.grid import BeliefGrid


def test_points_are_beliefs_and_cover_vertices():
    for M, r in [(2, 5), (3, 4), (4, 3)]:
        g = BeliefGrid(M, r)
        pts = g.points
        assert np.all(pts >= 0) and np.allclose(pts.sum(axis=1), 1, atol=1e-12)
        assert np.allclose(pts * r, np.round(pts * r))
        from math import comb
        assert len(g) == comb(r + M - 1, M - 1)
        for i in range(M):
            assert np.array_equal(pts[g.vertex_indices[i]], np.eye(M)[i])


def test_grid_points_interpolate_to_themselves():
    g = BeliefGrid(3, 6)
    vals = np.random.default_rng(0).normal(size=len(g))
    assert np.allclose(g.interpolate(vals, g.points), vals, atol=1e-12)


@st.composite
def simplex_point(draw, M):
    x = np.array(draw(st.lists(st.floats(0, 1), min_size=M, max_size=M))) + 1e-12
    return x / x.sum()


@given(mu=simplex_point(3), r=st.integers(1, 12))
def test_barycentric_weights_reproduce_query(mu, r):
    g = BeliefGrid(3, r)
    idx, w = g.locate(mu)
    assert np.all(w >= -1e-12) and abs(w.sum() - 1) <= 1e-12
    assert np.allclose(w @ g.points[idx[0]], mu, atol=1e-12)


@given(mu=simplex_point(4), r=st.integers(1, 6))
def test_linear_functions_are_exact(mu, r):
    g = BeliefGrid(4, r)
    c = np.array([1.0, -2.0, 0.5, 3.0])
    assert np.isclose(g.interpolate(g.points @ c, mu)[0], mu @ c, atol=1e-10)


@given(mu=simplex_point(2), r=st.integers(1, 50))
def test_interpolation_stays_within_cell_values(mu, r):
    g = BeliefGrid(2, r)
    vals = np.sin(np.arange(len(g)))
    idx, _ = g.locate(mu)
    v = g.interpolate(vals, mu)[0]
    assert vals[idx[0]].min() - 1e-12 <= v <= vals[idx[0]].max() + 1e-12
