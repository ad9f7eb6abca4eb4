"""Lattice-ball construction: frozen examples, brute-force oracles, invariants."""

import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from plapflow import (VertexSet, ball_volume_profile, boundary_measure,
                      build_lattice_ball, graph_dump, sub_ball)

# Independently derived counts/masses (enumeration by hand or itertools below).
Z2_R50_VERTEX_COUNT = 5101          # 2R^2 + 2R + 1 at R = 50
Z1_R3_BALL3_MEASURE = 12.0          # degrees 2,2,2,2,2,1,1 summed
Z2_BOUNDARY_B5_IN_R8 = 44.0         # crossing edges of B(5), brute force below

GOLDEN_DUMP_Z1_R1 = (
    "1 1 3 4\n"
    "0 0 2 0\n"
    "1 -1 1 1\n"
    "2 1 1 1\n"
    "0 1 1\n"
    "0 2 1\n"
    "1 0 1\n"
    "2 0 1\n"
)


def brute_force_ball(N, R):
    """All l1-ball lattice points via plain iteration (the oracle)."""
    pts = [p for p in itertools.product(range(-R, R + 1), repeat=N)
           if sum(abs(c) for c in p) <= R]
    return set(pts)


def test_line_r2_degrees_and_cut(line_r2):
    g = line_r2
    coords = [tuple(c) for c in g.coords]
    assert coords == [(0,), (-1,), (1,), (-2,), (2,)]
    assert g.m.tolist() == [2.0, 2.0, 2.0, 1.0, 1.0]
    assert g.cut_w.tolist() == [0.0, 0.0, 0.0, 1.0, 1.0]
    assert g.dist.tolist() == [0, 1, 1, 2, 2]


def test_z2_r50_vertex_count():
    g = build_lattice_ball(2, 50)
    assert g.num_vertices == Z2_R50_VERTEX_COUNT


def test_z1_subball_measure():
    g = build_lattice_ball(1, 3)
    assert sub_ball(g, 3).measure == Z1_R3_BALL3_MEASURE
    assert sub_ball(g, 0).measure == 2.0    # origin keeps both neighbors


def test_z3_origin_full_degree(cube_r6):
    g = cube_r6
    assert g.m[0] == 6.0
    assert g.cut_w[0] == 0.0
    assert len(g.neighbors(0)) == 6


def test_vertex_count_matches_enumeration_oracle(cube_r6):
    assert cube_r6.num_vertices == len(brute_force_ball(3, 6))


def test_boundary_measure_brute_force(plane_r8):
    g = plane_r8
    U = sub_ball(g, 5)
    # Oracle: count unit-weight nearest-neighbor pairs with exactly one
    # endpoint at l1 distance <= 5, both endpoints inside B(8).
    ball = brute_force_ball(2, 8)
    count = 0
    for (x, y) in ball:
        for dx, dy in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            q = (x + dx, y + dy)
            if q in ball and abs(x) + abs(y) <= 5 < abs(q[0]) + abs(q[1]):
                count += 1
    assert count == Z2_BOUNDARY_B5_IN_R8
    assert boundary_measure(g, U) == pytest.approx(Z2_BOUNDARY_B5_IN_R8)


def test_boundary_of_everything_is_zero(plane_r8):
    whole = VertexSet.from_indices(plane_r8, np.arange(plane_r8.num_vertices))
    assert boundary_measure(plane_r8, whole) == 0.0


def test_graph_dump_golden():
    assert graph_dump(build_lattice_ball(1, 1)) == GOLDEN_DUMP_Z1_R1


def test_graph_dump_header_counts(cube_r6):
    head = graph_dump(cube_r6).splitlines()[0].split()
    assert [int(x) for x in head] == [3, 6, cube_r6.num_vertices,
                                      cube_r6.num_edge_entries]


def test_volume_profile_growth_band():
    g = build_lattice_ball(2, 30)
    radii, volumes, (lo, hi) = ball_volume_profile(g)
    assert radii.tolist() == list(range(31))
    assert np.all(np.diff(volumes) > 0)
    assert volumes[-1] == pytest.approx(g.m.sum())
    assert 0 < lo <= hi
    assert hi / lo < 3.0


def test_ordering_origin_first_then_shells(plane_r8):
    g = plane_r8
    assert tuple(g.coords[0]) == (0, 0)
    shells = np.abs(g.coords).sum(axis=1)
    assert np.all(np.diff(shells) >= 0)
    # Lexicographic within each shell.
    for s in range(g.R + 1):
        block = g.coords[shells == s]
        assert sorted(map(tuple, block)) == list(map(tuple, block))


def test_index_of_roundtrip(plane_r8):
    g = plane_r8
    for i in (0, 1, g.num_vertices // 2, g.num_vertices - 1):
        assert g.index_of(g.coords[i]) == i
    with pytest.raises(KeyError):
        g.index_of((g.R + 1, 0))


def test_invalid_arguments_rejected():
    with pytest.raises(ValueError):
        build_lattice_ball(0, 3)
    with pytest.raises(ValueError):
        build_lattice_ball(5, 3)
    with pytest.raises(ValueError):
        build_lattice_ball(2, 0)
    with pytest.raises(ValueError):
        sub_ball(build_lattice_ball(1, 2), 3)


def test_custom_weights_applied_and_checked():
    def w(x, y):
        return 1.0 + 0.5 * (abs(int(x[0])) + abs(int(y[0])))

    g = build_lattice_ball(1, 2, weight_fn=w)
    # Edge (0,1): w = 1.5; edge (0,-1): 1.5; m(0) = 3.0.
    assert g.m[0] == pytest.approx(3.0)
    # Rim vertex 2: inner edge (2,1) w = 2.5, cut edge (2,3) w = 3.5.
    assert g.m[g.index_of((2,))] == pytest.approx(2.5)
    assert g.cut_w[g.index_of((2,))] == pytest.approx(3.5)

    def asym(x, y):
        return 1.0 + 0.1 * float(x[0])

    with pytest.raises(ValueError, match="symmetric"):
        build_lattice_ball(1, 2, weight_fn=asym)
    with pytest.raises(ValueError, match="positive"):
        build_lattice_ball(1, 2, weight_fn=lambda x, y: 0.0)


@settings(max_examples=40, deadline=None)
@given(N=st.integers(1, 3), R=st.integers(1, 5))
def test_ball_matches_brute_force(N, R):
    g = build_lattice_ball(N, R)
    oracle = brute_force_ball(N, R)
    assert g.num_vertices == len(oracle)
    assert set(map(tuple, g.coords)) == oracle


@settings(max_examples=40, deadline=None)
@given(N=st.integers(1, 3), R=st.integers(1, 5))
def test_unit_degree_plus_cut_is_2N(N, R):
    g = build_lattice_ball(N, R)
    np.testing.assert_allclose(g.m + g.cut_w, 2.0 * N)


@settings(max_examples=40, deadline=None)
@given(N=st.integers(1, 3), R=st.integers(1, 5))
def test_bfs_distance_equals_l1_norm(N, R):
    g = build_lattice_ball(N, R)
    np.testing.assert_array_equal(g.dist, np.abs(g.coords).sum(axis=1))


@settings(max_examples=30, deadline=None)
@given(N=st.integers(1, 3), R=st.integers(1, 4))
def test_adjacency_is_symmetric(N, R):
    g = build_lattice_ball(N, R)
    src = np.repeat(np.arange(g.num_vertices), np.diff(g.indptr))
    pairs = {(int(a), int(b)): float(w)
             for a, b, w in zip(src, g.indices, g.weights)}
    for (a, b), w in pairs.items():
        assert pairs[(b, a)] == w
        # Neighbors differ by exactly one step.
        assert np.abs(g.coords[a] - g.coords[b]).sum() == 1
