import json

import numpy as np
import pytest

from lcsde import geometry as geo
from lcsde import oracles, qp
from lcsde.geometry import ConeMismatchError, GeometryError

from conftest import random_pointed_cone, random_set

S2 = np.sqrt(2.0)


# --- make_cone ---------------------------------------------------------------

def test_cone_normalisation(orthant2):
    C = geo.make_cone([[2.0, 0.0], [0.0, 3.0]])
    assert np.allclose(C.generators, [[1.0, 0.0], [0.0, 1.0]])
    assert C.same_as(orthant2)


def test_cone_dedup_and_minimality():
    C = geo.make_cone([[1.0, 0.0], [1.0, 0.0], [2.0, 0.0]])
    assert np.allclose(C.generators, [[1.0, 0.0]])
    D = geo.make_cone([[1.0, 0.0], [0.0, 1.0], [1 / S2, 1 / S2]])
    assert np.allclose(D.generators, [[1.0, 0.0], [0.0, 1.0]])
    # oracle: (1,1)/sqrt2 is a conic combination of the others (NNLS residual 0)
    assert oracles.cone_residual([1 / S2, 1 / S2], D.generators) <= 1e-12


def test_cone_invariants(rng):
    for _ in range(50):
        C = random_pointed_cone(rng, 3, 5)
        G = C.generators
        assert np.allclose(np.linalg.norm(G, axis=1), 1.0) if len(G) else True
        for i in range(len(G)):
            others = np.delete(G, i, axis=0)
            assert oracles.cone_residual(G[i], others) > 1e-10
        keys = [tuple(np.round(g, 12)) for g in G]
        assert keys == sorted(keys, reverse=True)


def test_cone_errors():
    with pytest.raises(GeometryError):
        geo.make_cone([[1.0, 0.0], [0.0, 0.0]])
    full = geo.make_cone([[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]])
    with pytest.raises(GeometryError):
        geo.make_set([[0.0, 0.0]], full)


def test_polar_basis_membership(orthant2):
    assert orthant2.in_polar([-1.0, -0.5])
    assert not orthant2.in_polar([1.0, -0.5])
    assert geo.trivial_cone(2).in_polar([3.0, 4.0])


# --- make_set ----------------------------------------------------------------

def test_make_set_domination(orthant2):
    A = geo.make_set([[0.0, 0.0], [1.0, 1.0]], orthant2)
    assert np.array_equal(A.vertices, [[0.0, 0.0]])


def test_make_set_keeps_incomparable(orthant2):
    A = geo.make_set([[1.0, 2.0], [3.0, 0.0]], orthant2)
    assert A.vertices.shape == (2, 2)
    # oracle: neither vertex is dominated by the other
    assert not oracles.dominated([1.0, 2.0], [[3.0, 0.0]], orthant2.generators)
    assert not oracles.dominated([3.0, 0.0], [[1.0, 2.0]], orthant2.generators)


def test_make_set_singleton_polytope():
    A = geo.make_set([[5.0, 5.0]], geo.trivial_cone(2))
    assert A.is_compact and np.array_equal(A.vertices, [[5.0, 5.0]])


def test_make_set_empty_rejected(orthant2):
    with pytest.raises(GeometryError):
        geo.make_set(np.zeros((0, 2)), orthant2)


def test_pruned_vertices_are_not_redundant(rng):
    for _ in range(50):
        C = random_pointed_cone(rng, 2, 2)
        A = random_set(rng, C, 8)
        V = A.vertices
        for i in range(V.shape[0]):
            rest = np.delete(V, i, axis=0)
            if rest.shape[0]:
                assert qp.distances(V[i], rest, C.generators)[0] > 1e-10


# --- minkowski_sum -----------------------------------------------------------

def test_sum_translation(orthant2):
    A = geo.minkowski_sum(geo.make_set([[0.0, 0.0]], orthant2), geo.make_set([[1.0, 1.0]], orthant2))
    assert np.array_equal(A.vertices, [[1.0, 1.0]])


def test_sum_cone_idempotent(orthant2):
    C = geo.cone_set(orthant2)
    assert geo.representation_equal(geo.minkowski_sum(C, C), C)


def test_sum_domination(orthant2):
    A = geo.make_set([[0.0, 0.0], [1.0, 0.0]], orthant2)
    B = geo.make_set([[0.0, 0.0], [0.0, 1.0]], orthant2)
    S = geo.minkowski_sum(A, B)
    assert np.array_equal(S.vertices, [[0.0, 0.0]])
    for v in ([1.0, 0.0], [0.0, 1.0], [1.0, 1.0]):
        assert oracles.dominated(v, [[0.0, 0.0]], orthant2.generators)


def test_sum_with_trivial_cone(orthant2):
    A = geo.make_set([[0.0, 0.0]], orthant2)
    P = geo.make_set([[1.0, -1.0], [-1.0, 1.0]], geo.trivial_cone(2))
    S = geo.minkowski_sum(A, P)
    assert S.cone.same_as(orthant2)
    assert S.vertices.shape[0] == 2


def test_sum_rejects_distinct_cones(orthant2):
    A = geo.make_set([[0.0, 0.0]], orthant2)
    B = geo.make_set([[0.0, 0.0]], geo.make_cone([[1.0, -1.0]]))
    with pytest.raises(ConeMismatchError, match="Hausdorff distance would be infinite"):
        geo.minkowski_sum(A, B)


def test_general_sum_merges_cones(orthant2):
    A = geo.make_set([[1.0, 0.0]], orthant2)
    B = geo.make_set([[0.0, 1.0]], geo.make_cone([[1.0, -1.0]]))
    S = geo.general_sum(A, B)
    assert S.cone.same_as(geo.make_cone([[1.0, 0.0], [0.0, 1.0], [1.0, -1.0]]))
    assert np.allclose(S.vertices, [[1.0, 1.0]])


# --- scale, linear_image -----------------------------------------------------

def test_scale_examples(orthant2):
    A = geo.make_set([[1.0, 0.0]], orthant2)
    assert np.array_equal(geo.scale(2.0, A).vertices, [[2.0, 0.0]])
    assert geo.representation_equal(geo.scale(1.0, A), A)
    B = geo.make_set([[2.0, 4.0], [6.0, 0.0]], orthant2)
    assert np.allclose(geo.scale(0.5, B).vertices, [[1.0, 2.0], [3.0, 0.0]])
    for bad in (0.0, -1.0):
        with pytest.raises(GeometryError):
            geo.scale(bad, A)


def test_linear_image_examples(orthant2):
    A = geo.make_set([[1.0, 1.0]], orthant2)
    assert geo.representation_equal(geo.linear_image(np.eye(2), A), A)
    B = geo.linear_image(np.diag([2.0, 3.0]), A)
    assert np.allclose(B.vertices, [[2.0, 3.0]]) and B.cone.same_as(orthant2)
    D = geo.linear_image(np.diag([1.0, 0.0]), A)
    assert np.allclose(D.vertices, [[1.0, 0.0]])
    assert np.allclose(D.cone.generators, [[1.0, 0.0]])


def test_linear_image_dimension_mismatch(orthant2):
    with pytest.raises(GeometryError):
        geo.linear_image(np.eye(3), geo.cone_set(orthant2))


# --- support, distance, Hausdorff ----------------------------------------------

def test_support_function_examples(orthant2):
    A = geo.make_set([[1.0, 2.0], [3.0, 0.0]], orthant2)
    assert geo.support_function(A, [-1.0, 0.0]) == -1.0
    assert geo.support_function(A, [1.0, 0.0]) == np.inf
    assert geo.support_function(geo.cone_set(orthant2), [-0.3, -0.7]) == 0.0


def test_point_distance_examples(orthant2):
    assert geo.point_distance([1.0, 1.0], geo.make_set([[0.0, 0.0]], orthant2)) == 0.0
    A = geo.make_set([[1.0, 1.0]], orthant2)
    # oracle: dense sampling of the boundary of (1,1) + R^2_+
    s = np.linspace(0.0, 5.0, 50001)
    boundary = np.vstack([np.column_stack([1 + s, np.ones_like(s)]), np.column_stack([np.ones_like(s), 1 + s])])
    dense = np.linalg.norm(boundary, axis=1).min()
    assert geo.point_distance([0.0, 0.0], A) == pytest.approx(dense, abs=1e-9) == pytest.approx(S2)
    assert geo.point_distance([2.0, 0.5], A) == pytest.approx(0.5, abs=1e-12)
    assert geo.point_distance([2.0, 0.5], A) == pytest.approx(
        np.linalg.norm(boundary - [2.0, 0.5], axis=1).min(), abs=1e-9)


def test_hausdorff_examples(orthant2):
    C = geo.cone_set(orthant2)
    assert geo.hausdorff_distance(C, C) == 0.0
    A = geo.make_set([[1.0, 1.0]], orthant2)
    r = geo.hausdorff(A, C)
    assert r.excess_ab == 0.0 and r.excess_ba == pytest.approx(S2) and r.h == pytest.approx(S2)
    # oracle: sup over unit u in the polar of |sigma_A(u) - sigma_C(u)| = |u1 + u2|, max sqrt2
    s, refined = oracles.support_hausdorff(A, C, 10_000, 1)
    assert r.h == pytest.approx(refined, abs=1e-6)
    B = geo.make_set([[1.0, 0.0]], orthant2)
    assert geo.hausdorff_distance(C, B) == pytest.approx(1.0, abs=1e-12)
    assert geo.hausdorff_distance(C, B) == pytest.approx(oracles.support_hausdorff(C, B, 10_000, 2)[1], abs=1e-6)


def test_hausdorff_incompatible_cones(orthant2):
    with pytest.raises(ConeMismatchError):
        geo.hausdorff(geo.cone_set(orthant2), geo.make_set([[0.0, 0.0]], geo.trivial_cone(2)))


def test_unbounded_distance_to_cone_rejected():
    # a half-plane shifted set and the orthant: distinct cones, infinite distance
    half = geo.make_set([[0.0, 0.0]], geo.make_cone([[1.0, 0.0], [0.0, 1.0], [-1.0, 1.0]]))
    with pytest.raises(ConeMismatchError):
        geo.hausdorff(half, geo.cone_set(geo.orthant(2)))


# --- join, recession, prune, literals ------------------------------------------

def test_join_examples(orthant2):
    A = geo.make_set([[0.0, 0.0]], orthant2)
    assert geo.representation_equal(geo.convex_join([A]), A)
    J = geo.convex_join([A, geo.make_set([[1.0, 1.0]], orthant2)])
    assert np.array_equal(J.vertices, [[0.0, 0.0]])
    K = geo.convex_join([geo.make_set([[1.0, 0.0]], orthant2), geo.make_set([[0.0, 1.0]], orthant2)])
    assert K.vertices.shape[0] == 2
    with pytest.raises(ConeMismatchError):
        geo.convex_join([A, geo.make_set([[0.0, 0.0]], geo.make_cone([[1.0, 0.0]]))])


def test_recession_cone_examples(orthant2):
    assert geo.recession_cone(geo.make_set([[3.0, -1.0]], orthant2)).same_as(orthant2)
    assert geo.recession_cone(geo.make_set([[3.0, -1.0]], geo.trivial_cone(2))).is_trivial
    C = geo.make_cone([[1.0, 1.0]])
    R = geo.recession_cone(geo.make_set([[1.0, 0.0], [0.0, 1.0]], C))
    assert np.allclose(R.generators, [[1 / S2, 1 / S2]])


def test_recession_directions_stay_inside(rng):
    # every stored generator c satisfies v + t c in A for large t
    for _ in range(20):
        C = random_pointed_cone(rng, 3, 3)
        A = random_set(rng, C)
        for c in C.generators:
            assert geo.point_distance(A.vertices[0] + 1e3 * c, A) <= 1e-7


def test_prune_idempotent(rng):
    for _ in range(50):
        C = random_pointed_cone(rng, 2, 2)
        raw = geo.LCSet(rng.normal(size=(8, 2)), C)
        once = geo.prune(raw)
        assert np.array_equal(geo.prune(once).vertices, once.vertices)


def test_literal_round_trip(orthant2):
    A = geo.make_set([[1.0, 2.0], [3.0, 0.0]], orthant2)
    lit = geo.to_literal(A)
    assert geo.representation_equal(geo.from_literal(json.dumps(lit)), A)
    P = geo.from_literal({"vertices": [[5, 5]]})
    assert P.cone.is_trivial
    with pytest.raises((GeometryError, ValueError)):
        geo.from_literal({"vertices": [[1, 2]], "extra": 1})
    with pytest.raises((GeometryError, ValueError)):
        geo.from_literal({"vertices": [[float("nan"), 2]]})


def test_reduce_vertices_tracks_perturbation():
    C = geo.trivial_cone(2)
    th = np.linspace(0, 2 * np.pi, 40, endpoint=False)
    A = geo.make_set(np.column_stack([np.cos(th), np.sin(th)]), C)
    R, pert = geo.reduce_vertices(A, 10)
    assert R.vertices.shape[0] == 10
    assert pert == pytest.approx(geo.hausdorff_distance(A, R), abs=1e-12)
    assert 0 < pert < 0.1


def test_values_are_immutable(orthant2):
    A = geo.make_set([[1.0, 2.0]], orthant2)
    with pytest.raises(ValueError):
        A.vertices[0, 0] = 3.0
    with pytest.raises(ValueError):
        orthant2.generators[0, 0] = 3.0
