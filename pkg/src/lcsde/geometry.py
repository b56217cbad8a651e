"""Cone-generated convex sets ``conv(V) + C`` and their arithmetic.

Every set is stored as a finite vertex list plus a finitely generated cone.
Sets sharing a cone form a space closed under Minkowski sums, positive
scaling and closed convex hulls of finite unions, and the Hausdorff distance
between two of them is finite and attained at vertices.
"""
from __future__ import annotations

import functools
import hashlib
import json
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from . import qp

REP_TOL = 1e-10  # membership / redundancy
ROUND_DIGITS = 12  # canonical ordering key
POLAR_TOL = 1e-12


class GeometryError(ValueError):
    pass


class ConeMismatchError(GeometryError):
    pass


def _readonly(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


def _lex_order(rows):
    if rows.shape[0] <= 1:
        return np.arange(rows.shape[0])
    key = np.round(rows, ROUND_DIGITS) + 0.0  # -0.0 -> 0.0
    return np.lexsort(key.T[::-1])


def _dedup_sorted(rows):
    if rows.shape[0] <= 1:
        return rows
    key = np.round(rows, ROUND_DIGITS) + 0.0
    keep = np.ones(rows.shape[0], dtype=bool)
    keep[1:] = np.any(key[1:] != key[:-1], axis=1)
    return rows[keep]


@dataclass(frozen=True, eq=False)
class ConeSpec:
    """Finitely generated closed convex cone, canonical unit generators as rows."""

    dimension: int
    generators: np.ndarray

    @property
    def polar_basis(self):
        # C° = {u : <u, g> <= 0 for every generator row g}
        return self.generators

    @property
    def is_trivial(self):
        return self.generators.shape[0] == 0

    def contains(self, v, tol=REP_TOL):
        v = np.asarray(v, dtype=float)
        if self.is_trivial:
            return bool(np.linalg.norm(v) <= tol)
        return bool(cone_distance(v, self) <= tol)

    def in_polar(self, u, tol=POLAR_TOL):
        if self.is_trivial:
            return True
        return bool((self.generators @ np.asarray(u, dtype=float)).max() <= tol)

    @functools.cached_property
    def _full_space(self):
        if self.generators.shape[0] <= self.dimension:
            return False
        E = np.vstack([np.eye(self.dimension), -np.eye(self.dimension)])
        dist = qp.distances(E, np.zeros((1, self.dimension)), self.generators)
        return bool(dist.max() <= REP_TOL)

    def is_full_space(self):
        return self._full_space

    @functools.cached_property
    def _complement_projector(self):
        d = self.dimension
        if self.is_trivial:
            return np.eye(d)
        neg = -self.generators
        dist = qp.distances(neg, np.zeros((1, d)), self.generators)
        L = self.generators[dist <= REP_TOL]
        if L.shape[0] == 0:
            return np.eye(d)
        U, s, _ = np.linalg.svd(L.T, full_matrices=False)
        Q = U[:, s > 1e-9]
        return np.eye(d) - Q @ Q.T

    def lineality_complement_projector(self):
        return self._complement_projector

    def same_as(self, other):
        if self is other:
            return True
        if self.dimension != other.dimension:
            return False
        if self.generators.shape == other.generators.shape and np.allclose(
            self.generators, other.generators, atol=1e-9, rtol=0.0
        ):
            return True
        if self.is_trivial or other.is_trivial:
            return False
        # non-pointed cones have no unique minimal generator set
        z = np.zeros((1, self.dimension))
        return bool(
            qp.distances(self.generators, z, other.generators).max() <= 1e-9
            and qp.distances(other.generators, z, self.generators).max() <= 1e-9
        )

    @functools.cached_property
    def cone_id(self):
        payload = json.dumps(
            [self.dimension, np.round(self.generators, ROUND_DIGITS).tolist()]
        ).encode()
        return hashlib.sha1(payload).hexdigest()[:12]

    def __repr__(self):
        gens = np.round(self.generators, 6).tolist()
        return f"ConeSpec(d={self.dimension}, generators={gens})"


def cone_distance(v, cone):
    return float(qp.distances(np.atleast_2d(v), np.zeros((1, cone.dimension)), cone.generators)[0])


@functools.lru_cache(maxsize=4096)
def _make_cone_cached(shape, raw_bytes):
    raw = np.frombuffer(raw_bytes, dtype=float).reshape(shape)
    d = shape[1]
    norms = np.linalg.norm(raw, axis=1)
    if np.any(norms <= 1e-14):
        raise GeometryError("zero vector among cone generators")
    G = raw / norms[:, None]
    G = G[_lex_order(G)[::-1]]  # descending: e_1 before e_2
    G = _dedup_sorted(G)
    keep = np.ones(G.shape[0], dtype=bool)
    zero = np.zeros((1, d))
    for i in range(G.shape[0]):
        others = keep.copy()
        others[i] = False
        if not others.any():
            continue
        dist = qp.distances(G[i:i + 1], zero, G[others])[0]
        if dist <= REP_TOL:
            keep[i] = False
    return ConeSpec(dimension=d, generators=_readonly(G[keep]))


def make_cone(raw_generators, dimension=None) -> ConeSpec:
    """Canonical cone from raw generators: unit, deduplicated, minimal, sorted.

    An empty generator list gives the trivial cone ``{0}`` (``dimension``
    must then be given).
    """
    raw = np.asarray(raw_generators, dtype=float)
    if raw.size == 0:
        if dimension is None:
            raise GeometryError("dimension required for the trivial cone")
        return ConeSpec(dimension=int(dimension), generators=_readonly(np.zeros((0, int(dimension)))))
    raw = np.atleast_2d(raw)
    if dimension is not None and raw.shape[1] != dimension:
        raise GeometryError("generator dimension mismatch")
    if not np.all(np.isfinite(raw)):
        raise GeometryError("non-finite cone generator")
    raw = np.ascontiguousarray(np.round(raw, 15) + 0.0)
    return _make_cone_cached(raw.shape, raw.tobytes())


def trivial_cone(dimension) -> ConeSpec:
    return make_cone([], dimension)


def orthant(dimension) -> ConeSpec:
    return make_cone(np.eye(dimension))


@dataclass(frozen=True, eq=False)
class LCSet:
    """``conv(vertices) + cone`` with pruned, canonically ordered vertices."""

    vertices: np.ndarray
    cone: ConeSpec

    @property
    def dimension(self):
        return self.cone.dimension

    @property
    def is_compact(self):
        return self.cone.is_trivial

    def to_literal(self):
        lit = {"vertices": self.vertices.tolist()}
        if not self.cone.is_trivial:
            lit["cone"] = self.cone.generators.tolist()
        return lit

    def __repr__(self):
        return f"LCSet(vertices={np.round(self.vertices, 6).tolist()}, cone={np.round(self.cone.generators, 6).tolist()})"


def _check_cone_usable(cone):
    if not cone.is_trivial and cone.is_full_space():
        raise GeometryError("generating cone equals the whole space")


def _canonical(V, cone, prune=True):
    V = qp.canonical_vertices(V, cone.generators, REP_TOL, prune=prune)
    V.setflags(write=False)
    return LCSet(vertices=V, cone=cone)


def make_set(vertices, cone: ConeSpec) -> LCSet:
    """Pruned canonical ``conv(vertices) + cone``."""
    V = np.asarray(vertices, dtype=float)
    if V.size == 0:
        raise GeometryError("empty vertex set is not an element of the space")
    V = np.atleast_2d(V)
    if V.shape[1] != cone.dimension:
        raise GeometryError("vertex dimension does not match cone dimension")
    if not np.all(np.isfinite(V)):
        raise GeometryError("non-finite vertex")
    _check_cone_usable(cone)
    return _canonical(V, cone)


def cone_set(cone: ConeSpec) -> LCSet:
    """The cone itself as a set, ``{0} + C``."""
    _check_cone_usable(cone)
    return LCSet(vertices=_readonly(np.zeros((1, cone.dimension))), cone=cone)


def _common_cone(A, B):
    if A.dimension != B.dimension:
        raise GeometryError("dimension mismatch")
    if A.cone.is_trivial:
        return B.cone
    if B.cone.is_trivial or A.cone.same_as(B.cone):
        return A.cone
    raise ConeMismatchError("incompatible generating cones; Hausdorff distance would be infinite")


def minkowski_sum(A: LCSet, B: LCSet) -> LCSet:
    cone = _common_cone(A, B)
    Va, Vb = A.vertices, B.vertices
    if Va.shape[0] == 1:
        S = Vb + Va[0]
    elif Vb.shape[0] == 1:
        S = Va + Vb[0]
    else:
        S = (Va[:, None, :] + Vb[None, :, :]).reshape(-1, A.dimension)
    return _canonical(S, cone)


def general_sum(A: LCSet, B: LCSet) -> LCSet:
    """``conv(V_A + V_B) (+) cone(G_A u G_B)``, the sum of sets with different cones.

    The result lives in ``L_C`` for the merged cone, not for either input cone.
    """
    if A.dimension != B.dimension:
        raise GeometryError("dimension mismatch")
    if A.cone.is_trivial or B.cone.is_trivial or A.cone.same_as(B.cone):
        return minkowski_sum(A, B)
    cone = make_cone(np.vstack([A.cone.generators, B.cone.generators]), A.dimension)
    _check_cone_usable(cone)
    S = (A.vertices[:, None, :] + B.vertices[None, :, :]).reshape(-1, A.dimension)
    return _canonical(S, cone)


def translate(A: LCSet, x) -> LCSet:
    x = np.asarray(x, dtype=float)
    return _canonical(A.vertices + x, A.cone, prune=False)


def scale(alpha: float, A: LCSet) -> LCSet:
    if not alpha > 0:
        raise GeometryError("scale factor must be positive")
    return _canonical(alpha * A.vertices, A.cone, prune=False)


def linear_image(M, A: LCSet) -> LCSet:
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.shape[1] != A.dimension:
        raise GeometryError("matrix does not act on the set's dimension")
    V = A.vertices @ M.T
    G = A.cone.generators @ M.T
    G = G[np.linalg.norm(G, axis=1) > 1e-14]
    cone = make_cone(G, M.shape[0])
    _check_cone_usable(cone)
    return _canonical(V, cone)


def support_function(A: LCSet, u) -> float:
    u = np.asarray(u, dtype=float)
    if not A.cone.in_polar(u):
        return np.inf
    return float((A.vertices @ u).max())


def point_distance(x, A: LCSet) -> float:
    return float(qp.distances(np.atleast_2d(np.asarray(x, dtype=float)), A.vertices, A.cone.generators)[0])


class HausdorffResult(NamedTuple):
    excess_ab: float
    excess_ba: float
    h: float


def excess(A: LCSet, B: LCSet) -> float:
    """One-sided ``sup_{a in A} d(a, B)``; attained at a vertex of A."""
    _hausdorff_cone(A, B)
    return float(qp.distances(A.vertices, B.vertices, B.cone.generators).max())


def _hausdorff_cone(A, B):
    if A.dimension != B.dimension:
        raise GeometryError("dimension mismatch")
    if A.cone.is_trivial and B.cone.is_trivial:
        return A.cone
    if A.cone.is_trivial or B.cone.is_trivial or not A.cone.same_as(B.cone):
        raise ConeMismatchError("infinite distance: sets do not share a generating cone")
    return A.cone


def hausdorff(A: LCSet, B: LCSet) -> HausdorffResult:
    _hausdorff_cone(A, B)
    G = A.cone.generators
    ab = float(qp.distances(A.vertices, B.vertices, G).max())
    ba = float(qp.distances(B.vertices, A.vertices, G).max())
    return HausdorffResult(ab, ba, max(ab, ba))


def hausdorff_distance(A: LCSet, B: LCSet) -> float:
    return hausdorff(A, B).h


def convex_join(sets: Sequence[LCSet]) -> LCSet:
    sets = list(sets)
    if not sets:
        raise GeometryError("convex_join needs at least one set")
    cone = sets[0].cone
    for s in sets[1:]:
        if s.dimension != cone.dimension or not s.cone.same_as(cone):
            raise ConeMismatchError("convex_join requires a common generating cone")
    return _canonical(np.vstack([s.vertices for s in sets]), cone)


def recession_cone(A: LCSet) -> ConeSpec:
    return A.cone


def prune(A: LCSet) -> LCSet:
    return _canonical(A.vertices, A.cone)


def representation_equal(A: LCSet, B: LCSet, tol=1e-9) -> bool:
    return (
        A.vertices.shape == B.vertices.shape
        and A.cone.same_as(B.cone)
        and bool(np.allclose(A.vertices, B.vertices, atol=tol, rtol=0.0))
    )


def reduce_vertices(A: LCSet, cap: int):
    """Greedy vertex removal down to ``cap`` vertices.

    Returns the reduced set and the Hausdorff distance to the input (the
    reduced set is a subset, so this is the excess of the input over it).
    """
    if A.vertices.shape[0] <= cap:
        return A, 0.0
    V = A.vertices
    G = A.cone.generators
    keep = np.ones(V.shape[0], dtype=bool)
    while keep.sum() > cap:
        idx = np.flatnonzero(keep)
        cost = np.empty(idx.shape[0])
        for c, i in enumerate(idx):
            rest = keep.copy()
            rest[i] = False
            cost[c] = qp.distances(V, V[rest], G).max()
        keep[idx[int(np.argmin(cost))]] = False
    reduced = LCSet(vertices=_readonly(V[keep]), cone=A.cone)
    pert = float(qp.distances(V, V[keep], G).max())
    return reduced, pert


# ---------------------------------------------------------------------------
# literals


def from_literal(lit) -> LCSet:
    """Parse ``{"vertices": [[...]], "cone": [[...]]}``; missing cone means trivial."""
    if isinstance(lit, str):
        lit = json.loads(lit)
    unknown = set(lit) - {"vertices", "cone"}
    if unknown:
        raise GeometryError(f"unknown keys in set literal: {sorted(unknown)}")
    V = np.atleast_2d(np.asarray(lit["vertices"], dtype=float))
    cone = make_cone(lit.get("cone", []), V.shape[1])
    return make_set(V, cone)


def to_literal(A: LCSet):
    return A.to_literal()
