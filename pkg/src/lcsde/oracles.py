"""Independent reference computations used to cross-check the QP route.

None of these call the active-set solver: support functions are evaluated
directly, cone membership uses scipy's nonnegative least squares, and
polytope distances fall back to exhaustive grids.
"""
from __future__ import annotations

import itertools

import numpy as np
from scipy.optimize import nnls

from .geometry import LCSet
from .qp import sample_polar_directions


def support_values(A: LCSet, U):
    """``max_v <v, u>`` for each row ``u`` of ``U`` (directions assumed polar)."""
    return (np.asarray(U) @ A.vertices.T).max(axis=1)


def support_hausdorff(A: LCSet, B: LCSet, count=10_000, seed=0, refine=8, rounds=100):
    """Sup of ``|sigma_A(u) - sigma_B(u)|`` over unit ``u`` in the polar cone.

    Returns ``(sampled, refined)``. ``sampled`` is the plain maximum over
    ``count`` directions and never exceeds the true value. ``refined``
    polishes the best ``refine`` directions by a shrinking-step pattern
    search on the sphere that only accepts polar-feasible moves, so it is
    still a lower bound but a tight one. Besides free moves, the search
    slides along facets of the polar cone and along ridges where two
    vertices of ``A`` (or of ``B``) tie in the support function, since the
    maximum of a difference of support functions typically sits on such a
    ridge.
    """
    G = A.cone.generators
    U = sample_polar_directions(A.cone, count, seed)
    gap = np.abs(support_values(A, U) - support_values(B, U))
    sampled = float(gap.max())
    best = sampled
    if not refine:
        return sampled, best
    d = U.shape[1]
    rng = np.random.default_rng(seed)
    # moves may also slide along the facets g_j^perp of the polar cone and
    # their pairwise intersections, where boundary maxima sit
    projectors = [np.eye(d)]
    for k in (1, 2):
        for idx in itertools.combinations(range(G.shape[0]), k):
            Q, _ = np.linalg.qr(G[list(idx)].T)
            if k < d:
                projectors.append(np.eye(d) - Q @ Q.T)
    for j in np.argsort(gap)[::-1][:refine]:
        u, val = U[j], gap[j]
        step = 0.05
        for _ in range(rounds):
            D = rng.normal(size=(8 * d, d))
            D = np.vstack([D, np.eye(d), -np.eye(d)])
            raw = u + step * D
            local = projectors + _ridge_projectors(A, B, u, step)
            cand = np.vstack([raw @ P for P in local])
            norms = np.linalg.norm(cand, axis=1)
            cand = cand[norms > 1e-12] / norms[norms > 1e-12][:, None]
            if G.shape[0]:
                cand = cand[(cand @ G.T <= 1e-12).all(axis=1)]
            if cand.shape[0]:
                g = np.abs(support_values(A, cand) - support_values(B, cand))
                k = int(np.argmax(g))
                if g[k] > val:
                    u, val = cand[k], g[k]
                    continue
            step *= 0.5
            if step < 1e-9:
                break
        best = max(best, float(val))
    return sampled, best


def _ridge_projectors(A, B, u, step):
    """Projectors that keep the current support-vertex ties of ``A`` and ``B``."""
    d = u.shape[0]
    rows = []
    for V in (A.vertices, B.vertices):
        vals = V @ u
        scale = max(1.0, float(np.abs(V).max()))
        tied = V[vals >= vals.max() - 4.0 * step * scale]
        rows.extend(tied[1:] - tied[0])
    if not rows:
        return []
    _, sv, vt = np.linalg.svd(np.array(rows))
    rank = int((sv > 1e-12 * max(sv[0], 1.0)).sum())
    if rank == 0 or rank >= d - 1:
        return []
    Q = vt[:rank].T
    return [np.eye(d) - Q @ Q.T]


def cone_residual(v, generators):
    """Distance from ``v`` to ``cone(generators)`` by nonnegative least squares."""
    G = np.asarray(generators, dtype=float)
    v = np.asarray(v, dtype=float)
    if G.size == 0:
        return float(np.linalg.norm(v))
    _, rnorm = nnls(G.T, v)
    return float(rnorm)


def barycentric_grid_distance(x, W, step=1e-3):
    """Distance from ``x`` to ``conv(W)`` by a barycentric grid (``k <= 3``)."""
    W = np.asarray(W, dtype=float)
    x = np.asarray(x, dtype=float)
    k = W.shape[0]
    n = int(round(1.0 / step))
    if k == 1:
        return float(np.linalg.norm(x - W[0]))
    a = np.arange(n + 1) / n
    if k == 2:
        P = a[:, None] * W[0] + (1 - a)[:, None] * W[1]
    elif k == 3:
        i, j = np.meshgrid(a, a, indexing="ij")
        keep = i + j <= 1 + 1e-12
        i, j = i[keep], j[keep]
        P = i[:, None] * W[0] + j[:, None] * W[1] + (1 - i - j)[:, None] * W[2]
    else:
        raise ValueError("grid oracle supports at most three vertices")
    return float(np.linalg.norm(P - x, axis=1).min())


def orthant_grid_distance(x, w, upper=3.0, step=1e-3):
    """Distance from ``x`` to ``w + R^2_+`` by a grid over ``mu in [0, upper]^2``."""
    g = np.arange(0.0, upper + step / 2, step)
    m1, m2 = np.meshgrid(g, g, indexing="ij")
    d = np.hypot(x[0] - w[0] - m1, x[1] - w[1] - m2)
    return float(d.min())


def segment_distance(x, a, b):
    """Projection of ``x`` on the segment ``[a, b]``: ``(distance, t)`` with point ``a + t (b - a)``."""
    x, a, b = (np.asarray(v, dtype=float) for v in (x, a, b))
    e = b - a
    t = float(np.clip((x - a) @ e / (e @ e), 0.0, 1.0))
    return float(np.linalg.norm(x - a - t * e)), t


def dominated(v, others, generators, tol=1e-10):
    """Whether ``v - w`` lies in the cone for some single other vertex ``w``."""
    return any(cone_residual(np.asarray(v) - w, generators) <= tol for w in np.atleast_2d(others))


def brute_force_join_vertices(sets):
    """All vertex pairs sums of two sets, unpruned (for exchange-law checks)."""
    return [a + b for a, b in itertools.product(*[S.vertices for S in sets])]
