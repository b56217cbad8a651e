"""Distance from a point to ``conv(W) + cone(G)``.

The problem solved everywhere in this package is

    min  |x - W^T lam - G^T mu|^2   over  lam in simplex, mu >= 0

with at most a few dozen columns. The default method is a primal active-set
scheme (Lawson-Hanson style, one equality constraint) which terminates with
the exact minimiser up to rounding; a Frank-Wolfe duality gap is computed at
the end as a certificate. An accelerated projected-gradient method is kept
as an independent, slower route for cross-checks.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

DEFAULT_TOL = 1e-10
DEFAULT_MAX_ITERS = 20_000

_STATUS_OK = 0
_STATUS_MAXITER = 1


class QPNonConvergence(RuntimeError):
    """Raised when the solver runs out of iterations before the gap closes."""

    def __init__(self, message, best):
        super().__init__(message)
        self.best = best


@dataclass(frozen=True)
class SimplexConeQP:
    target: np.ndarray
    polytope_vertices: np.ndarray  # k x d, one vertex per row
    cone_generators: np.ndarray  # g x d, unit rows
    tolerance: float = DEFAULT_TOL
    max_iters: int = DEFAULT_MAX_ITERS

    def __post_init__(self):
        x = np.asarray(self.target, dtype=float)
        W = np.atleast_2d(np.asarray(self.polytope_vertices, dtype=float))
        d = x.shape[0]
        G = np.asarray(self.cone_generators, dtype=float).reshape(-1, d)
        if W.shape[0] < 1:
            raise ValueError("need at least one polytope vertex")
        if W.shape[1] != d:
            raise ValueError("vertex dimension does not match target")
        if G.shape[0] and not np.allclose(np.linalg.norm(G, axis=1), 1.0, atol=1e-9):
            raise ValueError("cone generators must be unit vectors")
        object.__setattr__(self, "target", x)
        object.__setattr__(self, "polytope_vertices", W)
        object.__setattr__(self, "cone_generators", G)


@dataclass(frozen=True)
class QPSolution:
    lam: np.ndarray
    mu: np.ndarray
    distance: float
    iterations: int
    converged: bool
    gap: float


# ---------------------------------------------------------------------------
# numba kernels


@njit(cache=True)
def _fw_gap(x, A, k, theta, cone_tol):
    # Frank-Wolfe gap of f = 0.5|x - A theta|^2; inf if a cone column still descends
    d, n = A.shape
    r = x - A @ theta
    rp = 0.0
    p = A @ theta
    for i in range(d):
        rp += r[i] * p[i]
    best = -np.inf
    for j in range(k):
        s = 0.0
        for i in range(d):
            s += r[i] * A[i, j]
        if s > best:
            best = s
    gap = best - rp
    for j in range(k, n):
        s = 0.0
        for i in range(d):
            s += r[i] * A[i, j]
        if s > cone_tol:
            return np.inf
    if gap < 0.0:
        gap = 0.0
    return gap


@njit(cache=True)
def _subproblem(x, A, k, idx):
    # minimise |x - A_F z| subject to sum of the simplex part of z = 1, by
    # eliminating the first free simplex column; least squares via a twice
    # re-orthogonalised Gram-Schmidt QR. Returns (z, independent).
    d = A.shape[0]
    f = idx.shape[0]
    base = -1
    for c in range(f):
        if idx[c] < k:
            base = c
            break
    z = np.zeros(f)
    if f == 1:
        z[0] = 1.0
        return z, True
    m = f - 1
    if m > d:
        return z, False
    Q = np.zeros((m, d))  # orthonormal rows
    R = np.zeros((m, m))
    b = np.empty(d)
    for i in range(d):
        b[i] = x[i] - A[i, idx[base]]
    col = 0
    for c in range(f):
        if c == base:
            continue
        j = idx[c]
        v = np.empty(d)
        for i in range(d):
            v[i] = A[i, j] - A[i, idx[base]] if j < k else A[i, j]
        n0 = np.sqrt(v @ v)
        for _ in range(2):
            for i in range(col):
                r = Q[i] @ v
                R[i, col] += r
                v -= r * Q[i]
        nv = np.sqrt(v @ v)
        if nv <= 1e-11 * n0 or n0 == 0.0:
            return z, False
        Q[col] = v / nv
        R[col, col] = nv
        col += 1
    qb = Q @ b
    y = np.zeros(m)
    for i in range(m - 1, -1, -1):
        acc = qb[i]
        for j in range(i + 1, m):
            acc -= R[i, j] * y[j]
        y[i] = acc / R[i, i]
    col = 0
    s = 0.0
    for c in range(f):
        if c == base:
            continue
        z[c] = y[col]
        if idx[c] < k:
            s += y[col]
        col += 1
    z[base] = 1.0 - s
    return z, True


@njit(cache=True)
def _active_set(x, A, k, tol, max_iter):
    d, n = A.shape
    theta = np.zeros(n)
    best = 0
    bestd = np.inf
    for j in range(k):
        s = 0.0
        for i in range(d):
            s += (A[i, j] - x[i]) ** 2
        if s < bestd:
            bestd = s
            best = j
    theta[best] = 1.0
    free = np.zeros(n, dtype=np.bool_)
    free[best] = True
    excluded = np.zeros(n, dtype=np.bool_)

    amax = 0.0
    for i in range(d):
        for j in range(n):
            if abs(A[i, j]) > amax:
                amax = abs(A[i, j])
    xmax = 0.0
    for i in range(d):
        if abs(x[i]) > xmax:
            xmax = abs(x[i])
    scale = 1.0 + amax + xmax
    # multipliers live in squared-distance units; the threshold sits just
    # above rounding noise so that near-degenerate columns still enter
    kkt_tol = 1e-14 * scale * scale
    restarts = 0
    last_added = -1
    status = _STATUS_MAXITER
    it = 0
    while it < max_iter:
        it += 1
        idx = np.nonzero(free)[0]
        f = idx.shape[0]
        z, indep = _subproblem(x, A, k, idx)
        if not indep:
            # numerically dependent newcomer: its multiplier was rounding noise
            if last_added >= 0 and free[last_added]:
                free[last_added] = False
                theta[last_added] = 0.0
                excluded[last_added] = True
                last_added = -1
                continue
            status = _STATUS_MAXITER
            break
        zmin = np.inf
        for c in range(f):
            if z[c] < zmin:
                zmin = z[c]
        if zmin > 0.0:
            for c in range(f):
                theta[idx[c]] = z[c]
            r = A @ theta - x
            grad = A.T @ r
            nu = 0.0
            cnt = 0
            for c in range(f):
                if idx[c] < k:
                    nu -= grad[idx[c]]
                    cnt += 1
            nu /= cnt
            jmin = -1
            emin = -kkt_tol
            for j in range(n):
                if free[j] or excluded[j]:
                    continue
                eta = grad[j]
                if j < k:
                    eta += nu
                if eta < emin:
                    emin = eta
                    jmin = j
            if jmin < 0:
                # columns parked during a degenerate step must also be optimal
                parked = False
                for j in range(n):
                    if excluded[j] and not free[j]:
                        eta = grad[j] + (nu if j < k else 0.0)
                        if eta < -kkt_tol:
                            parked = True
                excluded[:] = False
                if parked and restarts < 2 * n:
                    restarts += 1
                    continue
                status = _STATUS_OK
                break
            free[jmin] = True
            last_added = jmin
        else:
            alpha = 1.0
            block = -1
            for c in range(f):
                if z[c] <= 0.0:
                    t = theta[idx[c]]
                    den = t - z[c]
                    a = t / den if den > 0.0 else 0.0
                    if a < alpha:
                        alpha = a
                        block = idx[c]
            if alpha <= 0.0 and block == last_added:
                # newly added column cannot enter: degenerate, park it
                excluded[block] = True
                free[block] = False
                theta[block] = 0.0
                continue
            for c in range(f):
                j = idx[c]
                theta[j] += alpha * (z[c] - theta[j])
            if block >= 0:
                free[block] = False
                theta[block] = 0.0
            for c in range(f):
                j = idx[c]
                if theta[j] <= 0.0:
                    free[j] = False
                    theta[j] = 0.0
            if alpha > 0.0:
                excluded[:] = False
            # keep at least one simplex coordinate free
            lsum = 0.0
            for j in range(k):
                lsum += theta[j]
            if lsum <= 0.0:
                theta[best] = 1.0
                free[best] = True
                lsum = 1.0
            for j in range(k):
                theta[j] /= lsum
    return theta, it, status


@njit(cache=True)
def _project_simplex(v):
    n = v.shape[0]
    u = np.sort(v)[::-1]
    css = 0.0
    rho = 0
    tau = 0.0
    for i in range(n):
        css += u[i]
        t = (css - 1.0) / (i + 1)
        if u[i] - t > 0.0:
            rho = i
            tau = t
    out = np.empty(n)
    for i in range(n):
        out[i] = max(v[i] - tau, 0.0)
    return out


@njit(cache=True)
def _apg(x, A, k, tol, max_iter):
    # FISTA on (lam, mu) with restart; Frank-Wolfe vertex step when stalled
    d, n = A.shape
    L = np.linalg.norm(A, 2) ** 2
    if L <= 0.0:
        L = 1.0
    theta = np.zeros(n)
    theta[0] = 1.0
    y = theta.copy()
    tk = 1.0
    fprev = np.inf
    it = 0
    status = _STATUS_MAXITER
    stall = 0
    while it < max_iter:
        it += 1
        grad = A.T @ (A @ y - x)
        z = y - grad / L
        new = np.empty(n)
        new[:k] = _project_simplex(z[:k])
        for j in range(k, n):
            new[j] = max(z[j], 0.0)
        r = A @ new - x
        fval = 0.5 * (r @ r)
        if fval > fprev:
            y = theta.copy()
            tk = 1.0
            stall += 1
        else:
            tn = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * tk * tk))
            y = new + ((tk - 1.0) / tn) * (new - theta)
            tk = tn
            theta = new
            fprev = fval
        if stall > 50:
            # Frank-Wolfe step on the simplex block with exact line search
            g = A.T @ (A @ theta - x)
            j = 0
            for c in range(1, k):
                if g[c] < g[j]:
                    j = c
            dirn = -theta.copy()
            for c in range(k, n):
                dirn[c] = 0.0
            dirn[j] += 1.0
            Ad = A @ dirn
            den = Ad @ Ad
            if den > 0.0:
                step = min(max(-(g @ dirn) / den, 0.0), 1.0)
                theta = theta + step * dirn
            y = theta.copy()
            tk = 1.0
            stall = 0
        if it % 25 == 0:
            cone_tol = tol * (1.0 + np.sqrt(L))
            if _fw_gap(x, A, k, theta, cone_tol) <= tol:
                status = _STATUS_OK
                break
    return theta, it, status


@njit(cache=True)
def _batch_distances(X, W, G, tol, max_iter):
    m = X.shape[0]
    d = X.shape[1]
    k = W.shape[0]
    g = G.shape[0]
    A = np.empty((d, k + g))
    A[:, :k] = W.T
    A[:, k:] = G.T
    out = np.empty(m)
    ok = True
    for i in range(m):
        theta, it, status = _active_set(X[i], A, k, tol, max_iter)
        if status != _STATUS_OK:
            ok = False
        r = X[i] - A @ theta
        out[i] = np.sqrt(r @ r)
    return out, ok


@njit(cache=True)
def _prune_mask(V, G, tol, max_iter):
    # sequential redundancy test; removing a redundant vertex leaves the set unchanged
    k = V.shape[0]
    d = V.shape[1]
    g = G.shape[0]
    keep = np.ones(k, dtype=np.bool_)
    ok = True
    for i in range(k):
        cnt = 0
        for j in range(k):
            if keep[j] and j != i:
                cnt += 1
        if cnt == 0:
            continue
        A = np.empty((d, cnt + g))
        c = 0
        for j in range(k):
            if keep[j] and j != i:
                A[:, c] = V[j]
                c += 1
        A[:, cnt:] = G.T
        theta, it, status = _active_set(V[i], A, cnt, tol, max_iter)
        if status != _STATUS_OK:
            ok = False
        r = V[i] - A @ theta
        if np.sqrt(r @ r) <= tol:
            keep[i] = False
    return keep, ok


@njit(cache=True)
def _lex_less(a, b):
    for j in range(a.shape[0]):
        if a[j] < b[j]:
            return True
        if a[j] > b[j]:
            return False
    return False


@njit(cache=True)
def _canonical_kernel(V, G, tol, max_iter, prune):
    # lexicographic order on rounded keys, duplicate removal, then pruning
    k, d = V.shape
    key = np.empty((k, d))
    for i in range(k):
        for j in range(d):
            key[i, j] = np.round(V[i, j], 12) + 0.0
    order = np.arange(k)
    for i in range(1, k):
        c = order[i]
        j = i - 1
        while j >= 0 and _lex_less(key[c], key[order[j]]):
            order[j + 1] = order[j]
            j -= 1
        order[j + 1] = c
    S = np.empty((k, d))
    n = 0
    for i in range(k):
        r = order[i]
        if n > 0:
            same = True
            prev = order[i - 1]
            for j in range(d):
                if key[r, j] != key[prev, j]:
                    same = False
                    break
            if same:
                continue
        S[n] = V[r]
        n += 1
    S = S[:n].copy()
    if prune and n > 1:
        keep, ok = _prune_mask(S, G, tol, max_iter)
        if not ok:
            return S, False
        return S[keep].copy(), True
    return S, True


@njit(cache=True)
def _ragged_excess(XA, offA, VB, offB, G, tol, max_iter):
    # for each segment s: max over rows of XA[offA[s]:offA[s+1]] of the
    # distance to conv(VB[offB[s]:offB[s+1]]) + cone(G)
    ns = offA.shape[0] - 1
    d = XA.shape[1]
    g = G.shape[0]
    out = np.empty(ns)
    ok = True
    for s in range(ns):
        k = offB[s + 1] - offB[s]
        A = np.empty((d, k + g))
        for c in range(k):
            A[:, c] = VB[offB[s] + c]
        A[:, k:] = G.T
        best = 0.0
        for i in range(offA[s], offA[s + 1]):
            theta, it, status = _active_set(XA[i], A, k, tol, max_iter)
            if status != _STATUS_OK:
                ok = False
            r = XA[i] - A @ theta
            dist = np.sqrt(r @ r)
            if dist > best:
                best = dist
        out[s] = best
    return out, ok


# ---------------------------------------------------------------------------
# public API


def _as_problem_arrays(problem):
    x = problem.target
    W = problem.polytope_vertices
    G = problem.cone_generators
    A = np.empty((x.shape[0], W.shape[0] + G.shape[0]))
    A[:, : W.shape[0]] = W.T
    A[:, W.shape[0]:] = G.T
    return x, A, W.shape[0]


def solve(problem: SimplexConeQP, method: str = "active-set") -> QPSolution:
    """Solve the distance problem.

    ``method`` is ``"active-set"`` (default, exact up to rounding) or
    ``"apg"`` (accelerated projected gradient with a Frank-Wolfe step when
    the iterates stall). Raises :class:`QPNonConvergence` when the iteration
    budget runs out; the best iterate rides along on the exception.
    """
    x, A, k = _as_problem_arrays(problem)
    tol = float(problem.tolerance)
    if method == "active-set":
        theta, it, status = _active_set(x, A, k, tol, int(problem.max_iters))
    elif method == "apg":
        theta, it, status = _apg(x, A, k, tol, int(problem.max_iters))
    else:
        raise ValueError(f"unknown method {method!r}")
    r = x - A @ theta
    scale = 1.0 + np.abs(A).max() + np.abs(x).max()
    gap = float(_fw_gap(x, A, k, theta, tol * scale))
    sol = QPSolution(
        lam=theta[:k].copy(),
        mu=theta[k:].copy(),
        distance=float(np.sqrt(r @ r)),
        iterations=int(it),
        converged=status == _STATUS_OK,
        gap=gap,
    )
    if status != _STATUS_OK:
        raise QPNonConvergence(
            f"QP did not converge after {it} iterations (gap {gap:.3e})", sol
        )
    return sol


def distances(points, vertices, generators, tol=DEFAULT_TOL, max_iters=DEFAULT_MAX_ITERS):
    """Distances from each row of ``points`` to ``conv(vertices) + cone(generators)``."""
    X = np.ascontiguousarray(np.atleast_2d(points), dtype=float)
    W = np.ascontiguousarray(vertices, dtype=float)
    G = np.ascontiguousarray(generators, dtype=float).reshape(-1, X.shape[1])
    out, ok = _batch_distances(X, W, G, tol, max_iters)
    if not ok:
        raise QPNonConvergence(f"QP did not converge within {max_iters} iterations", out)
    return out


def redundant_mask(vertices, generators, tol=DEFAULT_TOL, max_iters=DEFAULT_MAX_ITERS):
    """Boolean mask of vertices to keep (non-redundant) in ``conv(V) + cone(G)``."""
    V = np.ascontiguousarray(vertices, dtype=float)
    G = np.ascontiguousarray(generators, dtype=float).reshape(-1, V.shape[1])
    keep, ok = _prune_mask(V, G, tol, max_iters)
    if not ok:
        raise QPNonConvergence(f"QP did not converge within {max_iters} iterations", keep)
    return keep


def sample_polar_directions(cone, count, seed):
    """Unit vectors in the polar of ``cone``, by rejection from the sphere.

    Gaussian draws are first projected onto the orthogonal complement of the
    cone's lineality space (the polar lives there), then kept when every
    generator has a non-positive inner product with them.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    d = cone.dimension
    G = cone.generators
    if cone.is_full_space():
        raise ValueError("polar cone is {0}: the cone is the whole space")
    P = cone.lineality_complement_projector()
    rng = np.random.Generator(np.random.Philox(key=[int(seed) & (2**64 - 1), 0x9E3779B9]))
    out = np.empty((0, d))
    drawn = 0
    budget = max(10_000_000, 200 * count)
    batch = max(4 * count, 1024)
    while out.shape[0] < count:
        if drawn > budget:
            raise ValueError(
                f"polar cone too thin for rejection sampling: {out.shape[0]} of {count} after {drawn} draws"
            )
        Z = rng.standard_normal((batch, d)) @ P
        norms = np.linalg.norm(Z, axis=1)
        Z = Z[norms > 1e-12] / norms[norms > 1e-12, None]
        if G.shape[0]:
            Z = Z[(Z @ G.T).max(axis=1) <= 0.0]
        out = np.vstack([out, Z])
        drawn += batch
    return out[:count]


def canonical_vertices(vertices, generators, tol=DEFAULT_TOL, max_iters=DEFAULT_MAX_ITERS, prune=True):
    """Sorted, deduplicated and (optionally) pruned vertex array."""
    V = np.ascontiguousarray(vertices, dtype=float)
    G = np.ascontiguousarray(generators, dtype=float).reshape(-1, V.shape[1])
    out, ok = _canonical_kernel(V, G, tol, max_iters, prune)
    if not ok:
        raise QPNonConvergence(f"QP did not converge within {max_iters} iterations", out)
    return out


def ragged_excess(A_blocks, B_blocks, generators, tol=DEFAULT_TOL, max_iters=DEFAULT_MAX_ITERS):
    """Excess of each ``A_blocks[s]`` over ``conv(B_blocks[s]) + cone(G)`` in one call."""
    offA = np.zeros(len(A_blocks) + 1, dtype=np.int64)
    offB = np.zeros(len(B_blocks) + 1, dtype=np.int64)
    np.cumsum([a.shape[0] for a in A_blocks], out=offA[1:])
    np.cumsum([b.shape[0] for b in B_blocks], out=offB[1:])
    XA = np.ascontiguousarray(np.concatenate(A_blocks), dtype=float)
    VB = np.ascontiguousarray(np.concatenate(B_blocks), dtype=float)
    G = np.ascontiguousarray(generators, dtype=float).reshape(-1, XA.shape[1])
    out, ok = _ragged_excess(XA, offA, VB, offB, G, tol, max_iters)
    if not ok:
        raise QPNonConvergence(f"QP did not converge within {max_iters} iterations", out)
    return out
