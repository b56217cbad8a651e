"""Randomised property suites behind ``lcsde proptest``.

Each suite draws cases from a counter-based generator keyed by (seed, case
index), so case ``i`` is reproducible on its own. A case is a flat dict of
arrays and scalars; when a check fails, a greedy shrinker drops rows and
rounds entries while the failure persists and reports the smallest case it
reached.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Dict

import numpy as np

from . import finance as fin
from . import geometry as geo
from . import integrals as itg
from . import oracles, qp
from .integrals import path_rng

METRIC_TOL = 1e-9
EXACT_TOL = 1e-10
ORACLE_TOL = 1e-4
DOMINANCE_TOL = 1e-7


class UnknownSuite(KeyError):
    pass


# ---------------------------------------------------------------------------
# random inputs


def random_pointed_generators(rng, d, max_gens):
    """Up to ``max_gens`` unit vectors in an open half-space, so the cone is pointed."""
    g = int(rng.integers(0, max_gens + 1))
    axis = rng.normal(size=d)
    axis /= np.linalg.norm(axis)
    out = []
    while len(out) < g:
        u = rng.normal(size=d)
        u /= np.linalg.norm(u)
        if u @ axis >= 0.2:
            out.append(u)
    return np.array(out).reshape(g, d)


def _cone(case):
    return geo.make_cone(case["cone"], int(case["d"]))


def _set(case, key, cone=None):
    return geo.make_set(case[key], cone if cone is not None else _cone(case))


def _sets_case(rng, names, d_choices=(2, 3), max_vertices=6, max_gens=4):
    d = int(rng.choice(d_choices))
    case = {"d": d, "cone": random_pointed_generators(rng, d, max_gens)}
    for n in names:
        case[n] = rng.normal(scale=2.0, size=(int(rng.integers(1, max_vertices + 1)), d))
    return case


def _field_case(rng, names, d=2, max_vertices=3, max_gens=2):
    M = int(rng.choice([7, 16, 33, 64]))
    pieces = int(rng.integers(1, 5))
    k = int(rng.integers(1, max_vertices + 1))
    case = {"d": d, "cone": random_pointed_generators(rng, d, max_gens), "M": M,
            "T": float(rng.uniform(0.5, 2.0))}
    for n in names:
        case[n] = rng.normal(scale=2.0, size=(pieces, k, d))
    return case


def _field(case, key):
    C = _cone(case)
    pieces = [geo.make_set(V, C) for V in case[key]]
    M = int(case["M"])
    idx = (np.arange(M) * len(pieces)) // M
    return [pieces[i] for i in idx]


def _h(A, B):
    return geo.hausdorff_distance(A, B)


# ---------------------------------------------------------------------------
# checks: each returns (ok, message)


def _metric(case):
    C = _cone(case)
    A, B, D = (_set(case, k, C) for k in "ABD")
    hab, hba = _h(A, B), _h(B, A)
    if hab != hba:
        return False, f"asymmetric: {hab!r} vs {hba!r}"
    tri = _h(A, D) - (hab + _h(B, D))
    if tri > METRIC_TOL:
        return False, f"triangle inequality violated by {tri:.3e}"
    if _h(A, A) != 0.0:
        return False, "h(A, A) != 0"
    if (hab <= METRIC_TOL) != geo.representation_equal(A, B):
        return False, "zero distance disagrees with representation equality"
    return True, f"h={hab:.6g}"


def _subadditivity(case):
    C = _cone(case)
    A, B, D, E = (_set(case, k, C) for k in "ABDE")
    lhs = _h(geo.minkowski_sum(A, B), geo.minkowski_sum(D, E))
    rhs = _h(A, D) + _h(B, E)
    return lhs <= rhs + METRIC_TOL, f"{lhs:.12g} <= {rhs:.12g}"


def _exchange(case):
    C = _cone(case)
    S1 = [geo.make_set(case["A"][i:i + 1], C) for i in range(len(case["A"]))]
    S2 = [geo.make_set(case["B"][i:i + 1], C) for i in range(len(case["B"]))]
    lhs = geo.minkowski_sum(geo.convex_join(S1), geo.convex_join(S2))
    rhs = geo.convex_join([geo.minkowski_sum(a, b) for a in S1 for b in S2])
    h = _h(lhs, rhs)
    return h <= METRIC_TOL, f"h={h:.3e}"


def _cancellation(case):
    C = _cone(case)
    A, B, D = (_set(case, k, C) for k in "ABD")
    gap = abs(_h(geo.minkowski_sum(A, B), geo.minkowski_sum(D, B)) - _h(A, D))
    return gap <= METRIC_TOL, f"|h(A+B, D+B) - h(A, D)| = {gap:.3e}"


def _prune(case):
    C = _cone(case)
    raw = geo.LCSet(np.asarray(case["A"], dtype=float), C)
    once = geo.prune(raw)
    twice = geo.prune(once)
    same = np.array_equal(once.vertices, twice.vertices)
    return same, f"{once.vertices.shape[0]} vertices after pruning"


def _linear(case):
    C = _cone(case)
    A, B = _set(case, "A", C), _set(case, "B", C)
    Mx = np.asarray(case["Mx"], dtype=float)
    try:
        lhs = geo.linear_image(Mx, geo.minkowski_sum(A, B))
    except geo.GeometryError as exc:
        return True, f"skipped: {exc}"
    rhs = geo.minkowski_sum(geo.linear_image(Mx, A), geo.linear_image(Mx, B))
    h = _h(lhs, rhs)
    return h <= METRIC_TOL, f"h={h:.3e}"


def _duality(case):
    C = _cone(case)
    A, B = _set(case, "A", C), _set(case, "B", C)
    h = _h(A, B)
    sampled, refined = oracles.support_hausdorff(A, B, 10_000, int(case["oracle_seed"]))
    if h < sampled - DOMINANCE_TOL:
        return False, f"QP h {h!r} below sampled oracle {sampled!r}"
    return abs(h - refined) <= ORACLE_TOL, f"QP {h:.9g} oracle {refined:.9g}"


def _integral_inequality(case):
    F, Ft = _field(case, "F"), _field(case, "G")
    grid = itg.TimeGrid(case["T"], int(case["M"]))
    i1 = grid.steps
    lhs = _h(itg.riemann_set_integral(F, 0, i1, grid.dt), itg.riemann_set_integral(Ft, 0, i1, grid.dt)) ** 2
    rhs = grid.horizon * sum(grid.dt * _h(a, b) ** 2 for a, b in zip(F, Ft))
    return lhs <= rhs + METRIC_TOL, f"{lhs:.12g} <= {rhs:.12g}"


def _cone_bound(case):
    F = _field(case, "F")
    grid = itg.TimeGrid(case["T"], int(case["M"]))
    C = geo.cone_set(F[0].cone)
    lhs = _h(itg.riemann_set_integral(F, 0, grid.steps, grid.dt), C) ** 2
    rhs = grid.horizon * sum(grid.dt * _h(a, C) ** 2 for a in F)
    return lhs <= rhs + METRIC_TOL, f"{lhs:.12g} <= {rhs:.12g}"


def _additivity(case):
    F = _field(case, "F")
    grid = itg.TimeGrid(case["T"], int(case["M"]))
    i0 = max(1, int(case["split"] * grid.steps))
    i0 = min(i0, grid.steps - 1)
    whole = itg.riemann_set_integral(F, 0, grid.steps, grid.dt)
    parts = geo.minkowski_sum(itg.riemann_set_integral(F, 0, i0, grid.dt),
                              itg.riemann_set_integral(F, i0, grid.steps, grid.dt))
    h = _h(whole, parts)
    return h <= METRIC_TOL, f"h={h:.3e}"


def _constant_field(case):
    C = _cone(case)
    A = _set(case, "A", C)
    grid = itg.TimeGrid(case["T"], int(case["M"]))
    I = itg.riemann_set_integral([A] * grid.steps, 0, grid.steps, grid.dt)
    h = _h(I, geo.scale(grid.horizon, A))
    return h <= EXACT_TOL, f"h={h:.3e}"


def _continuity(case):
    F = _field(case, "F")
    grid = itg.TimeGrid(case["T"], int(case["M"]))
    C = geo.cone_set(F[0].cone)
    I = itg.riemann_prefix(F, grid.dt)
    hc = np.array([_h(a, C) ** 2 for a in F])
    worst = -np.inf
    for i in range(grid.steps):
        for j in range(i + 1, grid.steps + 1, max(1, grid.steps // 8)):
            lhs = _h(I[i], I[j]) ** 2
            rhs = (j - i) * grid.dt * grid.dt * hc[i:j].sum()
            worst = max(worst, lhs - rhs)
    return worst <= METRIC_TOL, f"max excess over the modulus bound {worst:.3e}"


def _cone_equivalence(case):
    lam, mu = float(case["lam"]), float(case["mu"])
    K = fin.constant_cone_K(lam, mu)
    B, S = float(case["B"]), float(case["S"])
    pi = fin.BidAskMatrix((1 + lam) * S / B, B / ((1 - mu) * S))
    KP = fin.solvency_cone(pi)
    x, y = case["point"]
    a = geo.cone_distance([x, y], K)
    b = geo.cone_distance([x / B, y / S], KP)
    return (a <= METRIC_TOL) == (b <= METRIC_TOL), f"d_K={a:.3e} d_KPi={b:.3e}"


def _qp_scaling(case):
    x, W, G, c = case["x"], case["A"], case["cone"], float(case["c"])
    d1 = qp.distances(np.atleast_2d(x), W, G)[0]
    d2 = qp.distances(np.atleast_2d(c * x), c * W, G)[0]
    return abs(d2 - c * d1) <= METRIC_TOL * max(1.0, c), f"{d2!r} vs {c * d1!r}"


def _qp_monotone(case):
    x, W, G = case["x"], case["A"], case["cone"]
    extra = case["extra"]
    d1 = qp.distances(np.atleast_2d(x), W, G)[0]
    d2 = qp.distances(np.atleast_2d(x), W, np.vstack([G, extra]))[0]
    return d2 <= d1 + METRIC_TOL, f"{d2!r} <= {d1!r}"


def _qp_grid(case):
    x, W = case["x"], case["A"]
    d = qp.distances(np.atleast_2d(x), W, np.zeros((0, W.shape[1])))[0]
    g = oracles.barycentric_grid_distance(x, W, 1e-3)
    return abs(d - g) <= 2e-3 and d <= g + METRIC_TOL, f"QP {d:.9g} grid {g:.9g}"


def _ito_monotone(case):
    grid = itg.TimeGrid(1.0, int(case["M"]))
    path = itg.sample_brownian(grid, 1, int(case["path_seed"]))
    fam = np.asarray(case["family"], dtype=float)  # (N+1, d)
    N1 = fam.shape[0]
    vals = np.broadcast_to(fam[None, :, :, None], (grid.steps, N1, fam.shape[1], 1))
    small = itg.ito_family_integral(vals[:, :-1], path, grid.steps) if N1 > 1 else None
    big = itg.ito_family_integral(vals, path, grid.steps)
    if small is None:
        return True, "single member"
    e = geo.excess(small, big)
    return e <= EXACT_TOL, f"excess {e:.3e}"


# ---------------------------------------------------------------------------
# generators


def _g_sets(names, **kw):
    return lambda rng: _sets_case(rng, names, **kw)


def _g_linear(rng):
    case = _sets_case(rng, "AB")
    d = case["d"]
    case["Mx"] = rng.normal(size=(d, d))
    return case


def _g_duality(rng):
    case = _sets_case(rng, "AB")
    case["oracle_seed"] = int(rng.integers(0, 2**31))
    return case


def _g_field(names):
    return lambda rng: _field_case(rng, names)


def _g_additivity(rng):
    case = _field_case(rng, "F")
    case["split"] = float(rng.uniform(0.1, 0.9))
    return case


def _g_constant_field(rng):
    case = _sets_case(rng, "A", d_choices=(2,), max_gens=2)
    case["M"] = int(rng.choice([7, 64, 1000]))
    case["T"] = float(rng.uniform(0.5, 2.0))
    return case


def _g_cone_equivalence(rng):
    lam, mu = rng.uniform(0.01, 0.9, 2)
    return {"lam": float(lam), "mu": float(mu), "B": float(np.exp(rng.normal())),
            "S": float(np.exp(rng.normal())), "point": rng.normal(size=2)}


def _g_qp(rng):
    d = int(rng.integers(2, 4))
    return {"d": d, "x": rng.normal(scale=2.0, size=d),
            "A": rng.normal(size=(int(rng.integers(1, 6)), d)),
            "cone": random_pointed_generators(rng, d, 3), "c": float(np.exp(rng.normal())),
            "extra": _unit(rng, d)}


def _unit(rng, d):
    u = rng.normal(size=(1, d))
    return u / np.linalg.norm(u)


def _g_qp_grid(rng):
    d = int(rng.integers(2, 4))
    return {"d": d, "x": rng.normal(scale=2.0, size=d), "A": rng.normal(size=(int(rng.integers(1, 4)), d))}


def _g_ito(rng):
    return {"M": int(rng.choice([8, 32])), "path_seed": int(rng.integers(0, 2**31)),
            "family": rng.normal(size=(int(rng.integers(1, 6)), 2))}


@dataclass(frozen=True)
class Suite:
    name: str
    generate: Callable
    check: Callable
    description: str


SUITES: Dict[str, Suite] = {s.name: s for s in [
    Suite("metric", _g_sets("ABD"), _metric, "symmetry, triangle inequality, identity of indiscernibles"),
    Suite("subadditivity", _g_sets("ABDE"), _subadditivity, "h(A+B, D+E) <= h(A, D) + h(B, E)"),
    Suite("exchange", _g_sets("AB", max_vertices=4), _exchange, "co(A+B) = co(A) + co(B)"),
    Suite("cancellation", _g_sets("ABD"), _cancellation, "h(A+B, D+B) = h(A, D)"),
    Suite("prune", _g_sets("A", max_vertices=8), _prune, "pruning is idempotent"),
    Suite("linear", _g_linear, _linear, "M(A+B) = MA + MB"),
    Suite("duality", _g_duality, _duality, "QP distance against the support-function oracle"),
    Suite("thm43", _g_field("FG"), _integral_inequality, "discrete integral inequality for two fields"),
    Suite("cone-bound", _g_field("F"), _cone_bound, "discrete integral bound against the cone"),
    Suite("additivity", _g_additivity, _additivity, "interval additivity of the Riemann integral"),
    Suite("constant-field", _g_constant_field, _constant_field, "constant field integrates to (t - t0) A"),
    Suite("continuity", _g_field("F"), _continuity, "modulus bound on prefix integrals"),
    Suite("cone-equivalence", _g_cone_equivalence, _cone_equivalence, "(x, y) in K iff (x/B, y/S) in K(Pi)"),
    Suite("qp-scaling", _g_qp, _qp_scaling, "distance scales with the data"),
    Suite("qp-monotone", _g_qp, _qp_monotone, "an extra generator never increases the distance"),
    Suite("qp-grid", _g_qp_grid, _qp_grid, "QP against an exhaustive barycentric grid"),
    Suite("ito-monotone", _g_ito, _ito_monotone, "Ito hulls grow with the truncation level"),
]}


# ---------------------------------------------------------------------------
# running and shrinking


def _evaluate(suite, case):
    try:
        return suite.check(case)
    except Exception as exc:  # a crash is a failure of the property
        return False, f"{type(exc).__name__}: {exc}"


def _shrink_moves(case):
    for key, val in case.items():
        if isinstance(val, np.ndarray) and val.ndim >= 2 and val.shape[0] > 1:
            for i in range(val.shape[0]):
                yield {**case, key: np.delete(val, i, axis=0)}
    for key, val in case.items():
        if isinstance(val, np.ndarray) and val.dtype.kind == "f" and val.size:
            for digits in (0, 1, 3):
                r = np.round(val, digits)
                if not np.array_equal(r, val):
                    yield {**case, key: r}


def shrink(suite: Suite, case, budget=300):
    """Greedy shrinking: accept any move that keeps the case failing."""
    best = case
    used = 0
    progress = True
    while progress and used < budget:
        progress = False
        for cand in _shrink_moves(best):
            used += 1
            ok, _ = _evaluate(suite, cand)
            if not ok:
                best = cand
                progress = True
                break
            if used >= budget:
                break
    return best


def case_to_json(case):
    return {k: (v.tolist() if isinstance(v, np.ndarray) else v) for k, v in sorted(case.items())}


def run_suite(name: str, cases: int, seed: int, shrink_failures=True):
    if name not in SUITES:
        raise UnknownSuite(name)
    suite = SUITES[name]
    failures = []
    for i in range(cases):
        case = suite.generate(path_rng(seed, i, 3))
        ok, msg = _evaluate(suite, case)
        if not ok:
            small = shrink(suite, case) if shrink_failures else case
            failures.append({"case": i, "message": msg, "counterexample": case_to_json(small),
                             "shrunk_message": _evaluate(suite, small)[1]})
    return {"suite": name, "cases": cases, "seed": seed, "passed": cases - len(failures),
            "failed": len(failures), "failures": failures}
