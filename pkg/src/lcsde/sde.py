"""Picard iteration and Euler marching for set-valued SDEs on ``L_C``.

The equation is

    X_t = xi (+) int_0^t F(s, X_s) ds (+) int_0^t G o X_s dB_s

with a drift ``F`` taking values in ``L_C`` and a truncated diffusion family
``{g^n}`` of matrix-valued coefficients. Everything is computed pathwise on
frozen Brownian increments.
"""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from . import geometry as geo
from . import qp
from .geometry import ConeMismatchError, ConeSpec, LCSet
from .integrals import (
    BrownianPath,
    PathContext,
    SetPath,
    TimeGrid,
    mean_and_se,
    path_rng,
    sample_brownian,
)

DEFAULT_VERTEX_CAP = 64
PERTURBATION_WARN = 1e-8
SPOT_TOL = 1e-9


class AssumptionViolation(ValueError):
    """A declared Lipschitz/growth constant failed its spot check."""


def random_lcset(rng, cone: ConeSpec, max_vertices=3, spread=2.0) -> LCSet:
    k = int(rng.integers(1, max_vertices + 1))
    return geo.make_set(rng.normal(scale=spread, size=(k, cone.dimension)), cone)


def _spot_context(t, m):
    return PathContext(path_index=-1, node=0, t=t, past_increments=np.zeros((0, m)))


@dataclass(frozen=True, eq=False)
class DriftSpec:
    """Drift ``F(t, ctx, A)`` with one constant ``beta`` for growth and Lipschitz bounds."""

    evaluator: Callable
    beta: float
    cone: ConeSpec
    name: str = "drift"
    horizon: float = 1.0
    spot_checks: int = 8
    seed: int = 0
    domain_cone: Optional[ConeSpec] = None  # cone of the sampled inputs; defaults to ``cone``

    def __post_init__(self):
        if not self.beta > 0:
            raise ValueError("beta must be positive")
        if self.spot_checks:
            self.spot_check(self.spot_checks, self.seed)

    def __call__(self, t, ctx, A):
        return self.evaluator(t, ctx, A)

    def spot_check(self, samples=8, seed=0):
        rng = path_rng(seed, 0, 7)
        C = geo.cone_set(self.cone)
        dom = self.domain_cone or self.cone
        Cd = geo.cone_set(dom)
        for s in range(samples):
            t = self.horizon * s / max(samples - 1, 1)
            ctx = _spot_context(t, 1)
            A = random_lcset(rng, dom)
            B = random_lcset(rng, dom)
            FA = self.evaluator(t, ctx, A)
            FB = self.evaluator(t, ctx, B)
            for out in (FA, FB):
                if not out.cone.same_as(self.cone):
                    raise ConeMismatchError(f"{self.name}: output cone differs from the declared cone")
            growth = geo.hausdorff_distance(FA, C) ** 2
            if growth > self.beta * (1 + geo.hausdorff_distance(A, Cd) ** 2) + SPOT_TOL:
                raise AssumptionViolation(f"{self.name}: growth bound fails at t={t:.3g}")
            lip = geo.hausdorff_distance(FA, FB) ** 2
            if lip > self.beta * geo.hausdorff_distance(A, B) ** 2 + SPOT_TOL:
                raise AssumptionViolation(f"{self.name}: Lipschitz bound fails at t={t:.3g}")


@dataclass(frozen=True, eq=False)
class DiffusionSpec:
    """Truncated family ``g^1..g^N`` of ``d x m`` matrix coefficients.

    ``tail_bound`` is the declared ``sum_{n>N} alpha_n^2`` and ``alpha_tail``
    the declared ``sum_{n>N} alpha_n`` (the latter enters the rate constant).
    ``batch`` may supply all members at once as an ``(N, d, m)`` array.
    """

    members: tuple
    alphas: tuple
    dimension: int
    noise_dim: int
    cone: ConeSpec
    tail_bound: float = 0.0
    alpha_tail: float = 0.0
    batch: Optional[Callable] = None
    name: str = "diffusion"
    horizon: float = 1.0
    spot_checks: int = 8
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "members", tuple(self.members))
        object.__setattr__(self, "alphas", tuple(float(a) for a in self.alphas))
        if len(self.members) != len(self.alphas):
            raise ValueError("one alpha per family member")
        if any(a <= 0 for a in self.alphas):
            raise ValueError("alphas must be positive")
        if self.tail_bound < 0 or self.alpha_tail < 0:
            raise ValueError("tail bounds must be nonnegative")
        if self.spot_checks and self.members:
            self.spot_check(self.spot_checks, self.seed)

    @classmethod
    def zero(cls, dimension, noise_dim, cone):
        return cls((), (), dimension, noise_dim, cone, name="zero")

    @property
    def size(self):
        return len(self.members)

    @property
    def alpha_sum(self):
        return float(sum(self.alphas)) + self.alpha_tail

    @property
    def alpha_sq_sum(self):
        return float(sum(a * a for a in self.alphas)) + self.tail_bound

    def evaluate(self, t, ctx, A):
        if self.batch is not None:
            return np.asarray(self.batch(t, ctx, A), dtype=float)
        out = np.empty((self.size, self.dimension, self.noise_dim))
        for n, g in enumerate(self.members):
            out[n] = g(t, ctx, A)
        return out

    def spot_check(self, samples=8, seed=0):
        rng = path_rng(seed, 0, 11)
        C = geo.cone_set(self.cone)
        alphas = np.asarray(self.alphas)
        for s in range(samples):
            t = self.horizon * s / max(samples - 1, 1)
            ctx = _spot_context(t, self.noise_dim)
            gC = np.linalg.norm(self.evaluate(t, ctx, C), axis=(1, 2))
            if np.any(gC > alphas + SPOT_TOL):
                raise AssumptionViolation(f"{self.name}: |g^n(C)| exceeds alpha_n at t={t:.3g}")
            A = random_lcset(rng, self.cone)
            B = random_lcset(rng, self.cone)
            diff = np.linalg.norm(self.evaluate(t, ctx, A) - self.evaluate(t, ctx, B), axis=(1, 2))
            if np.any(diff > alphas * geo.hausdorff_distance(A, B) + SPOT_TOL):
                raise AssumptionViolation(f"{self.name}: Lipschitz bound fails at t={t:.3g}")


def rate_constant(drift: DriftSpec, diffusion: DiffusionSpec, horizon: float) -> float:
    """``M = 2 [T beta + sum_n alpha_n]`` with the declared tail included."""
    return 2.0 * (horizon * drift.beta + diffusion.alpha_sum)


def rate_bound(M, xi_h2, t, k):
    """Bound on ``E h^2(Y^{k+1}_t, Y^k_t)``."""
    t = np.asarray(t, dtype=float)
    return M ** (k + 1) * (1.0 + xi_h2) * t ** (k + 1) / math.factorial(k + 1)


# ---------------------------------------------------------------------------
# path building blocks


def _resolve(spec, p):
    return spec(p) if callable(spec) else spec


def _contexts(path: BrownianPath):
    g = path.grid
    inc = path.increments
    return [PathContext(path.path_index, i, g.t(i), inc[:i]) for i in range(g.steps + 1)]


def _hull(points, trivial):
    return geo.make_set(points, trivial)


def _assemble(base: LCSet, ito_pts, trivial):
    if ito_pts is None:
        return base
    return geo.minkowski_sum(base, _hull(ito_pts, trivial))


class _CapTracker:
    def __init__(self, cap):
        self.cap = cap
        self.max_perturbation = 0.0
        self.reductions = 0

    def __call__(self, A):
        if self.cap is None or A.vertices.shape[0] <= self.cap:
            return A
        R, pert = geo.reduce_vertices(A, self.cap)
        self.reductions += 1
        self.max_perturbation = max(self.max_perturbation, pert)
        if pert > PERTURBATION_WARN:
            warnings.warn(f"vertex cap reduction moved a set by {pert:.3e}", RuntimeWarning)
        return R


def _check_setup(xi: LCSet, drift: DriftSpec, diffusion: DiffusionSpec):
    if not xi.cone.same_as(drift.cone):
        raise ConeMismatchError("initial value cone does not match the drift cone")
    if diffusion.size and diffusion.dimension != xi.dimension:
        raise ValueError("diffusion dimension does not match the state dimension")


def _picard_step(xi_p, prev: Sequence[LCSet], drift, diffusion, path, ctxs, cap):
    """One Picard sweep along one path: prefix sums of drift and Ito parts."""
    grid = path.grid
    dt = grid.dt
    trivial = geo.trivial_cone(xi_p.dimension)
    D = geo.cone_set(drift.cone)
    N = diffusion.size
    I = np.zeros((N, xi_p.dimension)) if N else None
    out = [xi_p]
    for i in range(grid.steps):
        A = prev[i]
        F = drift(ctxs[i].t, ctxs[i], A)
        D = geo.minkowski_sum(D, geo.scale(dt, F))
        if N:
            I = I + diffusion.evaluate(ctxs[i].t, ctxs[i], A) @ path.increments[i]
        out.append(cap(_assemble(geo.minkowski_sum(xi_p, D), I, trivial)))
    return out


def _node_h2(new: Sequence[LCSet], old: Sequence[LCSet]):
    G = new[0].cone.generators
    a = qp.ragged_excess([A.vertices for A in new], [B.vertices for B in old], G)
    b = qp.ragged_excess([B.vertices for B in old], [A.vertices for A in new], G)
    return np.maximum(a, b) ** 2


def h2_to_cone(values: Sequence[LCSet]):
    """``h^2(X_i, C)`` for a sequence of sets sharing the cone ``C``."""
    C = geo.cone_set(values[0].cone)
    return _node_h2(values, [C] * len(values))


# ---------------------------------------------------------------------------
# reports


@dataclass
class SolveReport:
    grid: TimeGrid
    iterate_distances: np.ndarray  # (K-1) x (M+1): E h^2(Y^{k+1}_t, Y^k_t)
    iterate_se: np.ndarray
    bounds: np.ndarray
    M: float
    xi_h2: float
    final_paths: list
    seed: int
    paths: int
    iterations: int
    converged: bool
    vertex_cap: Optional[int] = None
    max_vertex_perturbation: float = 0.0
    stability: Optional[dict] = None
    config: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "config": self.config,
            "seed": self.seed,
            "paths": self.paths,
            "iterations": self.iterations,
            "converged": self.converged,
            "grid": {"T": self.grid.horizon, "M": self.grid.steps},
            "M": self.M,
            "xi_h2": self.xi_h2,
            "iterate_distances": self.iterate_distances.tolist(),
            "iterate_se": self.iterate_se.tolist(),
            "bounds": self.bounds.tolist(),
            "vertex_cap": self.vertex_cap,
            "max_vertex_perturbation": self.max_vertex_perturbation,
            "stability": self.stability,
        }

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True, indent=1)


@dataclass(frozen=True)
class RateRow:
    k: int
    node: int
    t: float
    observed: float
    se: float
    bound: float

    @property
    def violated(self):
        return self.observed > self.bound + 3.0 * self.se


def picard_solve(
    xi,
    drift: DriftSpec,
    diffusion: DiffusionSpec,
    grid: TimeGrid,
    paths: int,
    seed: int,
    iterations: int,
    tol: float = 0.0,
    initial=None,
    vertex_cap: Optional[int] = DEFAULT_VERTEX_CAP,
    brownian: Optional[Sequence[BrownianPath]] = None,
    config: Optional[dict] = None,
) -> SolveReport:
    """Picard iterates ``Y^(0), ..., Y^(K-1)`` on frozen increments.

    ``iterations`` counts iterates including ``Y^(0)``, so ``K`` iterates give
    ``K - 1`` successive differences. ``xi`` and ``initial`` may be sets or
    callables of the path index. The run stops early once the largest node
    mean of ``h^2(Y^{k+1}, Y^k)`` is at most ``tol``.
    """
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    if paths < 1:
        raise ValueError("paths must be >= 1")
    if brownian is None:
        brownian = [sample_brownian(grid, diffusion.noise_dim, seed, p) for p in range(paths)]
    xis = [_resolve(xi, p) for p in range(paths)]
    for x in xis:
        _check_setup(x, drift, diffusion)
    cur = []
    for p in range(paths):
        y0 = xis[p] if initial is None else _resolve(initial, p)
        if not y0.cone.same_as(drift.cone):
            raise ConeMismatchError("initial iterate cone does not match the drift cone")
        cur.append([y0] * (grid.steps + 1))
    ctxs = [_contexts(b) for b in brownian]
    cap = _CapTracker(vertex_cap)
    xi_h2 = float(np.mean([h2_to_cone([x])[0] for x in xis]))
    Mc = rate_constant(drift, diffusion, grid.horizon)
    t = grid.nodes
    means, ses, bounds = [], [], []
    converged = False
    done = 1
    for k in range(iterations - 1):
        h2 = np.empty((paths, grid.steps + 1))
        nxt = []
        for p in range(paths):
            new = _picard_step(xis[p], cur[p], drift, diffusion, brownian[p], ctxs[p], cap)
            h2[p] = _node_h2(new, cur[p])
            nxt.append(new)
        cur = nxt
        done += 1
        mean = h2.mean(axis=0)
        se = h2.std(axis=0, ddof=1) / np.sqrt(paths) if paths > 1 else np.zeros_like(mean)
        means.append(mean)
        ses.append(se)
        bounds.append(rate_bound(Mc, xi_h2, t, k))
        if mean.max() <= tol:
            converged = True
            break
    width = grid.steps + 1
    return SolveReport(
        grid=grid,
        iterate_distances=np.array(means).reshape(-1, width),
        iterate_se=np.array(ses).reshape(-1, width),
        bounds=np.array(bounds).reshape(-1, width),
        M=Mc,
        xi_h2=xi_h2,
        final_paths=[SetPath(grid, tuple(c)) for c in cur],
        seed=seed,
        paths=paths,
        iterations=done,
        converged=converged,
        vertex_cap=vertex_cap,
        max_vertex_perturbation=cap.max_perturbation,
        config=dict(config or {}),
    )


def euler_march(
    xi,
    drift: DriftSpec,
    diffusion: DiffusionSpec,
    grid: TimeGrid,
    paths: int,
    seed: int,
    vertex_cap: Optional[int] = DEFAULT_VERTEX_CAP,
    brownian: Optional[Sequence[BrownianPath]] = None,
):
    """``X_{i+1} = X_i (+) dt F(t_i, X_i) (+) hull{g^n(t_i, X_i) dB_i}``."""
    if brownian is None:
        brownian = [sample_brownian(grid, diffusion.noise_dim, seed, p) for p in range(paths)]
    cap = _CapTracker(vertex_cap)
    out = []
    for p in range(paths):
        X = _resolve(xi, p)
        _check_setup(X, drift, diffusion)
        trivial = geo.trivial_cone(X.dimension)
        ctxs = _contexts(brownian[p])
        vals = [X]
        for i in range(grid.steps):
            c = ctxs[i]
            step = geo.minkowski_sum(X, geo.scale(grid.dt, drift(c.t, c, X)))
            if diffusion.size:
                pts = diffusion.evaluate(c.t, c, X) @ brownian[p].increments[i]
                step = _assemble(step, pts, trivial)
            X = cap(step)
            vals.append(X)
        out.append(SetPath(grid, tuple(vals)))
    return out


def successive_differences(report: SolveReport) -> list:
    """Observed ``E h^2(Y^{k+1}_t, Y^k_t)`` against the rate bound, node by node."""
    rows = []
    t = report.grid.nodes
    for k in range(report.iterate_distances.shape[0]):
        for i in range(t.shape[0]):
            rows.append(
                RateRow(
                    k,
                    i,
                    float(t[i]),
                    float(report.iterate_distances[k, i]),
                    float(report.iterate_se[k, i]),
                    float(report.bounds[k, i]),
                )
            )
    return rows


def stability_report(
    final_paths: Sequence[SetPath],
    xi,
    min_lag_steps: int = 4,
    node_stride: int = 1,
    max_paths: Optional[int] = None,
    buckets: int = 4,
):
    """Supremum statistic and the ``E h^2(X_t, X_s) / (t - s)`` modulus table.

    Node pairs are taken on every ``node_stride``-th node with lag at least
    ``min_lag_steps`` steps; ``max_paths`` subsamples the family (first paths
    in index order). ``K_hat`` is the largest of the two normalised ratios.
    """
    fam = list(final_paths)[: max_paths or None]
    grid = fam[0].grid
    xis = [_resolve(xi, p) for p in range(len(fam))]
    xi_h2 = float(np.mean([h2_to_cone([x])[0] for x in xis]))
    sup = np.array([h2_to_cone(sp.values).max() for sp in fam])
    sup_mean, sup_se = mean_and_se(sup)
    nodes = np.arange(0, grid.steps + 1, node_stride)
    pairs = [(s, t) for a, s in enumerate(nodes) for t in nodes[a + 1:] if t - s >= min_lag_steps]
    table = []
    if pairs:
        h2 = np.empty((len(fam), len(pairs)))
        for p, sp in enumerate(fam):
            h2[p] = _node_h2([sp[t] for s, t in pairs], [sp[s] for s, t in pairs])
        mean = h2.mean(axis=0)
        for j, (s, t) in enumerate(pairs):
            lag = (t - s) * grid.dt
            table.append({"s": float(s * grid.dt), "t": float(t * grid.dt), "lag": lag,
                          "mean_h2": float(mean[j]), "modulus": float(mean[j] / lag)})
    moduli = np.array([r["modulus"] for r in table]) if table else np.zeros(0)
    lags = np.array([r["lag"] for r in table]) if table else np.zeros(0)
    bucket_means = []
    if table:
        edges = np.linspace(lags.min(), lags.max(), buckets + 1)
        idx = np.clip(np.searchsorted(edges, lags, side="right") - 1, 0, buckets - 1)
        for b in range(buckets):
            sel = idx == b
            if sel.any():
                bucket_means.append(float(moduli[sel].mean()))
    positive = [m for m in bucket_means if m > 0]
    spread = max(positive) / min(positive) if positive else 1.0
    k_hat = max(sup_mean, float(moduli.max()) if moduli.size else 0.0) / (1.0 + xi_h2)
    return {
        "sup_h2_mean": sup_mean,
        "sup_h2_se": sup_se,
        "xi_h2": xi_h2,
        "modulus_max": float(moduli.max()) if moduli.size else 0.0,
        "modulus_table": table,
        "bucket_moduli": bucket_means,
        "linearity_spread": spread,
        "K_hat": k_hat,
    }
