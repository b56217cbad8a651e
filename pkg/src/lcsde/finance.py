"""Two-asset market with proportional transaction costs.

A bank account ``B`` and a stock ``S`` are traded at proportional costs
``lambda`` (buying stock) and ``mu`` (selling stock). A strategy is a pair of
nonnegative rates ``theta_L`` (cumulative purchases ``L``) and ``theta_M``
(cumulative sales ``M``), held constant on each grid step.

The unit portfolio ``h = (X / B, Y / S)`` moves only through trading, and
every trade moves it along a direction of ``-K(Pi_t)``, where ``K(Pi_t)`` is
the solvency cone of the current bid-ask matrix. This module simulates
prices and portfolios and measures, path by path, how far ``h_t - h_0`` lies
from the integrated cone, and how far a single-valued portfolio path lies
from the set-valued integral tube of the inclusion it should satisfy.

Discretisation. The account and the stock position are carried forward by
the same growth factors as ``B`` and ``S`` (so a zero strategy leaves the
unit portfolio exactly constant) and the trading terms are added with
Euler steps ``dL = theta_L dt``, ``dM = theta_M dt``, valued at the new
prices. The plain Euler scheme
for ``Y`` is available as ``scheme="euler"`` for comparison.
"""
from __future__ import annotations

import csv
import inspect
import io
import math
import warnings
from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Union

import numpy as np

from . import geometry as geo
from . import qp
from .geometry import ConeSpec, LCSet
from .integrals import BrownianPath, TimeGrid, context_for, riemann_prefix
from .sde import DriftSpec

Rate = Union[float, Callable]

# Frozen slopes for the residual tolerances: inclusion residuals are compared
# with INCLUSION_C * dt and selector residuals with SELECTOR_C * sqrt(dt).
INCLUSION_C = 0.05
SELECTOR_C = 0.1
FRICTIONLESS_TOL = 1e-6
SUP_LIFT_RADIUS = 10.0


class FrictionlessWarning(UserWarning):
    """Transaction costs so small that the solvency cone is nearly a line."""


def _rate_on_grid(rate: Rate, nodes, path: Optional[BrownianPath] = None):
    """Evaluate a constant, ``f(t)`` or ``f(t, path)`` rate at the grid nodes."""
    if callable(rate):
        nargs = len(inspect.signature(rate).parameters)
        vals = rate(nodes, path) if nargs >= 2 else rate(nodes)
        return np.broadcast_to(np.asarray(vals, dtype=float), nodes.shape).copy()
    return np.full(nodes.shape, float(rate))


@dataclass(frozen=True)
class MarketParams:
    lam: float
    mu: float
    r: Rate = 0.0
    b: Rate = 0.0
    sigma: Rate = 0.0
    p: float = 1.0
    x: float = 0.0
    y: float = 0.0

    def __post_init__(self):
        if not 0.0 < self.lam < 1.0:
            raise ValueError("lambda must lie in (0, 1)")
        if not 0.0 < self.mu < 1.0:
            raise ValueError("mu must lie in (0, 1)")
        if not self.p > 0:
            raise ValueError("initial price p must be positive")

    @classmethod
    def from_dict(cls, cfg):
        return cls(lam=cfg["lambda"], mu=cfg["mu"], r=cfg.get("r", 0.0), b=cfg.get("b", 0.0),
                   sigma=cfg.get("sigma", 0.0), p=cfg.get("p", 1.0), x=cfg.get("x", 0.0),
                   y=cfg.get("y", 0.0))

    @property
    def h0(self):
        return np.array([self.x, self.y / self.p])


@dataclass(frozen=True)
class BidAskMatrix:
    pi12: float
    pi21: float

    def __post_init__(self):
        if not (self.pi12 > 0 and self.pi21 > 0):
            raise ValueError("bid-ask entries must be positive")
        if not self.pi12 * self.pi21 > 1.0:
            raise ValueError("a bid-ask matrix needs pi12 * pi21 > 1")

    def matrix(self):
        return np.array([[1.0, self.pi12], [self.pi21, 1.0]])


@dataclass(frozen=True, eq=False)
class StrategyRates:
    """Nonnegative trading rates, one value per grid step."""

    theta_L: np.ndarray
    theta_M: np.ndarray

    def __post_init__(self):
        L = np.array(self.theta_L, dtype=float)
        M = np.array(self.theta_M, dtype=float)
        if L.shape != M.shape or L.ndim != 1:
            raise ValueError("theta_L and theta_M must be 1-d arrays of equal length")
        if np.any(L < 0) or np.any(M < 0) or not (np.all(np.isfinite(L)) and np.all(np.isfinite(M))):
            raise ValueError("strategy rates must be finite and nonnegative")
        L.setflags(write=False)
        M.setflags(write=False)
        object.__setattr__(self, "theta_L", L)
        object.__setattr__(self, "theta_M", M)

    @property
    def steps(self):
        return self.theta_L.shape[0]

    @classmethod
    def constant(cls, steps, theta_L=0.0, theta_M=0.0):
        return cls(np.full(steps, float(theta_L)), np.full(steps, float(theta_M)))

    @classmethod
    def piecewise(cls, steps, theta_L, theta_M):
        """Spread equal-length pieces over ``steps`` grid steps."""
        L = np.asarray(theta_L, dtype=float)
        M = np.asarray(theta_M, dtype=float)
        idx = (np.arange(steps) * len(L)) // steps
        jdx = (np.arange(steps) * len(M)) // steps
        return cls(L[idx], M[jdx])

    def refine(self, factor):
        return StrategyRates(np.repeat(self.theta_L, factor), np.repeat(self.theta_M, factor))


def random_strategy(rng, steps, pieces=8, scale=2.0) -> StrategyRates:
    """Piecewise-constant rates; each piece trades in one direction or rests."""
    L = rng.uniform(0.0, scale, pieces)
    M = rng.uniform(0.0, scale, pieces)
    mode = rng.integers(0, 3, pieces)
    L[mode == 1] = 0.0
    M[mode == 0] = 0.0
    return StrategyRates.piecewise(steps, L, M)


@dataclass(frozen=True, eq=False)
class PriceTrajectory:
    grid: TimeGrid
    B: np.ndarray
    S: np.ndarray
    r: np.ndarray
    b: np.ndarray
    sigma: np.ndarray
    dW: np.ndarray

    def coarsen(self, factor):
        g = TimeGrid(self.grid.horizon, self.grid.steps // factor)
        dW = self.dW.reshape(-1, factor).sum(axis=1)
        return PriceTrajectory(g, self.B[::factor], self.S[::factor], self.r[::factor],
                               self.b[::factor], self.sigma[::factor], dW)


def simulate_price(params: MarketParams, path: BrownianPath) -> PriceTrajectory:
    """Bank account by exact exponential, stock by the log-Euler scheme."""
    if path.dimension != 1:
        raise ValueError("the market is driven by a one-dimensional Brownian motion")
    grid = path.grid
    nodes = grid.nodes
    dt = grid.dt
    r = _rate_on_grid(params.r, nodes, path)
    b = _rate_on_grid(params.b, nodes, path)
    sig = _rate_on_grid(params.sigma, nodes, path)
    dW = np.asarray(path.increments[:, 0], dtype=float)
    # trapezoid integral of r (exact for constant or affine rates)
    logB = np.concatenate([[0.0], np.cumsum(0.5 * (r[:-1] + r[1:]) * dt)])
    logS = np.log(params.p) + np.concatenate(
        [[0.0], np.cumsum((b[:-1] - 0.5 * sig[:-1] ** 2) * dt + sig[:-1] * dW)]
    )
    B = np.exp(logB)
    S = np.exp(logS)
    if not (np.all(B > 0) and np.all(S > 0)):
        raise FloatingPointError("price simulation produced a nonpositive value")
    return PriceTrajectory(grid, B, S, r, b, sig, dW)


def bid_ask(params: MarketParams, B, S) -> BidAskMatrix:
    return BidAskMatrix((1.0 + params.lam) * S / B, B / ((1.0 - params.mu) * S))


def solvency_cone(pi: BidAskMatrix) -> ConeSpec:
    """``cone{e1, e2, pi12 e1 - e2, pi21 e2 - e1}``, canonicalised (e1, e2 drop out)."""
    return geo.make_cone([[1.0, 0.0], [0.0, 1.0], [pi.pi12, -1.0], [-1.0, pi.pi21]])


def frictionless(lam, mu, tol=FRICTIONLESS_TOL) -> bool:
    return lam + mu < tol


def constant_cone_K(lam, mu) -> ConeSpec:
    """Cone generated by ``(1 + lam, -1)`` and ``(-(1 - mu), 1)``.

    The frictionless limit ``lam = mu = 0`` is accepted and gives the line
    through ``(1, -1)``; a ``FrictionlessWarning`` is issued near it.
    """
    if not (0.0 <= lam < 1.0 and 0.0 <= mu < 1.0):
        raise ValueError("lambda and mu must lie in [0, 1)")
    if frictionless(lam, mu):
        warnings.warn("transaction costs near zero: the cone degenerates to a line",
                      FrictionlessWarning, stacklevel=2)
    return geo.make_cone([[1.0 + lam, -1.0], [-(1.0 - mu), 1.0]])


def negated(cone: ConeSpec) -> ConeSpec:
    return geo.make_cone(-cone.generators, cone.dimension)


@dataclass(frozen=True, eq=False)
class Portfolio:
    X: np.ndarray
    Y: np.ndarray
    unit: Optional[np.ndarray] = None  # (M+1) x 2 unit holdings when tracked exactly


def simulate_portfolio(params: MarketParams, strategy: StrategyRates, prices: PriceTrajectory,
                       grid: Optional[TimeGrid] = None, scheme: str = "exponential") -> Portfolio:
    """Holdings under a strategy.

    The exponential scheme is run in unit coordinates,
    ``h_{i+1} = h_i + (tradeX_i / B_{i+1}, tradeY_i / S_{i+1})``, which is the
    same recursion as ``X_{i+1} = X_i B_{i+1} / B_i + tradeX_i`` but leaves
    ``h`` bit-for-bit constant under a zero strategy. ``Portfolio.unit``
    carries that ``h``; the Euler scheme leaves it unset.
    """
    grid = grid or prices.grid
    if strategy.steps != grid.steps:
        raise ValueError("strategy length does not match the grid")
    dt = grid.dt
    lam, mu = params.lam, params.mu
    tradeX = (-(1.0 + lam) * strategy.theta_L + (1.0 - mu) * strategy.theta_M) * dt
    tradeY = (strategy.theta_L - strategy.theta_M) * dt
    if scheme == "exponential":
        h = np.empty((grid.steps + 1, 2))
        h[0] = params.h0
        for i in range(grid.steps):
            h[i + 1, 0] = h[i, 0] + tradeX[i] / prices.B[i + 1]
            h[i + 1, 1] = h[i, 1] + tradeY[i] / prices.S[i + 1]
        h.setflags(write=False)
        return Portfolio(h[:, 0] * prices.B, h[:, 1] * prices.S, h)
    if scheme != "euler":
        raise ValueError(f"unknown scheme {scheme!r}")
    gX = 1.0 + prices.r[:-1] * dt
    gY = 1.0 + prices.b[:-1] * dt + prices.sigma[:-1] * prices.dW
    X = np.empty(grid.steps + 1)
    Y = np.empty(grid.steps + 1)
    X[0], Y[0] = params.x, params.y
    for i in range(grid.steps):
        X[i + 1] = X[i] * gX[i] + tradeX[i]
        Y[i + 1] = Y[i] * gY[i] + tradeY[i]
    return Portfolio(X, Y)


def portfolio_unit(pf: Portfolio, prices: PriceTrajectory):
    """``h`` for a simulated portfolio: the tracked value when present, else ``X / B, Y / S``."""
    if pf.unit is not None:
        return pf.unit
    return unit_portfolio(pf.X, pf.Y, prices.B, prices.S)


def unit_portfolio(X, Y, B, S):
    B = np.asarray(B, dtype=float)
    S = np.asarray(S, dtype=float)
    if np.any(B <= 0) or np.any(S <= 0):
        raise ValueError("prices must be positive")
    return np.column_stack([np.asarray(X, dtype=float) / B, np.asarray(Y, dtype=float) / S])


def node_cones(params: MarketParams, prices: PriceTrajectory):
    """``-K(Pi_{t_i})`` at every node, built from the two reduced generators."""
    lam, mu = params.lam, params.mu
    out = []
    for B, S in zip(prices.B, prices.S):
        out.append(geo.make_cone([[-(1.0 + lam) / B, 1.0 / S], [(1.0 - mu) / B, -1.0 / S]]))
    return out


def riemann_cone_integral(cones: Sequence[ConeSpec], upto: int) -> ConeSpec:
    """Riemann sum of the cones at nodes ``0..upto-1``: the conic hull of the union."""
    cones = list(cones)
    if not 1 <= upto <= len(cones):
        raise ValueError("need 1 <= upto <= number of cones")
    G = np.vstack([c.generators for c in cones[:upto]])
    return geo.make_cone(G, cones[0].dimension)


def cone_integral_prefix(cones: Sequence[ConeSpec]):
    """Integrals up to every node in one sweep; entry 0 is the trivial cone."""
    d = cones[0].dimension
    acc = geo.trivial_cone(d)
    out = [acc]
    for c in cones[:-1]:
        if acc.is_trivial:
            acc = c
        elif not acc.is_full_space():
            acc = geo.make_cone(np.vstack([acc.generators, c.generators]), d)
        out.append(acc)
    return out


def _cone_residuals(points, cone: ConeSpec):
    if cone.is_trivial:
        return np.linalg.norm(points, axis=1)
    if cone.is_full_space():
        return np.zeros(points.shape[0])
    return qp.distances(points, np.zeros((1, cone.dimension)), cone.generators)


def inclusion_check(h, cone_integrals: Sequence[ConeSpec]):
    """Residuals ``d(h_{t_i} - h_0, integral up to t_i)``.

    ``h`` is an ``(M+1, 2)`` unit-portfolio path or an ``(S, M+1, 2)`` stack
    of paths sharing the price path (and therefore the cones).
    """
    H = np.asarray(h, dtype=float)
    single = H.ndim == 2
    if single:
        H = H[None]
    if H.shape[1] != len(cone_integrals):
        raise ValueError("path and cone integrals are not aligned")
    D = H - H[:, :1, :]
    res = np.empty(H.shape[:2])
    for i, cone in enumerate(cone_integrals):
        res[:, i] = _cone_residuals(np.ascontiguousarray(D[:, i, :]), cone)
    return res[0] if single else res


def inclusion_tolerance(grid: TimeGrid, c=INCLUSION_C):
    return c * grid.dt


def selector_tolerance(grid: TimeGrid, c=SELECTOR_C):
    return c * math.sqrt(grid.dt)


def residual_csv(residuals, grid: TimeGrid, tolerance: float) -> str:
    """CSV with columns path_id, node, t, residual, tolerance."""
    R = np.atleast_2d(np.asarray(residuals, dtype=float))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["path_id", "node", "t", "residual", "tolerance"])
    for p in range(R.shape[0]):
        for i in range(R.shape[1]):
            w.writerow([p, i, repr(float(grid.t(i))), repr(float(R[p, i])), repr(float(tolerance))])
    return buf.getvalue()


# ---------------------------------------------------------------------------
# lifted coefficients and the differential inclusion


def _matrix_at(matrix, t):
    Mt = matrix(t) if callable(matrix) else matrix
    return np.atleast_2d(np.asarray(Mt, dtype=float))


def affine_lift(matrix, shift: LCSet, norm_bound: float, horizon: float = 1.0,
                domain_cone: Optional[ConeSpec] = None, spot_checks: int = 8, seed: int = 0,
                name: str = "affine-lift") -> DriftSpec:
    """Set-valued drift ``A -> M_t A (+) shift`` lifted from ``x -> M_t x + shift``.

    ``norm_bound`` bounds the spectral norm of ``M_t`` on ``[0, horizon]`` and
    is verified on a grid of times. The sets fed to the drift carry
    ``domain_cone`` (default: the shift's cone); the lift is an ``L_C`` drift
    only when ``M_t`` maps that cone into the shift's cone, and registration
    fails with a cone mismatch otherwise.
    """
    if not (np.isfinite(norm_bound) and norm_bound >= 0):
        raise ValueError("the declared bound on |M_t| must be finite and nonnegative")
    for t in np.linspace(0.0, horizon, 33):
        if np.linalg.norm(_matrix_at(matrix, t), 2) > norm_bound * (1 + 1e-12) + 1e-15:
            raise ValueError(f"|M_t| exceeds the declared bound at t={t:.3g}")
    shift_h2 = geo.hausdorff_distance(shift, geo.cone_set(shift.cone)) ** 2
    beta = max(2.0 * max(norm_bound**2, shift_h2), 1e-12)

    def evaluator(t, ctx, A):
        return geo.general_sum(geo.linear_image(_matrix_at(matrix, t), A), shift)

    return DriftSpec(evaluator, beta, shift.cone, name, horizon, spot_checks, seed,
                     domain_cone=domain_cone)


def finance_drift(params: MarketParams, horizon=1.0, spot_checks=8) -> DriftSpec:
    """``x -> diag(r_t, b_t) x - K`` lifted to sets of points."""
    K = constant_cone_K(params.lam, params.mu)
    shift = geo.cone_set(negated(K))
    if callable(params.r) or callable(params.b):
        ts = np.linspace(0.0, horizon, 257)
        bound = float(max(np.abs(_rate_on_grid(params.r, ts)).max(), np.abs(_rate_on_grid(params.b, ts)).max()))

        def matrix(t):
            return np.diag([_rate_on_grid(params.r, np.atleast_1d(t))[0], _rate_on_grid(params.b, np.atleast_1d(t))[0]])
    else:
        matrix = np.diag([float(params.r), float(params.b)])
        bound = float(np.abs(np.diag(matrix)).max())
    return affine_lift(matrix, shift, bound, horizon, domain_cone=geo.trivial_cone(2),
                       spot_checks=spot_checks, name="finance-drift")


def finance_diffusion(params: MarketParams):
    """``x -> diag(0, sigma_t) x`` as a one-member family of ``2 x 1`` matrices."""

    def g(t, x):
        s = _rate_on_grid(params.sigma, np.atleast_1d(float(t)))[0]
        return np.array([[[0.0], [s * x[1]]]])

    return g


def sdi_selector_check(x_path, drift: DriftSpec, diffusion: Optional[Callable], path: BrownianPath):
    """Residuals ``d(x_{t_i} - x_0, int_0^{t_i} F(x) ds (+) int_0^{t_i} g(x) dB)``.

    ``drift`` is evaluated on the singletons ``{x_{t_j}}``; ``diffusion(t, x)``
    returns an ``(N, d, m)`` array for the point ``x``.
    """
    x = np.asarray(x_path, dtype=float)
    grid = path.grid
    if x.shape[0] != grid.steps + 1:
        raise ValueError("path and grid are not aligned")
    d = x.shape[1]
    trivial = geo.trivial_cone(d)
    F = []
    for i in range(grid.steps):
        ctx = context_for(path, i)
        F.append(drift(grid.t(i), ctx, geo.make_set([x[i]], trivial)))
    R = riemann_prefix(F, grid.dt)  # R[i] integrates nodes 0..i-1
    if diffusion is not None:
        G = np.stack([diffusion(grid.t(i), x[i]) for i in range(grid.steps)])
        steps = np.einsum("indm,im->ind", G, path.increments)
        ito = np.concatenate([np.zeros((1,) + steps.shape[1:]), np.cumsum(steps, axis=0)])
    else:
        ito = np.zeros((grid.steps + 1, 1, d))
    res = np.empty(grid.steps + 1)
    for i in range(grid.steps + 1):
        tube = geo.minkowski_sum(R[i], geo.make_set(ito[i], trivial))
        res[i] = geo.point_distance(x[i] - x[0], tube)
    return res


def sup_lift(g: Callable, alpha: float, radius: float = SUP_LIFT_RADIUS, samples: int = 16):
    """Entrywise ``sup_{x in A} g(t, x)`` approximated on vertices and rays.

    Points ``v + s c`` for vertices ``v``, generators ``c`` and ``s`` up to
    ``radius`` are evaluated; entries are capped at ``alpha`` in absolute
    value. The returned callable gives ``(matrix, error)`` where ``error``
    is the change of the sup between half and full radius, a gauge of how
    much of the ray was left unexplored.
    """

    def lifted(t, ctx, A: LCSet):
        V = A.vertices
        Gc = A.cone.generators
        s = np.linspace(0.0, radius, samples)
        pts = [V]
        for c in Gc:
            pts.append((V[:, None, :] + s[None, :, None] * c[None, None, :]).reshape(-1, V.shape[1]))
        P = np.vstack(pts)
        vals = np.stack([np.asarray(g(t, p), dtype=float) for p in P])
        full = np.clip(vals.max(axis=0), -alpha, alpha)
        if Gc.shape[0]:
            near = np.linalg.norm(P - V[np.argmin(np.linalg.norm(P[:, None, :] - V[None], axis=2), axis=1)], axis=1)
            half = np.clip(vals[near <= radius / 2 + 1e-12].max(axis=0), -alpha, alpha)
            err = float(np.abs(full - half).max())
        else:
            err = 0.0
        return full, err

    return lifted
