"""Time grids, Brownian paths and pathwise set-valued integrals.

The Lebesgue integral of a set-valued field is approximated by a
left-endpoint Riemann-Minkowski sum, and the Aumann-Ito integral of a
truncated family ``{g^n}`` by the convex hull of the ``N`` single-selector
Ito sums along one Brownian path.
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import geometry as geo
from .geometry import ConeMismatchError, LCSet


@dataclass(frozen=True)
class TimeGrid:
    horizon: float
    steps: int

    def __post_init__(self):
        if not self.horizon > 0:
            raise ValueError("horizon must be positive")
        if int(self.steps) != self.steps or self.steps < 1:
            raise ValueError("steps must be a positive integer")
        object.__setattr__(self, "steps", int(self.steps))
        object.__setattr__(self, "horizon", float(self.horizon))

    @property
    def dt(self):
        return self.horizon / self.steps

    @property
    def nodes(self):
        return np.arange(self.steps + 1) * self.dt

    def t(self, i):
        return i * self.dt

    def refine(self, factor=2):
        return TimeGrid(self.horizon, self.steps * factor)


def path_rng(seed, path_index=0, stream=0):
    """Counter-based generator keyed by (seed, path index, stream)."""
    key = [int(seed) & (2**64 - 1), (int(path_index) << 8 | int(stream)) & (2**64 - 1)]
    return np.random.Generator(np.random.Philox(key=key))


@dataclass(frozen=True, eq=False)
class BrownianPath:
    grid: TimeGrid
    dimension: int
    increments: np.ndarray  # steps x m
    seed: int
    path_index: int = 0

    def values(self):
        """``B_{t_i}`` for ``i = 0..M`` as an ``(M+1) x m`` array."""
        out = np.zeros((self.grid.steps + 1, self.dimension))
        np.cumsum(self.increments, axis=0, out=out[1:])
        return out

    def coarsen(self, factor):
        """The same path observed on a grid ``factor`` times coarser."""
        M = self.grid.steps
        if M % factor:
            raise ValueError("factor must divide the number of steps")
        inc = self.increments.reshape(M // factor, factor, self.dimension).sum(axis=1)
        inc.setflags(write=False)
        return BrownianPath(TimeGrid(self.grid.horizon, M // factor), self.dimension, inc, self.seed, self.path_index)

    def with_increments(self, increments):
        inc = np.array(increments, dtype=float)
        inc.setflags(write=False)
        return BrownianPath(self.grid, self.dimension, inc, self.seed, self.path_index)


def sample_brownian(grid: TimeGrid, m: int, seed: int, path_index: int = 0) -> BrownianPath:
    """Increments ``N(0, dt I_m)``, reproducible from (seed, path index) alone."""
    if m < 1:
        raise ValueError("Brownian dimension must be >= 1")
    z = path_rng(seed, path_index).standard_normal((grid.steps, m))
    inc = z * np.sqrt(grid.dt)
    inc.setflags(write=False)
    return BrownianPath(grid, int(m), inc, int(seed), int(path_index))


def sample_brownian_family(grid, m, seed, paths):
    return [sample_brownian(grid, m, seed, p) for p in range(paths)]


@dataclass(frozen=True, eq=False)
class SetPath:
    grid: TimeGrid
    values: tuple

    def __post_init__(self):
        vals = tuple(self.values)
        if len(vals) != self.grid.steps + 1:
            raise ValueError("a set path needs one value per grid node")
        cone = vals[0].cone
        for v in vals[1:]:
            if v.cone is not cone and not v.cone.same_as(cone):
                raise ConeMismatchError("set path values must share one generating cone")
        object.__setattr__(self, "values", vals)

    @property
    def cone(self):
        return self.values[0].cone

    def __len__(self):
        return len(self.values)

    def __getitem__(self, i):
        return self.values[i]


@dataclass(frozen=True)
class PathContext:
    """What a coefficient may see at node ``i``: only increments with index < i."""

    path_index: int
    node: int
    t: float
    past_increments: np.ndarray
    extra: dict = field(default_factory=dict)


def context_for(path: BrownianPath, node: int, extra=None) -> PathContext:
    return PathContext(path.path_index, node, path.grid.t(node), path.increments[:node], extra or {})


def _sequence_and_dt(values, dt):
    if isinstance(values, SetPath):
        return values.values, values.grid.dt if dt is None else dt
    if dt is None:
        raise ValueError("dt is required for a plain sequence of sets")
    seq = list(values)
    if seq:
        cone = seq[0].cone
        for F in seq[1:]:
            if F.cone is not cone and not F.cone.same_as(cone):
                raise ConeMismatchError("integrand values must share one generating cone")
    return seq, dt


def riemann_set_integral(values, from_index: int, to_index: int, dt=None) -> LCSet:
    """Left-endpoint sum of ``dt * F_i`` for ``i`` in ``[from_index, to_index)``."""
    seq, dt = _sequence_and_dt(values, dt)
    if not 0 <= from_index < to_index <= len(seq):
        raise ValueError("need 0 <= from_index < to_index <= len(values)")
    acc = geo.scale(dt, seq[from_index])
    for i in range(from_index + 1, to_index):
        acc = geo.minkowski_sum(acc, geo.scale(dt, seq[i]))
    return acc


def riemann_prefix(values, dt=None):
    """All prefix integrals ``I_0 = {0}+C, I_1, ..., I_M`` in one sweep."""
    seq, dt = _sequence_and_dt(values, dt)
    acc = geo.cone_set(seq[0].cone)
    out = [acc]
    for F in seq:
        acc = geo.minkowski_sum(acc, geo.scale(dt, F))
        out.append(acc)
    return out


def _family_array(family_values, d=None):
    G = np.asarray(family_values, dtype=float)
    if G.ndim != 4:
        raise ValueError("family values must be shaped (nodes, N, d, m)")
    return G


def ito_points(family_values, path: BrownianPath, to_index: int):
    """The ``N`` points ``sum_{i<to_index} g^n(t_i) dB_i`` as an ``N x d`` array."""
    G = _family_array(family_values)
    if to_index == 0:
        return np.zeros((G.shape[1], G.shape[2]))
    return np.einsum("indm,im->nd", G[:to_index], path.increments[:to_index])


def ito_family_integral(family_values, path: BrownianPath, to_index: int) -> LCSet:
    """Convex hull of the truncated family's Ito sums, a compact polytope."""
    P = ito_points(family_values, path, to_index)
    return geo.make_set(P, geo.trivial_cone(P.shape[1]))


def evaluate_field_on_path(field: Callable, path_values, context: BrownianPath, expected_cone=None):
    """Apply ``field(t, ctx, X_t)`` node by node.

    All outputs must share one cone; when ``field`` carries a declared cone
    (a drift spec) or ``expected_cone`` is given, they must equal it.
    """
    seq = path_values.values if isinstance(path_values, SetPath) else list(path_values)
    grid = context.grid
    if expected_cone is None:
        expected_cone = getattr(field, "cone", None)
    out = []
    for i, A in enumerate(seq):
        F = field(grid.t(i), context_for(context, min(i, grid.steps)), A)
        ref = expected_cone if expected_cone is not None else (out[0].cone if out else None)
        if ref is not None and F.cone is not ref and not F.cone.same_as(ref):
            raise ConeMismatchError(f"field output cone at node {i} does not match the declared cone")
        out.append(F)
    return out


def mean_and_se(values):
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        raise ValueError("need at least one value")
    mean = float(np.add.reduce(v) / v.size)
    se = float(np.std(v, ddof=1) / np.sqrt(v.size)) if v.size > 1 else 0.0
    return mean, se


def mc_mean_h2(pairs: Sequence, node: int):
    """Mean and standard error of ``h^2(X_node, Y_node)`` over path pairs, in index order."""
    pairs = list(pairs)
    if not pairs:
        raise ValueError("need at least one path pair")
    h2 = [geo.hausdorff_distance(X[node], Y[node]) ** 2 for X, Y in pairs]
    return mean_and_se(h2)


def set_paths_csv(paths: Sequence[SetPath]) -> str:
    """CSV text with columns path_id, node, t, vertex_json, cone_id."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["path_id", "node", "t", "vertex_json", "cone_id"])
    for p, sp in enumerate(paths):
        for i, A in enumerate(sp.values):
            w.writerow([p, i, repr(float(sp.grid.t(i))), json.dumps(A.vertices.tolist()), A.cone.cone_id])
    return buf.getvalue()
