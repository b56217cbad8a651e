"""Named coefficient sets shipped with the package.

``compounding``        linear drift ``F(A) = diag(1, 1/2) A`` on the positive
                       orthant, no diffusion; the exact solution is a
                       translated orthant moving along ``x0 * exp(diag t)``.
``bounded-diffusion``  contracting drift ``F(A) = A / 5`` and a saturating
                       diffusion family whose members all point along one
                       direction, so every Ito hull is a segment.
``cone-constant``      ``F = C``, no diffusion; the solution is constant.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from . import geometry as geo
from .geometry import LCSet
from .sde import DiffusionSpec, DriftSpec


@dataclass(frozen=True, eq=False)
class CoefficientSet:
    name: str
    xi: LCSet
    drift: DriftSpec
    diffusion: DiffusionSpec
    description: str = ""
    exact: Optional[Callable] = None  # exact solution at time t, when known


def compounding(horizon=1.0, rates=(1.0, 0.5), x0=(1.0, 1.0)) -> CoefficientSet:
    C = geo.orthant(2)
    D = np.diag(rates)
    beta = float(max(abs(r) for r in rates) ** 2)
    xi = geo.make_set([x0], C)
    drift = DriftSpec(lambda t, ctx, A: geo.linear_image(D, A), beta, C, "compounding", horizon)

    def exact(t):
        return geo.make_set([np.asarray(x0) * np.exp(np.asarray(rates) * t)], C)

    return CoefficientSet("compounding", xi, drift, DiffusionSpec.zero(2, 1, C),
                          "linear drift diag(rates) on the positive orthant", exact)


def bounded_diffusion(horizon=1.0, members=8, ratio=0.7, alpha1=0.5, contraction=0.2) -> CoefficientSet:
    C = geo.orthant(2)
    xi = geo.make_set([[0.5, 0.5]], C)
    drift = DriftSpec(lambda t, ctx, A: geo.scale(contraction, A), contraction**2, C,
                      "contracting", horizon)
    alphas = alpha1 * ratio ** np.arange(members)
    theta = np.linspace(0.0, np.pi / 2, members)
    U = -np.column_stack([np.cos(theta), np.sin(theta)])  # unit directions in the polar cone
    offsets = np.cos(np.arange(1, members + 1))
    slopes = np.full(members, 0.5)
    e = np.array([1.0, -1.0]) / np.sqrt(2.0)

    def batch(t, ctx, A):
        sig = (A.vertices @ U.T).max(axis=0)
        amp = alphas * (offsets + slopes * np.tanh(sig))
        return amp[:, None, None] * e[None, :, None]

    def member(n):
        return lambda t, ctx, A: batch(t, ctx, A)[n]

    tail_sum = float(alphas[-1] * ratio / (1 - ratio))
    tail_sq = float(alphas[-1] ** 2 * ratio**2 / (1 - ratio**2))
    diffusion = DiffusionSpec(
        tuple(member(n) for n in range(members)), tuple(alphas), 2, 1, C,
        tail_bound=tail_sq, alpha_tail=tail_sum, batch=batch, name="saturating", horizon=horizon,
    )
    return CoefficientSet("bounded-diffusion", xi, drift, diffusion,
                          "contracting drift plus a saturating one-direction diffusion family")


def cone_constant(horizon=1.0, x0=(1.0, 2.0)) -> CoefficientSet:
    C = geo.orthant(2)
    CC = geo.cone_set(C)
    xi = geo.make_set([x0], C)
    drift = DriftSpec(lambda t, ctx, A: CC, 1.0, C, "cone", horizon)
    return CoefficientSet("cone-constant", xi, drift, DiffusionSpec.zero(2, 1, C),
                          "drift identically equal to the cone", lambda t: xi)


SDE_PRESETS = {
    "compounding": compounding,
    "bounded-diffusion": bounded_diffusion,
    "cone-constant": cone_constant,
}

FINANCE_DEFAULT = {
    "lambda": 0.2,
    "mu": 0.3,
    "r": 0.02,
    "b": 0.05,
    "sigma": 0.1,
    "p": 1.0,
    "x": 1.0,
    "y": 1.0,
    "T": 1.0,
}

PRESET_NAMES = tuple(SDE_PRESETS) + ("finance-default",)


def get(name, horizon=1.0) -> CoefficientSet:
    try:
        return SDE_PRESETS[name](horizon=horizon)
    except KeyError:
        raise KeyError(f"unknown SDE preset {name!r}; choose from {sorted(SDE_PRESETS)}") from None
