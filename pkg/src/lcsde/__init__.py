"""Set-valued stochastic calculus on spaces of cone-generated convex sets.

Modules:
    qp         distance from a point to ``conv(W) + cone(G)``
    geometry   exact arithmetic and Hausdorff distances for such sets
    integrals  time grids, Brownian paths, set-valued Riemann and Ito sums
    sde        Picard and Euler solvers with rate and stability diagnostics
    finance    two-asset market with proportional transaction costs
    presets    named coefficient sets
    cli        the ``lcsde`` command
"""

__version__ = "0.1.0"
