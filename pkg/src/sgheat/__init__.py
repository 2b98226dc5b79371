"""Space-time stochastic Galerkin solver for the heat equation with a
Gaussian random diffusion coefficient, with a Monte-Carlo baseline and a
manufactured finite-chaos benchmark harness.
"""

__version__ = "0.1.0"
