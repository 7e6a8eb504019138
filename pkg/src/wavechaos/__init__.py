"""Numerical toolkit for spatial averages of the hyperbolic Anderson model.

Chaos-expansion kernels for the wave equation driven by Gaussian noise that
is colored in time and space, exact/quadrature covariance formulas, limiting
constants, lattice noise simulation, and CLT / Malliavin-derivative checks.
"""

__version__ = "0.1.0"
