"""Numerical constants and the Fourier normalization used throughout.

Units are dimensionless with hbar = 1.  One-dimensional Fourier transforms
follow

    f_hat(p) = (2 pi)^(-1/2) * integral exp(-i p x) f(x) dx,

and two-dimensional ones

    f_hat(q, p) = (2 pi)^(-1) * double integral exp(-i (q x + p y)) f(x, y) dx dy.

Every 2 pi factor in the package is taken from this module.
"""

import math

TWO_PI = 2.0 * math.pi
SQRT_2PI = math.sqrt(TWO_PI)
INV_SQRT_2PI = 1.0 / SQRT_2PI
PI_QUARTER = math.pi ** -0.25

DEFAULT_X_MIN = -20.0
DEFAULT_X_MAX = 20.0
DEFAULT_N = 4097

# degree cap of the Hermite recurrence
MAX_HERMITE_DEGREE = 200

# Fourier transforms warn when the input exceeds this at the grid edges
EDGE_DECAY_TOL = 1e-10
