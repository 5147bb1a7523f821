"""Spectral solvers and blow-up analysis for generalized KP equations."""

from .spectral import Grid2D, forward, inverse, derivative_x, derivative_y, antiderivative_x
from .etd import contour_coefficients, etdrk4_step, phi
from .direct import GkpParams, InitialData, run_direct, real_power

__version__ = "0.1.0"
