"""Convolution-quadrature boundary element solver for 2D heat transmission problems."""

__version__ = "0.1.0"
