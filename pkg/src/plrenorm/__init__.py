"""Exact renormalization machinery for piecewise-affine interval maps."""

__version__ = "0.1.0"
