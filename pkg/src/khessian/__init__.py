"""Numerical toolkit for radial solutions of weighted k-Hessian equations."""

__version__ = "0.1.0"
