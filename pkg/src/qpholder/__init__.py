"""Numerical toolkit for quasi-periodic Schrodinger cocycles and the Holder-1/2
continuity of their spectral measures."""

__version__ = "0.1.0"
