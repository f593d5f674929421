"""Continuous wavelet toolkit for trilinear forms, sparse bounds and weighted Leibniz checks."""
from .grid import AffineGrid, AffinePoint, Grid, GridError, SampledFunction, sample
from .kernels import BACKEND
from .wavelet import make_mother_wavelet

__version__ = "0.1.0"

__all__ = ["AffineGrid", "AffinePoint", "BACKEND", "Grid", "GridError", "SampledFunction", "sample",
           "make_mother_wavelet", "__version__"]
