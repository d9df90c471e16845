"""Low-rank tensor-train surrogates of parametric functions via Chebyshev
interpolation and adaptive tensor completion."""

__version__ = "0.1.0"
