"""Heat-trace coefficients and spectral checks for chiral bag boundary problems."""

__version__ = "0.1.0"
