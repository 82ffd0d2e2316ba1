"""Shrinkage priors and predictive risk for circulant correlation structure Gaussian models."""

__version__ = "0.1.0"
