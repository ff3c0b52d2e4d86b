"""Dispersion statistics, Gaussian orthant sets and second-order regions."""
