"""Finite-blocklength bounds and second-order regions for side-information coding."""
