"""Permutation-invariant dataset meta-features with Wasserstein regularity checks."""

__version__ = "0.1.0"
