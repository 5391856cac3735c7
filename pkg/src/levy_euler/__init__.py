"""Euler scheme for pure-jump Lévy-driven SDEs: rate classification and Monte Carlo verification."""

__version__ = "0.1.0"
