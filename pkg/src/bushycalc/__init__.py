"""Exact finite-scale bushy-tree combinatorics with verifiable certificates."""

__version__ = "0.1.0"
