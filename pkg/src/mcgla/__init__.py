"""Exact engine for a Maurer-Cartan graded Lie algebra of the Einstein-scalar field equations on 3+1 splittings."""

__version__ = "0.1.0"
