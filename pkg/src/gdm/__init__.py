"""Generalized density manifold laboratory."""
