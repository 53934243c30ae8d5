"""Staggered-grid geometry, operators and norms on a box domain."""
