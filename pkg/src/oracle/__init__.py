"""Brute-force dense reference solvers on tiny grids."""
