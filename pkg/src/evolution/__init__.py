"""Backward-Euler evolution, the constrained step and the energy ledger."""
