"""Stationary targets for the asymptotic studies."""
