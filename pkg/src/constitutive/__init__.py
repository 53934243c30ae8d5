"""Constitutive laws: power law, exponential penalty, perturbation, structure checks."""
