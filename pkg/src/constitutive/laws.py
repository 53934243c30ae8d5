"""Pointwise constitutive laws on 3-vectors and the exponential penalty.

All functions accept a single vector or a stack of vectors along the last
axis. Exponentials are evaluated with their exponent capped at EXP_CAP.
"""

from __future__ import annotations

import math

import numpy as np

from src.constitutive.params import ConstitutiveParams, PerturbationKind, PerturbationSpec
from src.errors import InvalidArgument

EXP_CAP = 700.0


def safe_power(m: np.ndarray, exponent: float) -> np.ndarray:
    """m ** exponent for m >= 0 through the log, with 0 mapped to 0."""
    m = np.asarray(m, dtype=float)
    with np.errstate(divide="ignore"):
        logs = np.log(np.where(m > 0, m, 1.0))
    return np.where(m > 0, np.exp(np.minimum(exponent * logs, EXP_CAP)), 0.0)


def _vectors(u) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    if u.shape[-1:] != (3,):
        raise InvalidArgument(f"expected 3-vectors, got shape {u.shape}")
    if not np.all(np.isfinite(u)):
        raise InvalidArgument("non-finite input vector")
    return u


def _norms(u: np.ndarray) -> np.ndarray:
    return np.sqrt(np.sum(u * u, axis=-1))


def _check_eps(eps: float) -> float:
    eps = float(eps)
    if not 0 < eps < 1:
        raise InvalidArgument(f"eps must lie in (0, 1), got {eps}")
    return eps


def _nu(params: ConstitutiveParams, nu: float | None) -> float:
    if nu is not None:
        return float(nu)
    if not isinstance(params.nu, (int, float)):
        raise InvalidArgument("nu is a field; pass its value at the point explicitly")
    return float(params.nu)


def _exponent(s, eps: float) -> np.ndarray:
    return np.minimum(np.maximum(np.asarray(s, dtype=float), 0.0) / eps, 1.0 / eps**2)


def penalty_k(s, eps: float):
    """k_eps(s) = min(exp(max(s, 0)/eps), exp(1/eps^2)): 1 for s <= 0, saturating above 1/eps."""
    eps = _check_eps(eps)
    value = np.exp(np.minimum(_exponent(s, eps), EXP_CAP))
    return float(value) if np.ndim(value) == 0 else value


def penalty_saturated(s, eps: float):
    """True where the exponent of k_eps hit the EXP_CAP ceiling."""
    eps = _check_eps(eps)
    flags = _exponent(s, eps) > EXP_CAP
    return bool(flags) if np.ndim(flags) == 0 else flags


def penalty_primitive(s, eps: float):
    """phi_eps(s), the integral of k_eps from 0 to s, in closed form."""
    eps = _check_eps(eps)
    s = np.asarray(s, dtype=float)
    knee = eps * min(1.0 / eps**2, EXP_CAP)  # where k_eps stops growing
    top = math.exp(knee / eps)
    rising = eps * np.expm1(np.clip(s, 0.0, knee) / eps)
    with np.errstate(over="ignore", invalid="ignore"):
        flat = eps * math.expm1(knee / eps) + (s - knee) * top
    value = np.where(s <= 0, s, np.where(s <= knee, rising, flat))
    return float(value) if np.ndim(value) == 0 else value


def power_law_apply(u, params: ConstitutiveParams, nu: float | None = None) -> np.ndarray:
    """nu |u|^(p-2) u, returning 0 at u = 0 for every p > 1."""
    u = _vectors(u)
    factor = _nu(params, nu) * safe_power(_norms(u), params.p - 2.0)
    return factor[..., None] * u


def penalized_apply(u, psi: float, params: ConstitutiveParams, nu: float | None = None) -> np.ndarray:
    """nu k_eps(|u|^p - psi^p) |u|^(p-2) u."""
    if params.penalty_eps is None:
        raise InvalidArgument("penalized_apply needs params.penalty_eps")
    u = _vectors(u)
    psi = float(psi)
    if params.constraint is not None and psi < params.constraint.alpha * (1 - 1e-12):
        raise InvalidArgument(f"psi = {psi} is below alpha = {params.constraint.alpha}")
    m = _norms(u)
    k = penalty_k(safe_power(m, params.p) - psi**params.p, params.penalty_eps)
    factor = _nu(params, nu) * k * safe_power(m, params.p - 2.0)
    return factor[..., None] * u


def penalized_potential(u, psi: float, params: ConstitutiveParams, nu: float | None = None):
    """(nu/p) phi_eps(|u|^p - psi^p), whose gradient in u is penalized_apply."""
    if params.penalty_eps is None:
        raise InvalidArgument("penalized_potential needs params.penalty_eps")
    u = _vectors(u)
    s = safe_power(_norms(u), params.p) - float(psi) ** params.p
    return _nu(params, nu) / params.p * penalty_primitive(s, params.penalty_eps)


def perturbation_apply(spec: PerturbationSpec, t: float, u) -> np.ndarray:
    """The lower-order operator delta(t, u); time-independent for the built-in kinds."""
    u = _vectors(u)
    if spec.kind is PerturbationKind.ZERO:
        return np.zeros_like(u)
    if spec.kind is PerturbationKind.LINEAR_SATURATING:
        return spec.scale * u / (1.0 + _norms(u))[..., None]
    raise InvalidArgument(f"unknown perturbation kind {spec.kind!r}")


def sharp_monotonicity_constant(p: float, nu_min: float) -> float:
    """Known sharp constant of the power-law monotonicity inequality.

    (a(u) - a(v)).(u - v) >= c |u - v|^p for p >= 2, and
    >= c (|u| + |v|)^(p-2) |u - v|^2 for p < 2.
    """
    if p >= 2:
        return 2.0 ** (2.0 - p) * nu_min
    return (p - 1.0) * nu_min
