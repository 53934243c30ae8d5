"""Closed-form decay bounds for phi' + c phi^(p/2) <= l (p > 2) and phi' + c phi <= l."""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np
from scipy.integrate import trapezoid

from src.errors import InvalidArgument

LSeries = tuple[Sequence[float], Sequence[float]] | None


def _series(l_series: LSeries) -> tuple[np.ndarray, np.ndarray]:
    if l_series is None:
        return np.zeros(0), np.zeros(0)
    times, values = (np.asarray(part, dtype=float) for part in l_series)
    if times.shape != values.shape:
        raise InvalidArgument("l series times and values differ in length")
    if np.any(np.diff(times) <= 0):
        raise InvalidArgument("l series times must be strictly increasing")
    if np.any(values < 0):
        raise InvalidArgument("l must be nonnegative")
    return times, values


def integrate_l(l_series: LSeries, a: float, b: float) -> float:
    """Trapezoid integral of l over [a, b] on the series' own nodes (linear in between)."""
    times, values = _series(l_series)
    if times.size == 0 or b <= a:
        return 0.0
    a, b = max(a, times[0]), min(b, times[-1])
    if b <= a:
        return 0.0
    inside = (times > a) & (times < b)
    nodes = np.concatenate(([a], times[inside], [b]))
    return float(trapezoid(np.interp(nodes, times, values), nodes))


def simon_bound(c: float, l_series: LSeries, p: float, t0: float, t: float) -> float:
    """((p-2)/2 c (t - t0))^(-2/(p-2)) + int_t0^t l."""
    if not p > 2:
        raise InvalidArgument(f"the algebraic bound needs p > 2, got {p}")
    if not c > 0:
        raise InvalidArgument(f"c must be positive, got {c}")
    if not t > t0:
        raise InvalidArgument(f"need t > t0, got t={t}, t0={t0}")
    decay = (0.5 * (p - 2.0) * c * (t - t0)) ** (-2.0 / (p - 2.0))
    return decay + integrate_l(l_series, t0, t)


def window_sup(l_series: LSeries, t0: float) -> float:
    """sup over stored tau >= t0 of int_tau^(tau+1) l, windows truncated at the last node."""
    times, _ = _series(l_series)
    starts = [t0] + [float(t) for t in times if t > t0]
    return max((integrate_l(l_series, tau, tau + 1.0) for tau in starts), default=0.0)


def haraux_bound(phi0: float, c: float, l_series: LSeries, t0: float, t: float) -> float:
    """e^(c (t0 - t)) phi0 + sup_tau int_tau^(tau+1) l / (1 - e^-c)."""
    if not c > 0:
        raise InvalidArgument(f"c must be positive, got {c}")
    if t < t0:
        raise InvalidArgument(f"need t >= t0, got t={t}, t0={t0}")
    if phi0 < 0:
        raise InvalidArgument("phi0 must be nonnegative")
    window = window_sup(l_series, t0)
    tail = window / -math.expm1(-c) if window > 0 else 0.0
    return math.exp(c * (t0 - t)) * phi0 + tail
