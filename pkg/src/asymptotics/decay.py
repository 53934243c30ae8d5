"""Decay verdicts: phi(t) against the bound of the regime selected by p.

Constants are measured on the grid: the sharp monotonicity constant of the
power law with a_* = nu_min, the discrete Poincare constant C (L2 over curl
L^p), and, when the data gap is nonzero, the Sobolev and trace constants.
Bounds use discrete-consistent rates so backward-Euler sequences that obey
the discrete inequality stay below the continuous formulas.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np
from pydantic import BaseModel

from src.asymptotics.bounds import haraux_bound, simon_bound
from src.asymptotics.series import DecaySeries
from src.constitutive.laws import sharp_monotonicity_constant
from src.constitutive.params import ConstitutiveParams
from src.errors import InvalidArgument
from src.evolution.ledger import EnergyReport
from src.mesh.poincare import data_exponents, estimate_poincare, estimate_trace_constant

logger = logging.getLogger(__name__)

SINGULAR_FLOOR = 1.2
T0_RULE = "nearest node at or below t/2"


class Regime(str, Enum):
    DEGENERATE = "p>2"
    LINEAR = "p=2"
    SINGULAR = "6/5<=p<2"


def regime_for(p: float) -> Regime:
    if math.isclose(p, 2.0, rel_tol=0.0, abs_tol=1e-12):
        return Regime.LINEAR
    if p > 2:
        return Regime.DEGENERATE
    if p >= SINGULAR_FLOOR - 1e-12:
        return Regime.SINGULAR
    raise InvalidArgument(f"no decay result below p = 6/5, got p = {p}")


@dataclass(frozen=True)
class RegimeConfig:
    regime: Regime | None = None
    floor_rel: float = 1e-12
    final_tol: float = 1e-4
    poincare: float | None = None  # overrides the measured C
    sobolev: float | None = None  # overrides C_q
    trace: float | None = None  # overrides C_r
    max_iterations: int = 2000

    def __post_init__(self) -> None:
        if self.regime is not None:
            object.__setattr__(self, "regime", Regime(self.regime))
        if self.floor_rel < 0 or not self.final_tol > 0:
            raise InvalidArgument("floor_rel must be >= 0 and final_tol > 0")


class DecayVerdict(BaseModel):
    regime: Regime
    t0_rule: str
    times: list[float]
    phi: list[float]
    bound: list[float | None]
    first_checked_index: int | None
    violation_count: int
    max_relative_violation: float
    floor: float
    parameters: dict[str, float]
    final_ratio: float | None
    decayed: bool
    refused: bool = False
    reason: str | None = None

    @property
    def passed(self) -> bool:
        return not self.refused and self.violation_count == 0


def _exponential_rate(c: float, dt: float) -> float:
    """Rate of (1 + c dt)^(-1) per step, the backward-Euler analog of e^(-c dt)."""
    return math.log1p(c * dt) / dt if dt > 0 else c


def _data_constants(series: DecaySeries, p: float, config: RegimeConfig) -> tuple[float, float]:
    q, r = data_exponents(p)
    grid = series.grid
    c_q = config.sobolev
    if c_q is None:
        c_q = estimate_poincare(grid, p, q, max_iterations=config.max_iterations).value
    c_r = config.trace
    if c_r is None:
        c_r = estimate_trace_constant(grid, p, r, max_iterations=config.max_iterations).value
    return c_q, c_r


def _poincare_l2(series: DecaySeries, p: float, config: RegimeConfig) -> tuple[float, float]:
    """(C used in the bound, ascent estimate of C_2(p)) for the L2-over-curl-L^p ratio."""
    if config.poincare is not None:
        return config.poincare, config.poincare
    grid = series.grid
    c22 = estimate_poincare(grid, 2.0, 2.0).value
    if p >= 2:
        # Holder on the curl: |curl w|_2 <= |Omega|^(1/2 - 1/p) |curl w|_p.
        rigorous = c22 * grid.volume ** (0.5 - 1.0 / p)
        if math.isclose(p, 2.0):
            return rigorous, c22
        ascent = estimate_poincare(grid, p, 2.0, max_iterations=config.max_iterations).value
        return rigorous, ascent
    ascent = estimate_poincare(grid, p, 2.0, max_iterations=config.max_iterations).value
    return ascent, ascent


def _count(
    phi: np.ndarray, bound: Sequence[float | None], floor: float, start: int | None
) -> tuple[int, float]:
    if start is None:
        return 0, 0.0
    count, worst = 0, 0.0
    for k in range(start, len(phi)):
        b = bound[k]
        if b is None:
            continue
        excess = phi[k] - b
        if excess > floor:
            count += 1
            worst = max(worst, excess / max(b, floor, 1e-300))
    return count, worst


def check_decay(
    series: DecaySeries,
    params: ConstitutiveParams,
    config: RegimeConfig | None = None,
    ledger: EnergyReport | None = None,
) -> DecayVerdict:
    """Evaluate the regime's bound at every node and count violations from t_1 on.

    The singular regime needs the uniform curl bound, so it refuses a verdict
    unless ``ledger`` confirmed the dissipation estimate.
    """
    config = config or RegimeConfig()
    p = params.p
    if not math.isclose(series.p, p):
        raise InvalidArgument(f"series was tracked at p = {series.p}, params have p = {p}")
    regime = regime_for(p)
    if config.regime is not None and config.regime is not regime:
        raise InvalidArgument(f"regime {config.regime.value} does not match p = {p}")

    times, phi = series.times, series.phi
    phi0 = float(phi[0])
    floor = config.floor_rel * phi0
    gap = series.xi + series.zeta
    forced = bool(np.any(gap > 0))
    dt = series.max_step
    pc = p / (p - 1.0)
    final_ratio = float(phi[-1] / phi0) if phi0 > 0 else None
    decayed = phi0 == 0 or float(phi[-1]) <= config.final_tol * phi0

    def verdict(bound, start, parameters, refused=False, reason=None) -> DecayVerdict:
        count, worst = _count(phi, bound, floor, start)
        result = DecayVerdict(
            regime=regime,
            t0_rule=T0_RULE,
            times=[float(t) for t in times],
            phi=[float(v) for v in phi],
            bound=bound,
            first_checked_index=start,
            violation_count=count,
            max_relative_violation=worst,
            floor=floor,
            parameters=parameters,
            final_ratio=final_ratio,
            decayed=decayed,
            refused=refused,
            reason=reason,
        )
        logger.info(
            "Decay %s: %d violations, phi_final/phi0 = %s%s",
            regime.value, count, final_ratio, " (refused)" if refused else "",
        )
        return result

    empty: list[float | None] = [None] * len(times)
    if regime is Regime.SINGULAR and (ledger is None or not ledger.dissipation_confirmed):
        reason = "energy ledger did not confirm the uniform curl bound"
        return verdict(empty, None, {}, refused=True, reason=reason)

    poincare, ascent = _poincare_l2(series, p, config)
    c_q = c_r = 1.0
    if forced:
        c_q, c_r = _data_constants(series, p, config)
    parameters = {"poincare": poincare, "poincare_ascent": ascent, "dt_max": dt}
    if forced:
        parameters.update(sobolev=c_q, trace=c_r)

    if regime is Regime.SINGULAR:
        assert ledger is not None
        c4 = (ledger.curl_sup + series.h_inf_curl_norm) ** (2.0 - p)
        mu = sharp_monotonicity_constant(p, params.nu_min) / max(c4, 1e-300)
        c = (1.0 if forced else 2.0) * mu / poincare**2
        l_coef = 2.0 * max(poincare, c_r, 1.0) ** 2 / mu if forced else 0.0
        parameters.update(c4=c4, mu=mu)
    else:
        m = sharp_monotonicity_constant(p, params.nu_min)
        c = (1.0 if forced else 2.0) * m / poincare**p
        k = (1.0 / pc) * (p * m / 2.0) ** (-pc / p)
        l_coef = 2.0 * k * 2.0 ** (pc - 1.0) * max(c_q, c_r, 1.0) ** pc if forced else 0.0
        parameters.update(monotonicity=m)
    parameters.update(c=c, l_coefficient=l_coef)
    l_series = series.l_series(l_coef)

    bound: list[float | None] = list(empty)
    if regime is Regime.DEGENERATE:
        beta = 0.5 * (p - 2.0)
        phi_max = float(np.max(phi))
        c_eff = c * (1.0 + dt * c * phi_max**beta) ** (-(beta + 1.0))
        parameters.update(c_effective=c_eff)
        for k in range(1, len(times)):
            half = times[0] + 0.5 * (times[k] - times[0])
            j0 = int(np.searchsorted(times, half, side="right")) - 1
            if times[j0] >= times[k]:
                continue
            bound[k] = simon_bound(c_eff, l_series, p, float(times[j0]), float(times[k]))
    else:
        c_eff = _exponential_rate(c, dt)
        parameters.update(c_effective=c_eff)
        for k in range(len(times)):
            bound[k] = haraux_bound(phi0, c_eff, l_series, float(times[0]), float(times[k]))

    start = next(
        (
            k
            for k in range(1, len(times))
            if bound[k] is not None and math.isfinite(bound[k]) and bound[k] < phi0
        ),
        None,
    )
    return verdict(bound, start, parameters)


class ConstrainedDecayVerdict(BaseModel):
    gamma: float
    gamma_threshold: float
    hypothesis_holds: bool
    final_ratio: float | None
    decayed: bool

    @property
    def passed(self) -> bool:
        return self.hypothesis_holds and self.decayed


def fit_rate(times: Sequence[float], gaps: Sequence[float]) -> float:
    """gamma of a least-squares fit gap ~ D t^(-gamma) over t > 0 with gap > 0."""
    t = np.asarray(times, dtype=float)
    g = np.asarray(gaps, dtype=float)
    keep = (t > 0) & (g > 0)
    if not np.any(g[t > 0] > 0):
        return math.inf
    if np.count_nonzero(keep) < 2:
        raise InvalidArgument("need at least two positive gaps to fit a rate")
    slope, _ = np.polyfit(np.log(t[keep]), np.log(g[keep]), 1)
    return float(-slope)


def check_constrained_decay(
    series: DecaySeries, psi_gap: Sequence[float], p: float, tol: float = 1e-4
) -> ConstrainedDecayVerdict:
    """Check the decay hypothesis on ||Psi(t) - Psi_inf||_inf and the decay of phi.

    Needs gamma > 3/2 for p > 2 and gamma > 1/2 for 6/5 <= p <= 2.
    """
    if len(psi_gap) != len(series.times):
        raise InvalidArgument("psi gap series has the wrong length")
    if p < SINGULAR_FLOOR - 1e-12:
        raise InvalidArgument(f"no constrained decay result below p = 6/5, got p = {p}")
    threshold = 1.5 if p > 2 else 0.5
    gamma = fit_rate(series.times, psi_gap)
    phi0, phi_final = float(series.phi[0]), float(series.phi[-1])
    return ConstrainedDecayVerdict(
        gamma=gamma,
        gamma_threshold=threshold,
        hypothesis_holds=gamma > threshold,
        final_ratio=phi_final / phi0 if phi0 > 0 else None,
        decayed=phi0 == 0 or phi_final <= tol * phi0,
    )
