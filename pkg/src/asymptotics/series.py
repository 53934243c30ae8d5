"""Distance to the stationary state and the data and operator gaps along a trajectory."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from src.constitutive.radial import RadialLaw
from src.errors import InvalidArgument
from src.evolution.stepper import Trajectory
from src.mesh.grid import CellField, FaceField, GridSpec, SurfaceField
from src.mesh.operators import curl, l2_norm, location_weights, lp_norm, magnitude, weighted_lp
from src.mesh.poincare import conjugate, data_exponents

logger = logging.getLogger(__name__)


@dataclass
class DecaySeries:
    grid: GridSpec
    p: float
    times: np.ndarray
    phi: np.ndarray
    xi: np.ndarray
    zeta: np.ndarray
    s_exponent: float  # norm on f - f_inf: 2 below p = 2, q' from p = 2 on
    r_exponent: float
    gap_power: float  # p' ^ 2
    h_inf_curl_norm: float

    def __post_init__(self) -> None:
        n = len(self.times)
        if not (len(self.phi) == len(self.xi) == len(self.zeta) == n):
            raise InvalidArgument("decay series lengths differ")
        if np.any(self.phi < 0):
            raise InvalidArgument("phi must be nonnegative")

    @property
    def max_step(self) -> float:
        return float(np.max(np.diff(self.times), initial=0.0))

    def l_series(self, coefficient: float) -> tuple[np.ndarray, np.ndarray]:
        return self.times, coefficient * (self.xi + self.zeta)


def gap_exponents(p: float) -> tuple[float, float, float]:
    """(s, r', p' ^ 2): the norms and power of the data gap for exponent p."""
    q, r = data_exponents(p)
    s = 2.0 if p < 2 else conjugate(q)
    return s, conjugate(r), min(p / (p - 1.0), 2.0)


def operator_gap(
    law: RadialLaw, law_inf: RadialLaw, h_inf: FaceField, p_conjugate: float
) -> float:
    """||a_t(curl h_inf) - a_inf(curl h_inf)||_{p'}^{p'} on cells."""
    m = magnitude(curl(h_inf))
    difference = np.abs(law.factor(m) - law_inf.factor(m)) * m
    return weighted_lp(difference, location_weights(h_inf), p_conjugate) ** p_conjugate


def track_decay(
    trajectory: Trajectory,
    h_inf: FaceField,
    f_inf: FaceField | None = None,
    g_inf: SurfaceField | None = None,
    psi_inf: CellField | None = None,
) -> DecaySeries:
    """phi_k = |h_k - h_inf|^2 plus xi_k and zeta_k against the limit data.

    The limit data default to the last node's data; zeta is nonzero only for a
    penalized law whose Psi(t) differs from psi_inf.
    """
    data, params = trajectory.data, trajectory.params
    grid = trajectory.grid
    if h_inf.grid != grid:
        raise InvalidArgument("h_inf lives on a different grid")
    f_inf = data.f[-1] if f_inf is None else f_inf
    g_inf = data.g[-1] if g_inf is None else g_inf
    if f_inf.grid != grid or g_inf.grid != grid:
        raise InvalidArgument("limit data live on a different grid")

    p = params.p
    s, r_conj, power = gap_exponents(p)
    phi = np.array([l2_norm(h - h_inf) ** 2 for h in trajectory.states])
    xi = np.array(
        [
            lp_norm(f - f_inf, s) ** power + lp_norm(g - g_inf, r_conj) ** power
            for f, g in zip(data.f, data.g)
        ]
    )

    zeta = np.zeros(len(phi))
    if params.penalty_eps is not None and data.psi is not None:
        limit = data.psi[-1] if psi_inf is None else psi_inf
        law_inf = RadialLaw.from_params(params, grid, limit)
        for k, psi in enumerate(data.psi):
            law = RadialLaw.from_params(params, grid, psi)
            zeta[k] = operator_gap(law, law_inf, h_inf, params.p_conjugate)

    logger.debug("Decay series: phi0 %.4g, phi_final %.4g", phi[0], phi[-1])
    return DecaySeries(
        grid=grid,
        p=p,
        times=np.asarray(trajectory.times, dtype=float),
        phi=phi,
        xi=xi,
        zeta=zeta,
        s_exponent=s,
        r_exponent=r_conj,
        gap_power=power,
        h_inf_curl_norm=lp_norm(curl(h_inf), p),
    )
