"""Field-level radial laws a(u) = sigma(|u|) u evaluated on co-located cell magnitudes."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from src.constitutive.laws import penalty_k, penalty_primitive, safe_power
from src.constitutive.params import ConstitutiveParams, PerturbationSpec
from src.errors import InvalidArgument
from src.mesh.grid import CellField, GridSpec


@dataclass(frozen=True, eq=False)
class RadialLaw:
    """Potential density P(m) per cell and its radial factor sigma = P'(m)/m.

    ``level`` is Psi^p per cell, lowered by a multiplier shift when the
    constrained solver refines its estimate.
    """

    p: float
    nu: np.ndarray
    penalty_eps: float | None = None
    level: np.ndarray | None = None
    perturbation: PerturbationSpec = PerturbationSpec()

    @classmethod
    def from_params(
        cls,
        params: ConstitutiveParams,
        grid: GridSpec,
        psi: CellField | None = None,
        shift: np.ndarray | None = None,
    ) -> RadialLaw:
        level = None
        if params.penalty_eps is not None:
            if psi is None:
                raise InvalidArgument("a penalized law needs the constraint profile Psi")
            if psi.grid != grid:
                raise InvalidArgument("Psi lives on a different grid")
            level = safe_power(psi.data, params.p)
            if shift is not None:
                level = level - shift
        return cls(
            p=params.p,
            nu=params.nu_cells(grid),
            penalty_eps=params.penalty_eps,
            level=level,
            perturbation=params.perturbation,
        )

    def penalty_argument(self, m: np.ndarray) -> np.ndarray:
        if self.level is None:
            raise InvalidArgument("penalty argument requested for an unpenalized law")
        return safe_power(m, self.p) - self.level

    def potential(self, m: np.ndarray) -> np.ndarray:
        if self.penalty_eps is None:
            density = self.nu / self.p * safe_power(m, self.p)
        else:
            s = self.penalty_argument(m)
            density = self.nu / self.p * (penalty_primitive(s, self.penalty_eps) + self.level)
        if self.perturbation.active:
            density = density + self.perturbation.scale * (m - np.log1p(m))
        return density

    def factor(self, m: np.ndarray) -> np.ndarray:
        sigma = self.nu * safe_power(m, self.p - 2.0)
        if self.penalty_eps is not None:
            sigma = sigma * penalty_k(self.penalty_argument(m), self.penalty_eps)
        if self.perturbation.active:
            sigma = sigma + self.perturbation.scale / (1.0 + m)
        return sigma

    def penalty_factor(self, m: np.ndarray) -> np.ndarray:
        """k_eps per cell (ones for an unpenalized law)."""
        if self.penalty_eps is None:
            return np.ones_like(m)
        return np.asarray(penalty_k(self.penalty_argument(m), self.penalty_eps))
