"""Backward-Euler step energy and its gradient in the face inner product.

E(h) = |h - h_prev|^2 / (2 dt) + sum_c V P(|curl h|_c) - <f, h> - <g, h>_boundary

P is the potential density of the radial law (power law, penalized, plus the
optional perturbation). dt = inf drops the mass term and gives the stationary
functional J.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from src.constitutive.params import ConstitutiveParams
from src.constitutive.radial import RadialLaw
from src.errors import InvalidArgument
from src.evolution.data import StepData
from src.mesh.boundary import boundary_load
from src.mesh.grid import EdgeField, FaceField
from src.mesh.operators import (
    curl,
    curl_adjoint,
    edge_average_matrix,
    face_weights,
    magnitude,
)

_ROUNDOFF = 8.0 * np.finfo(float).eps


def edge_flux(law: RadialLaw, w: EdgeField, m: np.ndarray) -> EdgeField:
    """a(curl h) on edges: cell factors sigma averaged back to each edge."""
    average = edge_average_matrix(w.grid)
    counts = np.asarray(average.sum(axis=0)).ravel()
    sigma = law.factor(m)
    return EdgeField(w.grid, (average.T @ sigma) / counts * w.data)


@dataclass(frozen=True, eq=False)
class StepProblem:
    h_prev: FaceField
    dt: float
    f: FaceField
    load: FaceField  # face representative of the boundary source
    law: RadialLaw

    @classmethod
    def build(
        cls,
        h_prev: FaceField,
        dt: float,
        data: StepData,
        params: ConstitutiveParams,
        shift: np.ndarray | None = None,
    ) -> StepProblem:
        if not (dt > 0):
            raise InvalidArgument(f"dt must be positive, got {dt}")
        grid = h_prev.grid
        if data.f.grid != grid or data.g.grid != grid:
            raise InvalidArgument("step data and h_prev live on different grids")
        law = RadialLaw.from_params(params, grid, data.psi, shift)
        return cls(h_prev, float(dt), data.f, boundary_load(data.g), law)

    @property
    def stationary(self) -> bool:
        return math.isinf(self.dt)

    @cached_property
    def source(self) -> FaceField:
        """Linear part of the gradient: f + boundary load (+ h_prev / dt)."""
        total = self.f + self.load
        if not self.stationary:
            total = total + self.h_prev / self.dt
        return total

    def evaluate(self, h: FaceField) -> tuple[float, FaceField, float]:
        """Energy, raw gradient and a roundoff allowance for comparing energies."""
        weights = face_weights(h.grid)
        w = curl(h)
        m = magnitude(w)
        densities = self.law.potential(m)
        internal = float(h.grid.cell_volume * np.sum(densities))
        linear = float(np.dot(weights * (self.f.data + self.load.data), h.data))

        gradient = curl_adjoint(edge_flux(self.law, w, m)) - self.f - self.load
        mass = 0.0
        if not self.stationary:
            delta = h.data - self.h_prev.data
            mass = float(np.dot(weights * delta, delta)) / (2.0 * self.dt)
            gradient = gradient + FaceField(h.grid, delta / self.dt)

        energy = mass + internal - linear
        slack = _ROUNDOFF * (abs(mass) + abs(internal) + abs(linear))
        return energy, gradient, slack

    def energy(self, h: FaceField) -> float:
        return self.evaluate(h)[0]

    def gradient(self, h: FaceField) -> FaceField:
        return self.evaluate(h)[1]

    def internal_energy(self, h: FaceField) -> float:
        """The curl potential alone, sum_c V P(|curl h|_c)."""
        return float(h.grid.cell_volume * np.sum(self.law.potential(magnitude(curl(h)))))


def step_energy(
    h: FaceField, h_prev: FaceField, dt: float, data: StepData, params: ConstitutiveParams
) -> float:
    """The convex backward-Euler potential of one step (dt = inf gives J)."""
    return StepProblem.build(h_prev, dt, data, params).energy(h)


def step_gradient(
    h: FaceField, h_prev: FaceField, dt: float, data: StepData, params: ConstitutiveParams
) -> FaceField:
    """Gradient of step_energy in the face inner product (not yet projected)."""
    return StepProblem.build(h_prev, dt, data, params).gradient(h)
