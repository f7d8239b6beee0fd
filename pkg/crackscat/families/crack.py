from __future__ import annotations

import math
from typing import Any

import numpy as np

from crackscat import forward
from crackscat.families.base import OperatorFamily
from crackscat.families.registry import register_family
from crackscat.models.schemas import RunConfig
from crackscat.spectral import param_metric


class CrackFamily(OperatorFamily):
    """m = (theta, a) -> A_{m,app} for a fixed support interval, without the constant quadrature scale."""

    name = "crack"
    metric_name = "delta"
    has_derivative = True

    def __init__(self, config: RunConfig | None = None, support: forward.SupportInterval | None = None):
        self.config = config or RunConfig()
        self.support = support or forward.SupportInterval(0.0, 2.0)
        self.grid = forward.QuadratureGrid(self.config.n_quad, "trapezoid")
        self.obs = forward.ObservationSet(self.config.radius, self.config.n_obs)

    @property
    def bounds(self) -> np.ndarray:
        a_max = self.config.a_max
        return np.array([[-math.pi / 2, math.pi / 2], [-a_max, a_max]])

    def _geom(self, m: Any) -> forward.CrackGeometry:
        theta, a = np.asarray(m, float)
        return forward.CrackGeometry(float(theta), float(a))

    def matrix(self, m: Any) -> np.ndarray:
        A = forward.assemble_forward_matrix(
            self._geom(m), self.support, self.grid, self.obs, include_scale=False, k=self.config.k
        )
        return A.entries

    def derivative(self, m: Any, q: Any) -> np.ndarray:
        d_theta, d_a = forward.derivative_matrices(
            self._geom(m), self.support, self.grid, self.obs, include_scale=False, k=self.config.k
        )
        q1, q2 = np.asarray(q, float)
        return q1 * d_theta.entries + q2 * d_a.entries

    def metric(self, m: Any, m2: Any) -> float:
        return param_metric(m, m2)

    def parameter_grid(self, per_axis: int) -> list[np.ndarray]:
        # theta is half-open, so sample cell midpoints
        thetas = -math.pi / 2 + (np.arange(per_axis) + 0.5) * math.pi / per_axis
        amps = np.linspace(-self.config.a_max, self.config.a_max, per_axis)
        return [np.array([t, a]) for t in thetas for a in amps]


register_family("crack", lambda config: CrackFamily(config))
