from __future__ import annotations

from abc import ABC, abstractmethod
from typing import Any

import numpy as np

FD_STEP = 1e-6


class OperatorFamily(ABC):
    """A matrix-valued map m -> A_m over a box of parameters."""

    name: str
    metric_name: str = "euclidean"
    has_derivative: bool = False

    @property
    @abstractmethod
    def bounds(self) -> np.ndarray:
        """(dim, 2) array of [low, high] per parameter."""
        raise NotImplementedError

    @property
    def dim(self) -> int:
        return int(self.bounds.shape[0])

    @abstractmethod
    def matrix(self, m: Any) -> np.ndarray:
        raise NotImplementedError

    def derivative(self, m: Any, q: Any) -> np.ndarray:
        """Directional derivative dA/dq; central differences unless overridden."""
        m = np.asarray(m, float)
        q = np.asarray(q, float)
        return (self.matrix(m + FD_STEP * q) - self.matrix(m - FD_STEP * q)) / (2.0 * FD_STEP)

    def metric(self, m: Any, m2: Any) -> float:
        return float(np.linalg.norm(np.asarray(m, float) - np.asarray(m2, float)))

    def sample_parameter(self, rng: np.random.Generator) -> np.ndarray:
        b = self.bounds
        return rng.uniform(b[:, 0], b[:, 1])

    def parameter_grid(self, per_axis: int) -> list[np.ndarray]:
        axes = [np.linspace(lo, hi, per_axis) for lo, hi in self.bounds]
        mesh = np.meshgrid(*axes, indexing="ij")
        return [np.array(p) for p in zip(*(g.ravel() for g in mesh))]

    def describe(self) -> dict[str, Any]:
        return {
            "family": self.name,
            "metric": self.metric_name,
            "bounds": self.bounds.tolist(),
            "analytic_derivative": self.has_derivative,
        }
