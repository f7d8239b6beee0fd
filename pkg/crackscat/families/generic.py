from __future__ import annotations

from typing import Any

import numpy as np

from crackscat.families.base import OperatorFamily
from crackscat.families.registry import register_family
from crackscat.spectral import generic_example1, generic_example2

_BOX = np.array([[1.0, 2.0], [1.0, 2.0]])


class Example1Family(OperatorFamily):
    name = "example1"
    has_derivative = True

    def __init__(self, n: int = 4):
        self.n = int(n)

    @property
    def bounds(self) -> np.ndarray:
        return _BOX

    def matrix(self, m: Any) -> np.ndarray:
        return generic_example1(m, self.n)

    def derivative(self, m: Any, q: Any) -> np.ndarray:
        _, m2 = np.asarray(m, float)
        q1, q2 = np.asarray(q, float)
        n = self.n
        d = np.zeros((3 * n, n))
        j = np.arange(n)
        d[j, j] = q1
        d[j + n, j] = q2
        d[j + 2 * n, j] = 2.0 * m2 * q2
        return d


class Example2Family(OperatorFamily):
    name = "example2"
    has_derivative = True

    def __init__(self, n_max: int = 50):
        self.n_max = int(n_max)

    @property
    def bounds(self) -> np.ndarray:
        return _BOX

    def matrix(self, m: Any) -> np.ndarray:
        return generic_example2(m, self.n_max)

    def derivative(self, m: Any, q: Any) -> np.ndarray:
        _, m2 = np.asarray(m, float)
        q1, q2 = np.asarray(q, float)
        n = np.arange(1, self.n_max + 1)
        d = np.zeros((3 * self.n_max + 2, self.n_max))
        cols = n - 1
        d[3 * n - 1, cols] = q1 / n
        d[3 * n, cols] = q2 / n
        d[3 * n + 1, cols] = 2.0 * m2 * q2 / n
        return d


class BrokenFamily(OperatorFamily):
    """A_m = m1 * M for a fixed M: the derivative is parallel to A_m, so U2 fails."""

    name = "broken"
    has_derivative = True

    def __init__(self, rows: int = 6, cols: int = 3, seed: int = 0):
        rng = np.random.default_rng(seed)
        self.base = rng.standard_normal((rows, cols)) + 1j * rng.standard_normal((rows, cols))

    @property
    def bounds(self) -> np.ndarray:
        return _BOX

    def matrix(self, m: Any) -> np.ndarray:
        return float(np.asarray(m, float)[0]) * self.base

    def derivative(self, m: Any, q: Any) -> np.ndarray:
        return float(np.asarray(q, float)[0]) * self.base


register_family("example1", lambda config: Example1Family())
register_family("example2", lambda config: Example2Family())
register_family("broken", lambda config: BrokenFamily(seed=config.seed))
