from __future__ import annotations

import hashlib
import math
from typing import Any, Literal

from pydantic import BaseModel, ConfigDict, Field, model_validator


NetworkKind = Literal["N1", "N2", "N3"]


class RunConfig(BaseModel):
    """Fully resolved configuration shared by every subcommand."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    k: float = Field(1.5, gt=0)
    radius: float = Field(4.0, gt=0)
    n_obs: int = Field(40, ge=1)
    n_quad: int = Field(10, ge=2)
    n_singular: int = Field(5, ge=1)
    a_max: float = Field(1.0, gt=0)
    seed: int = Field(0, ge=0)
    threads: int = Field(0, ge=0)

    @model_validator(mode="after")
    def _check_sizes(self) -> "RunConfig":
        if self.n_singular > min(self.n_obs, self.n_quad):
            raise ValueError(f"n_singular={self.n_singular} exceeds min(n_obs, n_quad)={min(self.n_obs, self.n_quad)}")
        return self

    def echo_items(self) -> list[tuple[str, Any]]:
        return list(self.model_dump().items())

    def echo_lines(self, prefix: str = "") -> list[str]:
        return [f"{prefix}{key}={value}" for key, value in self.echo_items()]

    def digest(self) -> bytes:
        text = "\n".join(self.echo_lines()).encode("utf-8")
        return hashlib.blake2b(text, digest_size=16).digest()

    def sample_config(self) -> "SampleConfig":
        return SampleConfig(
            a_max=self.a_max,
            n_singular=self.n_singular,
            n_obs=self.n_obs,
            n_quad=self.n_quad,
            k=self.k,
            radius=self.radius,
            seed=self.seed,
        )


class SampleConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    theta_range: tuple[float, float] = (-math.pi / 2, math.pi / 2)
    a_max: float = Field(1.0, gt=0)
    o_range: tuple[float, float] = (-1.0, 1.0)
    l_range: tuple[float, float] = (1.0, 3.0)
    n_singular: int = Field(5, ge=1)
    n_obs: int = Field(40, ge=1)
    n_quad: int = Field(10, ge=2)
    k: float = Field(1.5, gt=0)
    radius: float = Field(4.0, gt=0)
    seed: int = Field(0, ge=0)

    @model_validator(mode="after")
    def _check_ranges(self) -> "SampleConfig":
        lo, hi = self.theta_range
        if not (-math.pi / 2 <= lo < hi <= math.pi / 2):
            raise ValueError("theta_range must lie in [-pi/2, pi/2)")
        lo, hi = self.o_range
        if not (-1.0 <= lo <= hi <= 1.0):
            raise ValueError("o_range must lie in [-1, 1]")
        lo, hi = self.l_range
        if not (1.0 <= lo <= hi <= 3.0):
            raise ValueError("l_range must lie in [1, 3]")
        if self.n_singular > min(self.n_obs, self.n_quad):
            raise ValueError("n_singular exceeds the matrix dimensions")
        return self


class TrainConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    learning_rate: float = Field(1e-3, gt=0)
    batch_size: int = Field(256, ge=1)
    epochs: int = Field(200, ge=1)
    seed: int = Field(0, ge=0)
    validation_fraction: float = Field(0.05, ge=0, lt=1)
    patience: int = Field(10, ge=1)
    beta1: float = Field(0.9, ge=0, lt=1)
    beta2: float = Field(0.999, ge=0, lt=1)
    eps: float = Field(1e-8, gt=0)


class NoiseSpec(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    amplitude: float = Field(0.2, ge=0)
    distribution: Literal["uniform"] = "uniform"


class StabilityReport(BaseModel):
    family: str
    n: int
    sample_count: int
    seed: int
    metric: str
    min_ratio: float = Field(ge=0)
    argmin_index: int
    argmin: dict[str, Any] = Field(default_factory=dict)
    min_u2_margin: float | None = None
    u2_points: int = 0
    u2_n: int | None = None
    u2_argmin: dict[str, Any] = Field(default_factory=dict)
    ratios: list[float] = Field(default_factory=list, exclude=True)
