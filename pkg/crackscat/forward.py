"""Straight crack geometry, the discretized far-circle operator and the Dirichlet BIE solver.

The crack is y(t) = tau*t + a*n with t in [M1, M2], parameterized on v in [-pi/2, pi/2] by
t = o + (l/2) sin v. Densities are stored desingularized: psi(t) = psi~(v) / cos v, so
that  int psi(t) dt = (l/2) int psi~(v) dv.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Any, Callable, Literal

import numpy as np

from crackscat.core.config import Defaults
from crackscat.core.errors import DimensionError, DomainError, SingularSystemError
from crackscat.specfun import EULER_GAMMA, bessel_j0, hankel1_0, hankel1_1

logger = logging.getLogger(__name__)

DEFAULT_K = Defaults.K.def_value
LogRule = Literal["product", "panel"]

MASK_DISTANCE = 1e-3
ON_CRACK_DISTANCE = 1e-6
RESIDUAL_WARN = 1e-2
_MAX_REFINE_LEVEL = 6  # 64x
_ROW_CHUNK = 2048


@dataclass(frozen=True)
class CrackGeometry:
    theta: float
    a: float

    @property
    def tau(self) -> np.ndarray:
        return np.array([math.cos(self.theta), math.sin(self.theta)])

    @property
    def normal(self) -> np.ndarray:
        return np.array([-math.sin(self.theta), math.cos(self.theta)])

    def is_admissible(self, a_max: float = 1.0) -> bool:
        return -math.pi / 2 <= self.theta < math.pi / 2 and abs(self.a) <= a_max

    def validate(self, a_max: float = 1.0) -> "CrackGeometry":
        if not self.is_admissible(a_max):
            raise DomainError(f"Crack parameters out of range: theta={self.theta}, a={self.a}, a_max={a_max}")
        return self

    def flipped(self) -> "CrackGeometry":
        """Same segment described with (theta + pi, -a); pair with SupportInterval.reversed()."""
        return CrackGeometry(self.theta + math.pi, -self.a)

    def rotated(self, angle: float) -> "CrackGeometry":
        return CrackGeometry(self.theta + angle, self.a)


@dataclass(frozen=True)
class SupportInterval:
    o: float
    l: float

    @property
    def m1(self) -> float:
        return self.o - 0.5 * self.l

    @property
    def m2(self) -> float:
        return self.o + 0.5 * self.l

    def t_of(self, v: Any) -> Any:
        return self.o + 0.5 * self.l * np.sin(v)

    def reversed(self) -> "SupportInterval":
        return SupportInterval(-self.o, self.l)

    def validate(self) -> "SupportInterval":
        if not (-1.0 <= self.o <= 1.0 and 1.0 <= self.l <= 3.0):
            raise DomainError(f"Support out of range: o={self.o}, l={self.l}")
        return self


@dataclass(frozen=True)
class ObservationSet:
    radius: float = 4.0
    count: int = 40
    rotation: float = 0.0

    @property
    def angles(self) -> np.ndarray:
        i = np.arange(1, self.count + 1)
        return self.rotation + 2.0 * math.pi * i / self.count

    @property
    def points(self) -> np.ndarray:
        ang = self.angles
        return self.radius * np.stack([np.cos(ang), np.sin(ang)], axis=-1)


@dataclass(frozen=True)
class QuadratureGrid:
    """Nodes in v on [-pi/2, pi/2].

    trapezoid: v_j = -pi/2 + j*pi/(N-1), end weights 1/2.
    midpoint:  v_j = -pi/2 + (j + 1/2)*pi/N, unit weights; keeps nodes off the tips.
    """

    count: int = 10
    rule: Literal["trapezoid", "midpoint"] = "trapezoid"

    def __post_init__(self) -> None:
        if self.rule not in ("trapezoid", "midpoint"):
            raise DomainError(f"Unknown quadrature rule: {self.rule}")
        if self.count < (2 if self.rule == "trapezoid" else 1):
            raise DomainError(f"Too few quadrature nodes: {self.count}")

    @property
    def step(self) -> float:
        if self.rule == "trapezoid":
            return math.pi / (self.count - 1)
        return math.pi / self.count

    @property
    def nodes(self) -> np.ndarray:
        j = np.arange(self.count)
        if self.rule == "trapezoid":
            return -0.5 * math.pi + j * self.step
        return -0.5 * math.pi + (j + 0.5) * self.step

    @property
    def weights(self) -> np.ndarray:
        w = np.ones(self.count)
        if self.rule == "trapezoid":
            w[0] = w[-1] = 0.5
        return w


@dataclass(frozen=True, eq=False)
class ForwardMatrix:
    entries: np.ndarray
    geometry: CrackGeometry
    support: SupportInterval
    grid: QuadratureGrid
    observations: ObservationSet
    k: float = DEFAULT_K
    include_scale: bool = True

    @property
    def shape(self) -> tuple[int, int]:
        return self.entries.shape  # type: ignore[return-value]


@dataclass(frozen=True, eq=False)
class DensityVector:
    values: np.ndarray
    grid: QuadratureGrid
    residual: float | None = None
    rank: int | None = None

    def __post_init__(self) -> None:
        if np.shape(self.values) != (self.grid.count,):
            raise DimensionError(f"Density has {np.size(self.values)} values for a {self.grid.count}-node grid")


class Excitation(IntEnum):
    PlaneWave = 1
    NearSource = 2
    FarSource = 3
    Forcing = 4


_SOURCE_RANGES = {
    Excitation.NearSource: (3.0, 3.5),
    Excitation.FarSource: (5.0, 7.0),
}


@dataclass(frozen=True)
class ExcitationParams:
    case: Excitation
    direction: tuple[float, float] | None = None
    source: tuple[float, float] | None = None

    @classmethod
    def plane_wave(cls, angle: float) -> "ExcitationParams":
        return cls(Excitation.PlaneWave, direction=(math.cos(angle), math.sin(angle)))

    @classmethod
    def point_source(cls, source: tuple[float, float], case: int | None = None) -> "ExcitationParams":
        if case is None:
            case = Excitation.NearSource if math.hypot(*source) <= 3.5 else Excitation.FarSource
        return cls(Excitation(case), source=(float(source[0]), float(source[1])))

    @classmethod
    def forcing(cls) -> "ExcitationParams":
        return cls(Excitation.Forcing)

    def validate(self) -> "ExcitationParams":
        if self.case == Excitation.PlaneWave:
            if self.direction is None or abs(math.hypot(*self.direction) - 1.0) > 1e-12:
                raise DomainError("Plane wave needs a unit direction")
        elif self.case in _SOURCE_RANGES:
            if self.source is None:
                raise DomainError(f"Case {int(self.case)} needs a source point")
            lo, hi = _SOURCE_RANGES[self.case]
            r = math.hypot(*self.source)
            if not (lo - 1e-12 <= r <= hi + 1e-12):
                raise DomainError(f"Case {int(self.case)} source radius {r:.4g} outside [{lo}, {hi}]")
        return self

    def rotated(self, angle: float) -> "ExcitationParams":
        c, s = math.cos(angle), math.sin(angle)

        def rot(p: tuple[float, float] | None) -> tuple[float, float] | None:
            if p is None:
                return None
            return (c * p[0] - s * p[1], s * p[0] + c * p[1])

        return ExcitationParams(self.case, rot(self.direction), rot(self.source))


# ---------------------------------------------------------------------------
# kernels
# ---------------------------------------------------------------------------


def green(x: Any, y: Any, k: float = DEFAULT_K) -> Any:
    """Phi(x, y) = (i/4) H0(k|x - y|), broadcasting over leading axes."""
    r = np.linalg.norm(np.asarray(x, float) - np.asarray(y, float), axis=-1)
    return 0.25j * hankel1_0(k * r)


def green_grad_y(x: Any, y: Any, k: float = DEFAULT_K) -> np.ndarray:
    """grad_y Phi(x, y) = (ik/4) H1(k|x - y|) (x - y)/|x - y|, trailing axis of length 2."""
    diff = np.asarray(x, float) - np.asarray(y, float)
    r = np.linalg.norm(diff, axis=-1)
    h1 = np.asarray(hankel1_1(k * r))
    return (0.25j * k * h1 / r)[..., None] * diff


def crack_point(geom: CrackGeometry, support: SupportInterval, v: Any) -> np.ndarray:
    t = np.asarray(support.t_of(v), float)
    return t[..., None] * geom.tau + geom.a * geom.normal


def distance_to_crack(geom: CrackGeometry, support: SupportInterval, points: Any) -> np.ndarray:
    pts = np.asarray(points, float)
    t = np.clip(pts @ geom.tau, support.m1, support.m2)
    nearest = t[..., None] * geom.tau + geom.a * geom.normal
    return np.linalg.norm(pts - nearest, axis=-1)


def min_distance_to_circle(geom: CrackGeometry, support: SupportInterval, obs: ObservationSet) -> float:
    # |y(t)| is convex in t, so the farthest point of the segment is an endpoint
    ends = np.array([support.m1, support.m2])[:, None] * geom.tau + geom.a * geom.normal
    return float(obs.radius - np.linalg.norm(ends, axis=-1).max())


def _scale(support: SupportInterval, grid: QuadratureGrid) -> float:
    return 0.5 * support.l * grid.step


def assemble_forward_matrix(
    geom: CrackGeometry,
    support: SupportInterval,
    grid: QuadratureGrid,
    obs: ObservationSet,
    include_scale: bool = True,
    k: float = DEFAULT_K,
) -> ForwardMatrix:
    y = crack_point(geom, support, grid.nodes)
    x = obs.points
    phi = green(x[:, None, :], y[None, :, :], k)
    entries = phi * grid.weights[None, :]
    if include_scale:
        entries = entries * _scale(support, grid)
    return ForwardMatrix(entries, geom, support, grid, obs, k, include_scale)


def forward_apply(A: ForwardMatrix, psi: DensityVector | np.ndarray) -> np.ndarray:
    if isinstance(psi, DensityVector):
        if psi.grid != A.grid:
            raise DimensionError(f"Density grid {psi.grid} does not match operator grid {A.grid}")
        values = psi.values
    else:
        values = np.asarray(psi)
    if values.shape != (A.shape[1],):
        raise DimensionError(f"Expected a density of length {A.shape[1]}, got shape {values.shape}")
    return A.entries @ values


def derivative_matrices(
    geom: CrackGeometry,
    support: SupportInterval,
    grid: QuadratureGrid,
    obs: ObservationSet,
    include_scale: bool = True,
    k: float = DEFAULT_K,
) -> tuple[ForwardMatrix, ForwardMatrix]:
    """dA/dtheta and dA/da.  dy/dtheta = n*t - a*tau,  dy/da = n."""
    v = grid.nodes
    t = support.t_of(v)
    y = crack_point(geom, support, v)
    grad = green_grad_y(obs.points[:, None, :], y[None, :, :], k)
    dy_dtheta = t[:, None] * geom.normal - geom.a * geom.tau
    w = grid.weights * (_scale(support, grid) if include_scale else 1.0)
    d_theta = np.einsum("ijc,jc->ij", grad, dy_dtheta) * w
    d_a = (grad @ geom.normal) * w
    return (
        ForwardMatrix(d_theta, geom, support, grid, obs, k, include_scale),
        ForwardMatrix(d_a, geom, support, grid, obs, k, include_scale),
    )


def incident_field(params: ExcitationParams, x: Any, k: float = DEFAULT_K) -> Any:
    pts = np.asarray(x, float)
    if params.case == Excitation.PlaneWave:
        if params.direction is None:
            raise DomainError("Plane wave needs a direction")
        val = np.exp(1j * k * (pts @ np.asarray(params.direction, float)))
    elif params.case in (Excitation.NearSource, Excitation.FarSource):
        if params.source is None:
            raise DomainError("Point source needs a source location")
        r = np.linalg.norm(pts - np.asarray(params.source, float), axis=-1)
        if np.any(r == 0.0):
            raise DomainError("Incident field evaluated at the source point")
        val = 0.25j * hankel1_0(k * r)
    else:
        val = np.zeros(pts.shape[:-1], dtype=complex)
    if np.ndim(val) == 0:
        return complex(val)
    return val


# ---------------------------------------------------------------------------
# dense BIE
# ---------------------------------------------------------------------------


def _cosine_basis(grid: QuadratureGrid, modes: int) -> np.ndarray:
    phi = 0.5 * math.pi - grid.nodes
    return np.cos(np.outer(phi, np.arange(modes)))


def _cosine_coefficients(values: np.ndarray, grid: QuadratureGrid) -> np.ndarray:
    n = grid.count
    coef = (2.0 / n) * (_cosine_basis(grid, n).T @ values)
    coef[0] *= 0.5
    return coef


def upsample_density(density: DensityVector, factor: int) -> DensityVector:
    """Spectral interpolation of a midpoint-grid density onto a grid `factor` times finer."""
    if density.grid.rule != "midpoint":
        raise DomainError("Spectral upsampling needs a midpoint grid")
    if factor == 1:
        return density
    fine = QuadratureGrid(density.grid.count * factor, "midpoint")
    coef = _cosine_coefficients(density.values, density.grid)
    values = _cosine_basis(fine, density.grid.count) @ coef
    return DensityVector(values, fine, density.residual, density.rank)


def single_layer_matrix(
    geom: CrackGeometry,
    support: SupportInterval,
    n_dense: int = Defaults.NDense,
    k: float = DEFAULT_K,
    log_rule: LogRule = "panel",
) -> tuple[np.ndarray, QuadratureGrid]:
    """Single-layer operator on Gamma, collocated at the nodes of an n_dense midpoint grid.

    The kernel is split as Phi = L(r) ln|s - s_i| + M with L = -J0(kr)/(2 pi), s = sin v.
    "panel" (default) subtracts the log singularity on the self-panel only;
    "product" integrates the log part exactly against the cosine interpolant of L*psi~.
    """
    grid = QuadratureGrid(n_dense, "midpoint")
    n = grid.count
    h = grid.step
    half = 0.5 * support.l
    s = np.sin(grid.nodes)
    r = np.abs(half * (s[:, None] - s[None, :]))
    off = ~np.eye(n, dtype=bool)
    c0 = 0.25j - (math.log(0.5 * k) + EULER_GAMMA) / (2.0 * math.pi)

    phi = np.empty((n, n), dtype=complex)
    phi[off] = 0.25j * hankel1_0(k * r[off])

    if log_rule == "panel":
        c = half * np.cos(grid.nodes)
        S = h * phi
        diag = -h * (np.log(0.5 * c * h) - 1.0) / (2.0 * math.pi) + h * c0
        S[~off] = diag
        return half * S, grid
    if log_rule != "product":
        raise DomainError(f"Unknown log rule: {log_rule}")

    basis = _cosine_basis(grid, n)
    m = np.arange(1, n)
    R = -(math.pi / n) * (math.log(2.0) + 2.0 * (basis[:, 1:] / m) @ basis[:, 1:].T)
    L = -bessel_j0(k * r) / (2.0 * math.pi)
    logs = np.zeros((n, n))
    logs[off] = np.log(np.abs(s[:, None] - s[None, :])[off])
    M = np.empty((n, n), dtype=complex)
    M[off] = phi[off] - L[off] * logs[off]
    M[~off] = c0 - math.log(half) / (2.0 * math.pi)
    return half * (L * R + h * M), grid


def solve_bie(
    geom: CrackGeometry,
    support: SupportInterval,
    g_on_crack: Callable[[np.ndarray], Any] | np.ndarray,
    n_dense: int = Defaults.NDense,
    trunc_tol: float = Defaults.TruncTol,
    k: float = DEFAULT_K,
    log_rule: LogRule = "panel",
) -> DensityVector:
    """Solve S psi~ = g in the truncated-SVD least-squares sense."""
    if n_dense < 64:
        raise DomainError(f"n_dense must be at least 64, got {n_dense}")
    S, grid = single_layer_matrix(geom, support, n_dense, k, log_rule)
    if callable(g_on_crack):
        g = np.asarray(g_on_crack(crack_point(geom, support, grid.nodes)), dtype=complex)
    else:
        g = np.asarray(g_on_crack, dtype=complex)
    if g.shape != (n_dense,):
        raise DimensionError(f"Boundary data has shape {g.shape}, expected ({n_dense},)")

    U, sigma, Vh = np.linalg.svd(S)
    if sigma[0] == 0.0:
        raise SingularSystemError("Single-layer matrix is identically zero")
    keep = sigma >= trunc_tol * sigma[0]
    coef = (U[:, keep].conj().T @ g) / sigma[keep]
    psi = Vh[keep].conj().T @ coef

    g_norm = float(np.linalg.norm(g))
    residual = float(np.linalg.norm(S @ psi - g)) / g_norm if g_norm > 0 else 0.0
    if residual > RESIDUAL_WARN:
        logger.warning("BIE residual %.3e above %.0e (rank %d/%d)", residual, RESIDUAL_WARN, int(keep.sum()), n_dense)
    return DensityVector(psi, grid, residual=residual, rank=int(keep.sum()))


def _potential(
    geom: CrackGeometry,
    support: SupportInterval,
    density: DensityVector,
    points: np.ndarray,
    k: float,
) -> np.ndarray:
    grid = density.grid
    y = crack_point(geom, support, grid.nodes)
    wv = grid.weights * density.values * _scale(support, grid)
    out = np.empty(len(points), dtype=complex)
    for start in range(0, len(points), _ROW_CHUNK):
        chunk = points[start : start + _ROW_CHUNK]
        out[start : start + len(chunk)] = green(chunk[:, None, :], y[None, :, :], k) @ wv
    return out


def scattered_field(
    geom: CrackGeometry,
    support: SupportInterval,
    density: DensityVector,
    points: Any,
    k: float = DEFAULT_K,
) -> np.ndarray:
    """Single-layer potential of `density` at arbitrary points; nan on Gamma itself."""
    pts = np.asarray(points, float)
    shape = pts.shape[:-1]
    pts = pts.reshape(-1, 2)
    out = np.full(len(pts), np.nan + 0j, dtype=complex)
    d = distance_to_crack(geom, support, pts)

    h_t = _scale(support, density.grid)
    if density.grid.rule == "midpoint":
        near = d < 4.0 * h_t
    else:
        near = np.zeros(len(pts), dtype=bool)
    far = ~near & (d >= ON_CRACK_DISTANCE)
    if far.any():
        out[far] = _potential(geom, support, density, pts[far], k)

    close = near & (d >= ON_CRACK_DISTANCE)
    if close.any():
        # refine until the node spacing along Gamma is at most d/2
        need = np.ceil(np.log2(2.0 * h_t / d[close]))
        levels = np.clip(need, 1, _MAX_REFINE_LEVEL).astype(int)
        idx = np.flatnonzero(close)
        for p in np.unique(levels):
            sel = idx[levels == p]
            fine = upsample_density(density, 2**int(p))
            out[sel] = _potential(geom, support, fine, pts[sel], k)
    return out.reshape(shape)


def density_case4(geom: CrackGeometry, support: SupportInterval, grid: QuadratureGrid) -> DensityVector:
    """psi(t) = y1(t) - i cos y2(t), stored as psi~ = psi cos v."""
    y = crack_point(geom, support, grid.nodes)
    psi = y[:, 0] - 1j * np.cos(y[:, 1])
    return DensityVector(psi * np.cos(grid.nodes), grid)


def case_density(
    params: ExcitationParams,
    geom: CrackGeometry,
    support: SupportInterval,
    k: float = DEFAULT_K,
    n_dense: int = Defaults.NDense,
    trunc_tol: float = Defaults.TruncTol,
    log_rule: LogRule = "panel",
) -> DensityVector:
    params.validate()
    if params.case == Excitation.Forcing:
        return density_case4(geom, support, QuadratureGrid(n_dense, "midpoint"))
    return solve_bie(
        geom,
        support,
        lambda pts: -incident_field(params, pts, k),
        n_dense=n_dense,
        trunc_tol=trunc_tol,
        k=k,
        log_rule=log_rule,
    )


def forward_data_for_case(
    params: ExcitationParams,
    geom: CrackGeometry,
    support: SupportInterval,
    obs: ObservationSet | None = None,
    k: float = DEFAULT_K,
    n_dense: int = Defaults.NDense,
    trunc_tol: float = Defaults.TruncTol,
    log_rule: LogRule = "panel",
) -> np.ndarray:
    obs = obs or ObservationSet()
    density = case_density(params, geom, support, k, n_dense, trunc_tol, log_rule)
    return scattered_field(geom, support, density, obs.points, k)


@dataclass(frozen=True, eq=False)
class FieldGrid:
    xs: np.ndarray
    ys: np.ndarray
    total: np.ndarray
    incident: np.ndarray
    masked: np.ndarray
    params: ExcitationParams
    meta: dict[str, Any] = field(default_factory=dict)


def total_field_at(
    params: ExcitationParams,
    geom: CrackGeometry,
    support: SupportInterval,
    points: Any,
    k: float = DEFAULT_K,
    density: DensityVector | None = None,
    n_dense: int = Defaults.NDense,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(total, incident, masked) at the given points; masked entries hold nan."""
    pts = np.asarray(points, float)
    shape = pts.shape[:-1]
    flat = pts.reshape(-1, 2)
    if density is None:
        density = case_density(params, geom, support, k, n_dense)
    masked = distance_to_crack(geom, support, flat) < MASK_DISTANCE
    if params.source is not None and params.case in _SOURCE_RANGES:
        masked |= np.linalg.norm(flat - np.asarray(params.source), axis=-1) < MASK_DISTANCE

    inc = np.full(len(flat), np.nan + 0j, dtype=complex)
    total = np.full(len(flat), np.nan + 0j, dtype=complex)
    ok = ~masked
    if ok.any():
        inc[ok] = incident_field(params, flat[ok], k)
        total[ok] = inc[ok] + scattered_field(geom, support, density, flat[ok], k)
    return total.reshape(shape), inc.reshape(shape), masked.reshape(shape)


def total_field_grid(
    params: ExcitationParams,
    geom: CrackGeometry,
    support: SupportInterval,
    extent: float = 6.0,
    resolution: int = 121,
    k: float = DEFAULT_K,
    n_dense: int = Defaults.NDense,
) -> FieldGrid:
    """Incident plus scattered field on the square [-extent, extent]^2."""
    if resolution < 2 or extent <= 0:
        raise DomainError("Field grid needs extent > 0 and resolution >= 2")
    xs = np.linspace(-extent, extent, resolution)
    ys = np.linspace(-extent, extent, resolution)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    points = np.stack([X, Y], axis=-1)
    total, inc, masked = total_field_at(params, geom, support, points, k, n_dense=n_dense)
    logger.debug("field grid %dx%d, %d masked", resolution, resolution, int(masked.sum()))
    return FieldGrid(xs, ys, total, inc, masked, params, {"extent": extent, "resolution": resolution, "k": k})
