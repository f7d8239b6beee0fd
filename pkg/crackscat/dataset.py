"""Training data: random crack, leading left singular vectors, random ball coefficients, unit input.

File layout (little-endian, packed):
    header  magic "CRKD", version u32, count u64, n_obs u32, n_singular u32, k f64, radius f64, seed u64
    records count x (2*n_obs f32 inputs, 2 f32 normalized targets, 2 f32 raw (theta, a))
A "<file>.cfg" sidecar carries the resolved run configuration.
"""

from __future__ import annotations

import logging
import math
import os
import time
from dataclasses import dataclass
from typing import Any, Sequence

import numpy as np

from crackscat import forward
from crackscat.core.errors import DatasetError, DatasetFormatError, DomainError
from crackscat.core.paths import ensure_parent, write_sidecar
from crackscat.job_manager import JobRunner
from crackscat.models.schemas import SampleConfig
from crackscat.spectral import leading_subspace

logger = logging.getLogger(__name__)

MAGIC = b"CRKD"
VERSION = 1
NORM_TOL = 1e-5
MAX_REDRAWS = 16
_WRITE_BLOCK = 1024

HEADER_DTYPE = np.dtype(
    [
        ("magic", "S4"),
        ("version", "<u4"),
        ("count", "<u8"),
        ("n_obs", "<u4"),
        ("n_singular", "<u4"),
        ("k", "<f8"),
        ("radius", "<f8"),
        ("seed", "<u8"),
    ]
)


def record_dtype(n_obs: int) -> np.dtype:
    return np.dtype([("inputs", "<f4", (2 * n_obs,)), ("targets", "<f4", (2,)), ("raw", "<f4", (2,))])


@dataclass(frozen=True, eq=False)
class TrainingSample:
    inputs: np.ndarray
    theta: float
    a: float
    geometry: forward.CrackGeometry
    support: forward.SupportInterval

    @property
    def target(self) -> tuple[float, float]:
        return (self.theta, self.a)


@dataclass(frozen=True, eq=False)
class Dataset:
    header: dict[str, Any]
    inputs: np.ndarray
    targets: np.ndarray
    raw: np.ndarray

    def __len__(self) -> int:
        return int(self.inputs.shape[0])

    def select(self, mask: np.ndarray) -> "Dataset":
        h = dict(self.header)
        h["count"] = int(np.count_nonzero(mask))
        return Dataset(h, self.inputs[mask], self.targets[mask], self.raw[mask])


def normalize_targets(theta: Any, a: Any, a_max: float = 1.0) -> np.ndarray:
    return np.stack([np.asarray(theta, float) * (2.0 / math.pi), np.asarray(a, float) / a_max], axis=-1)


def denormalize_targets(targets: Any, a_max: float = 1.0) -> tuple[np.ndarray, np.ndarray]:
    t = np.asarray(targets, float)
    return t[..., 0] * (math.pi / 2.0), t[..., 1] * a_max


def sample_geometry_and_support(
    rng: np.random.Generator, config: SampleConfig | None = None
) -> tuple[forward.CrackGeometry, forward.SupportInterval]:
    c = config or SampleConfig()
    theta = rng.uniform(*c.theta_range)
    if theta >= c.theta_range[1]:
        theta = math.nextafter(c.theta_range[1], -math.inf)
    a = rng.uniform(-c.a_max, c.a_max)
    o = rng.uniform(*c.o_range)
    l = rng.uniform(*c.l_range)
    return forward.CrackGeometry(float(theta), float(a)), forward.SupportInterval(float(o), float(l))


def sample_complex_ball(rng: np.random.Generator, dim: int = 5) -> np.ndarray:
    """Uniform on the unit ball of C^dim, seen as R^(2 dim)."""
    g = rng.standard_normal(2 * dim)
    g /= np.linalg.norm(g)
    g *= rng.uniform() ** (1.0 / (2 * dim))
    return g[:dim] + 1j * g[dim:]


def encode_vector(w: Any) -> np.ndarray:
    """[Re; Im] of w/||w||."""
    w = np.asarray(w, dtype=complex)
    norm = float(np.linalg.norm(w))
    if norm == 0.0 or not math.isfinite(norm):
        raise DomainError("Cannot encode a zero or non-finite data vector")
    u = w / norm
    return np.concatenate([u.real, u.imag])


def coarse_operator(
    geom: forward.CrackGeometry, support: forward.SupportInterval, config: SampleConfig
) -> forward.ForwardMatrix:
    return forward.assemble_forward_matrix(
        geom,
        support,
        forward.QuadratureGrid(config.n_quad, "trapezoid"),
        forward.ObservationSet(config.radius, config.n_obs),
        include_scale=False,
        k=config.k,
    )


def make_sample(rng: np.random.Generator, config: SampleConfig | None = None, r: Any = None) -> TrainingSample:
    c = config or SampleConfig()
    geom, support = sample_geometry_and_support(rng, c)
    left, _, _ = leading_subspace(coarse_operator(geom, support, c), c.n_singular)
    for _ in range(MAX_REDRAWS):
        coef = np.asarray(r, dtype=complex) if r is not None else sample_complex_ball(rng, c.n_singular)
        w = left @ coef
        if np.linalg.norm(w) >= 1e-12:
            return TrainingSample(encode_vector(w), geom.theta, geom.a, geom, support)
        if r is not None:
            break
    raise DatasetError(f"Degenerate coefficient draw after {MAX_REDRAWS} attempts")


def _echo_lines(config: SampleConfig) -> list[str]:
    keys = ("k", "radius", "n_obs", "n_quad", "n_singular", "a_max", "seed")
    return [f"{key}={getattr(config, key)}" for key in keys]


def generate_dataset(
    config: SampleConfig,
    count: int,
    path: str,
    threads: int = 1,
    echo: Sequence[str] | None = None,
) -> dict[str, Any]:
    """Stream `count` samples to `path`; sample i is drawn from default_rng([seed, i])."""
    if count < 0:
        raise DatasetError("count must be >= 0")
    ensure_parent(path)
    header = np.zeros((), dtype=HEADER_DTYPE)
    header["magic"] = MAGIC
    header["version"] = VERSION
    header["count"] = count
    header["n_obs"] = config.n_obs
    header["n_singular"] = config.n_singular
    header["k"] = config.k
    header["radius"] = config.radius
    header["seed"] = config.seed

    rec = record_dtype(config.n_obs)
    block = np.zeros(_WRITE_BLOCK, dtype=rec)
    fill = 0

    def one(i: int) -> TrainingSample:
        return make_sample(np.random.default_rng([config.seed, i]), config)

    started = time.time()
    with open(path, "wb") as f:
        f.write(header.tobytes())
        for s in JobRunner(threads).imap_indexed("gen-data", one, count):
            block["inputs"][fill] = s.inputs
            block["targets"][fill] = normalize_targets(s.theta, s.a, config.a_max)
            block["raw"][fill] = (s.theta, s.a)
            fill += 1
            if fill == _WRITE_BLOCK:
                f.write(block.tobytes())
                fill = 0
        if fill:
            f.write(block[:fill].tobytes())
    elapsed = time.time() - started
    write_sidecar(path, [*(echo if echo is not None else _echo_lines(config)), f"# count={count}"])
    rate = count / elapsed if elapsed > 0 else float("inf")
    logger.info("wrote %d samples to %s (%.1f samples/s)", count, path, rate)
    return {"count": count, "elapsed": elapsed, "rate": rate}


def read_header(path: str) -> dict[str, Any]:
    if not os.path.exists(path):
        raise DatasetError(f"Dataset not found: {path}")
    with open(path, "rb") as f:
        raw = f.read(HEADER_DTYPE.itemsize)
    if len(raw) < HEADER_DTYPE.itemsize:
        raise DatasetFormatError(f"{path}: truncated header")
    h = np.frombuffer(raw, dtype=HEADER_DTYPE)[0]
    if bytes(h["magic"]) != MAGIC:
        raise DatasetFormatError(f"{path}: bad magic {bytes(h['magic'])!r}, expected {MAGIC!r}")
    if int(h["version"]) != VERSION:
        raise DatasetFormatError(f"{path}: unsupported dataset version {int(h['version'])}")
    return {
        "magic": MAGIC.decode(),
        "version": int(h["version"]),
        "count": int(h["count"]),
        "n_obs": int(h["n_obs"]),
        "n_singular": int(h["n_singular"]),
        "k": float(h["k"]),
        "radius": float(h["radius"]),
        "seed": int(h["seed"]),
    }


def load_dataset(path: str, check_norms: bool = True) -> Dataset:
    header = read_header(path)
    rec = record_dtype(header["n_obs"])
    expected = HEADER_DTYPE.itemsize + header["count"] * rec.itemsize
    size = os.path.getsize(path)
    if size != expected:
        kind = "truncated" if size < expected else "oversized"
        raise DatasetFormatError(f"{path}: {kind} file ({size} bytes, header implies {expected})")
    records = np.fromfile(path, dtype=rec, count=header["count"], offset=HEADER_DTYPE.itemsize)
    inputs = records["inputs"]
    if check_norms and len(records):
        norms = np.linalg.norm(inputs.astype(np.float64), axis=1)
        bad = np.flatnonzero(np.abs(norms - 1.0) > NORM_TOL)
        if bad.size:
            raise DatasetFormatError(f"{path}: record {int(bad[0])} input norm {norms[bad[0]]:.6f} is not 1")
    return Dataset(header, inputs, records["targets"], records["raw"])
