from __future__ import annotations

import csv
import logging
import math
import os
import time
from dataclasses import asdict, dataclass, field
from typing import Any, Sequence

import numpy as np

from crackscat import forward
from crackscat.core.config import Defaults
from crackscat.core.errors import CheckpointError, CrackscatError, DimensionError, DomainError
from crackscat.core.paths import ensure_parent, model_path
from crackscat.dataset import denormalize_targets, encode_vector, sample_geometry_and_support
from crackscat.job_manager import JobRunner
from crackscat.models.schemas import NoiseSpec, SampleConfig
from crackscat.nn import MlpModel, forward_pass, load_model

logger = logging.getLogger(__name__)

THETA_HI = math.nextafter(math.pi / 2, 0.0)
CASE_PROBABILITIES = (0.25, 0.25, 0.25, 0.25)
TRIAL_FIELDS = ["trial", "case", "theta", "a", "theta_hat", "a_hat", "err_sin_theta", "err_a", "noisy", "micros"]


@dataclass(frozen=True, eq=False)
class Measurement:
    data: np.ndarray
    provenance: str = "synthetic"

    def __post_init__(self) -> None:
        d = np.asarray(self.data, dtype=complex)
        if d.ndim != 1 or not np.all(np.isfinite(d)):
            raise DomainError("Measurement must be a finite 1-D complex vector")
        if not np.any(d):
            raise DomainError("Measurement is identically zero")
        object.__setattr__(self, "data", d)


@dataclass
class TrialResult:
    trial: int
    case: int
    theta: float
    a: float
    theta_hat: float = math.nan
    a_hat: float = math.nan
    err_sin_theta: float = math.nan
    err_a: float = math.nan
    noisy: bool = False
    micros: float = 0.0
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None

    def csv_row(self) -> dict[str, Any]:
        row = {k: v for k, v in asdict(self).items() if k in TRIAL_FIELDS}
        row["noisy"] = int(self.noisy)
        return row


@dataclass
class ModelSet:
    n1: MlpModel
    n2: MlpModel
    n3: MlpModel
    a_max: float = 1.0

    def __post_init__(self) -> None:
        n_in = self.n1.widths[0]
        for name, m, out in (("N1", self.n1, 1), ("N2", self.n2, 2), ("N3", self.n3, 2)):
            if m.widths[0] != n_in:
                raise CheckpointError(f"{name} expects inputs of length {m.widths[0]}, N1 expects {n_in}")
            if m.out_dim != out:
                raise CheckpointError(f"{name} has {m.out_dim} outputs, expected {out}")

    @property
    def input_size(self) -> int:
        return self.n1.widths[0]

    @classmethod
    def load(cls, models_dir: str, a_max: float = 1.0) -> "ModelSet":
        loaded = []
        for kind in ("N1", "N2", "N3"):
            p = model_path(models_dir, kind)
            if not os.path.exists(p):
                raise CheckpointError(f"Missing checkpoint for {kind}: {p}")
            m = load_model(p)
            if m.kind != kind:
                raise CheckpointError(f"{p} holds a {m.kind} network, expected {kind}")
            loaded.append(m)
        return cls(*loaded, a_max=a_max)


def encode_measurement(meas: Measurement) -> np.ndarray:
    return encode_vector(meas.data)


def recover_batch(inputs: Any, models: ModelSet) -> tuple[np.ndarray, np.ndarray]:
    """Route each row on the sign of N1, then de-normalize and clamp to the admissible box."""
    x = np.atleast_2d(np.asarray(inputs, float))
    if x.shape[1] != models.input_size:
        raise DimensionError(f"Inputs of length {x.shape[1]} do not fit models expecting {models.input_size}")
    negative = forward_pass(models.n1, x)[:, 0] < 0
    out = np.empty((len(x), 2))
    if negative.any():
        out[negative] = forward_pass(models.n2, x[negative])
    if (~negative).any():
        out[~negative] = forward_pass(models.n3, x[~negative])
    theta, a = denormalize_targets(out, models.a_max)
    return np.clip(theta, -math.pi / 2, THETA_HI), np.clip(a, -models.a_max, models.a_max)


def recover(meas: Measurement, models: ModelSet) -> tuple[float, float]:
    theta, a = recover_batch(encode_measurement(meas), models)
    return float(theta[0]), float(a[0])


def add_noise(meas: Measurement, spec: NoiseSpec, rng: np.random.Generator) -> Measurement:
    """Additive uniform noise on every real coordinate, scaled by the sup norm over all of them."""
    d = meas.data
    n = len(d)
    scale = float(max(np.abs(d.real).max(), np.abs(d.imag).max()))
    noise = rng.uniform(-spec.amplitude, spec.amplitude, size=2 * n) * scale
    return Measurement(d + noise[:n] + 1j * noise[n:], provenance=f"{meas.provenance}+noise")


def draw_excitation(rng: np.random.Generator) -> forward.ExcitationParams:
    case = int(rng.choice(4, p=CASE_PROBABILITIES)) + 1
    if case == forward.Excitation.PlaneWave:
        return forward.ExcitationParams.plane_wave(rng.uniform(0.0, 2.0 * math.pi))
    if case in (forward.Excitation.NearSource, forward.Excitation.FarSource):
        lo, hi = (3.0, 3.5) if case == forward.Excitation.NearSource else (5.0, 7.0)
        r = rng.uniform(lo, hi)
        ang = rng.uniform(0.0, 2.0 * math.pi)
        return forward.ExcitationParams.point_source((r * math.cos(ang), r * math.sin(ang)), case)
    return forward.ExcitationParams.forcing()


def _score(result: TrialResult, theta_hat: float, a_hat: float, micros: float) -> TrialResult:
    result.theta_hat, result.a_hat, result.micros = theta_hat, a_hat, micros
    result.err_sin_theta = abs(math.sin(theta_hat) - math.sin(result.theta))
    result.err_a = abs(a_hat - result.a)
    return result


def _timed_recover(meas: Measurement, models: ModelSet) -> tuple[float, float, float]:
    t0 = time.perf_counter()
    theta_hat, a_hat = recover(meas, models)
    return theta_hat, a_hat, (time.perf_counter() - t0) * 1e6


@dataclass
class Evaluation:
    results: list[TrialResult]
    summary: dict[str, Any]
    example: dict[str, Any] | None = None

    def clean(self) -> list[TrialResult]:
        return [r for r in self.results if not r.noisy]

    def noisy(self) -> list[TrialResult]:
        return [r for r in self.results if r.noisy]


def _means(rows: list[TrialResult], prefix: str) -> dict[str, float]:
    ok = [r for r in rows if r.ok]
    if not ok:
        return {f"{prefix}mean_err_sin_theta": math.nan, f"{prefix}mean_err_a": math.nan}
    return {
        f"{prefix}mean_err_sin_theta": float(np.mean([r.err_sin_theta for r in ok])),
        f"{prefix}mean_err_a": float(np.mean([r.err_a for r in ok])),
    }


def summarize(results: list[TrialResult], noise: NoiseSpec | None = None) -> dict[str, Any]:
    clean = [r for r in results if not r.noisy]
    noisy = [r for r in results if r.noisy]
    summary: dict[str, Any] = {
        "trials": len(clean),
        "failed": sum(1 for r in clean if not r.ok),
        **_means(clean, ""),
    }
    for case in range(1, 5):
        summary.update(_means([r for r in clean if r.case == case], f"case{case}_"))
    if noisy:
        summary["noise_amplitude"] = noise.amplitude if noise else math.nan
        summary.update(_means(noisy, "noisy_"))
    summary["total_micros"] = float(sum(r.micros for r in results if r.ok))
    return summary


def evaluate(
    models: ModelSet,
    trials: int = 1000,
    seed: int = 0,
    config: SampleConfig | None = None,
    noise: NoiseSpec | None = None,
    threads: int = 1,
    n_dense: int = Defaults.NDense,
) -> Evaluation:
    """Random crack, random excitation (cases 1-4 equally likely), BIE data, routed recovery.

    Trial i draws from default_rng([seed, i]); its noise from default_rng([seed, i, 1]).
    """
    c = config or SampleConfig(seed=seed)
    obs = forward.ObservationSet(c.radius, c.n_obs)
    with_noise = noise is not None and noise.amplitude > 0

    def one(i: int) -> tuple[list[TrialResult], dict[str, Any] | None]:
        rng = np.random.default_rng([seed, i])
        geom, support = sample_geometry_and_support(rng, c)
        params = draw_excitation(rng)
        base = dict(trial=i, case=int(params.case), theta=geom.theta, a=geom.a)
        try:
            data = forward.forward_data_for_case(params, geom, support, obs, k=c.k, n_dense=n_dense)
            meas = Measurement(data, provenance=f"case{int(params.case)}")
            out = [_score(TrialResult(**base), *_timed_recover(meas, models))]
            example: dict[str, Any] | None = {"trial": i, "case": int(params.case), "clean": meas.data}
            if with_noise:
                noisy = add_noise(meas, noise, np.random.default_rng([seed, i, 1]))  # type: ignore[arg-type]
                out.append(_score(TrialResult(**base, noisy=True), *_timed_recover(noisy, models)))
                example["noisy"] = noisy.data  # type: ignore[index]
            return out, example
        except (CrackscatError, np.linalg.LinAlgError) as e:
            logger.warning("trial %d (case %d) failed: %s", i, int(params.case), e)
            out = [TrialResult(**base, error=str(e))]
            if with_noise:
                out.append(TrialResult(**base, noisy=True, error=str(e)))
            return out, None

    results: list[TrialResult] = []
    example = None
    for rows, ex in JobRunner(threads).imap_indexed("eval", one, trials):
        results.extend(rows)
        if example is None and ex is not None:
            example = ex
    summary = summarize(results, noise if with_noise else None)
    return Evaluation(results, summary, example)


def write_trials_csv(results: Sequence[TrialResult], path: str, header: Sequence[str] = ()) -> None:
    ensure_parent(path)
    with open(path, "w", newline="", encoding="utf-8") as f:
        for h in header:
            f.write(f"# {h}\n")
        writer = csv.DictWriter(f, fieldnames=TRIAL_FIELDS)
        writer.writeheader()
        for r in results:
            writer.writerow(r.csv_row())


def sorted_errors(results: Sequence[TrialResult]) -> dict[str, np.ndarray]:
    def col(rows: list[TrialResult], attr: str) -> np.ndarray:
        return np.sort([getattr(r, attr) for r in rows if r.ok])

    clean = [r for r in results if not r.noisy]
    noisy = [r for r in results if r.noisy]
    return {
        "clean_err_sin_theta": col(clean, "err_sin_theta"),
        "clean_err_a": col(clean, "err_a"),
        "noisy_err_sin_theta": col(noisy, "err_sin_theta"),
        "noisy_err_a": col(noisy, "err_a"),
    }


def write_sorted_errors_csv(results: Sequence[TrialResult], path: str, header: Sequence[str] = ()) -> None:
    cols = sorted_errors(results)
    n = max((len(v) for v in cols.values()), default=0)
    ensure_parent(path)
    with open(path, "w", newline="", encoding="utf-8") as f:
        for h in header:
            f.write(f"# {h}\n")
        writer = csv.writer(f)
        writer.writerow(["rank", *cols])
        for i in range(n):
            writer.writerow([i + 1, *(repr(float(v[i])) if i < len(v) else "" for v in cols.values())])


def phase_sensitivity(meas: Measurement, models: ModelSet, n_phases: int = 16) -> dict[str, Any]:
    """Prediction drift when the data is multiplied by exp(i*phi), phi on a uniform grid of [0, 2pi)."""
    phases = 2.0 * math.pi * np.arange(n_phases) / n_phases
    inputs = np.stack([encode_vector(meas.data * np.exp(1j * p)) for p in phases])
    theta, a = recover_batch(inputs, models)
    s = np.sin(theta)
    return {
        "phases": phases,
        "theta_hat": theta,
        "a_hat": a,
        "max_drift_sin_theta": float(np.max(np.abs(s - s[0]))),
        "max_drift_a": float(np.max(np.abs(a - a[0]))),
    }


@dataclass
class DataExample:
    angles: np.ndarray
    clean: np.ndarray
    noisy: np.ndarray | None = None
    meta: dict[str, Any] = field(default_factory=dict)

    def rows(self) -> list[dict[str, float]]:
        out = []
        for i, ang in enumerate(self.angles):
            row = {"angle": float(ang), "re_clean": float(self.clean[i].real), "im_clean": float(self.clean[i].imag)}
            if self.noisy is not None:
                row["re_noisy"] = float(self.noisy[i].real)
                row["im_noisy"] = float(self.noisy[i].imag)
            out.append(row)
        return out


def data_example(evaluation: Evaluation, obs: forward.ObservationSet) -> DataExample | None:
    ex = evaluation.example
    if ex is None:
        return None
    return DataExample(obs.angles, ex["clean"], ex.get("noisy"), {"trial": ex["trial"], "case": ex["case"]})


def write_data_example_csv(example: DataExample, path: str, header: Sequence[str] = ()) -> None:
    rows = example.rows()
    ensure_parent(path)
    with open(path, "w", newline="", encoding="utf-8") as f:
        for h in header:
            f.write(f"# {h}\n")
        for k, v in example.meta.items():
            f.write(f"# {k}={v}\n")
        writer = csv.DictWriter(f, fieldnames=list(rows[0]))
        writer.writeheader()
        writer.writerows(rows)
