"""Plain-numpy MLP (tanh hidden layers, linear head), Adam, and the three routed networks.

Checkpoint layout (little-endian):
    "CRKM", u32 version, u32 kind (1..3), u32 n_widths, u32 widths[n_widths], u32 out,
    16-byte training-config hash, f64 parameters (per layer: W row-major (in x out), then b).
"""

from __future__ import annotations

import csv
import hashlib
import logging
import math
import os
import time
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from crackscat.core.errors import CheckpointError, DimensionError, EmptyDatasetError
from crackscat.core.paths import ensure_parent
from crackscat.dataset import Dataset
from crackscat.models.schemas import NetworkKind, TrainConfig

logger = logging.getLogger(__name__)

MAGIC = b"CRKM"
VERSION = 1
HIDDEN = (80, 80, 80)
HASH_BYTES = 16
KIND_CODES: dict[str, int] = {"N1": 1, "N2": 2, "N3": 3}
OUTPUTS: dict[str, int] = {"N1": 1, "N2": 2, "N3": 2}


@dataclass(eq=False)
class MlpModel:
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    kind: str = "N1"
    config_hash: bytes = bytes(HASH_BYTES)

    @property
    def widths(self) -> list[int]:
        return [int(self.weights[0].shape[0]), *(int(w.shape[1]) for w in self.weights)]

    @property
    def out_dim(self) -> int:
        return self.widths[-1]

    @property
    def param_count(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    @classmethod
    def create(
        cls,
        kind: str,
        n_in: int = 80,
        hidden: Sequence[int] = HIDDEN,
        rng: np.random.Generator | None = None,
        out: int | None = None,
    ) -> "MlpModel":
        """Glorot-uniform weights, zero biases."""
        rng = rng or np.random.default_rng(0)
        widths = [n_in, *hidden, out if out is not None else OUTPUTS[kind]]
        weights, biases = [], []
        for fan_in, fan_out in zip(widths[:-1], widths[1:]):
            lim = math.sqrt(6.0 / (fan_in + fan_out))
            weights.append(rng.uniform(-lim, lim, size=(fan_in, fan_out)))
            biases.append(np.zeros(fan_out))
        return cls(weights, biases, kind)

    def copy(self) -> "MlpModel":
        return MlpModel([w.copy() for w in self.weights], [b.copy() for b in self.biases], self.kind, self.config_hash)

    def flat_params(self) -> np.ndarray:
        parts = []
        for w, b in zip(self.weights, self.biases):
            parts.append(w.ravel())
            parts.append(b)
        return np.concatenate(parts)


@dataclass(eq=False)
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0

    @classmethod
    def for_model(cls, model: MlpModel, config: TrainConfig | None = None) -> "AdamState":
        c = config or TrainConfig()
        params = _params(model)
        return cls(
            [np.zeros_like(p) for p in params],
            [np.zeros_like(p) for p in params],
            lr=c.learning_rate,
            beta1=c.beta1,
            beta2=c.beta2,
            eps=c.eps,
        )


def _params(model: MlpModel) -> list[np.ndarray]:
    out = []
    for w, b in zip(model.weights, model.biases):
        out.extend([w, b])
    return out


def _check_input(model: MlpModel, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != model.widths[0]:
        raise DimensionError(f"Model expects inputs of length {model.widths[0]}, got {x.shape[-1]}")
    return x


def _activations(model: MlpModel, x: np.ndarray) -> list[np.ndarray]:
    acts = [x]
    last = len(model.weights) - 1
    for i, (w, b) in enumerate(zip(model.weights, model.biases)):
        z = acts[-1] @ w + b
        acts.append(z if i == last else np.tanh(z))
    return acts


def forward_pass(model: MlpModel, x: Any) -> np.ndarray:
    """Inputs (80,) or (batch, 80) -> outputs (out,) or (batch, out)."""
    x = _check_input(model, x)
    return _activations(model, x)[-1]


def mse(model: MlpModel, x: Any, y: Any) -> float:
    out = forward_pass(model, x)
    return float(np.mean((out - np.asarray(y, float)) ** 2))


def backward_pass(model: MlpModel, x: Any, y: Any) -> tuple[float, list[np.ndarray]]:
    """MSE over batch and outputs, and its gradients in the order W0, b0, W1, b1, ..."""
    x = _check_input(model, np.atleast_2d(x))
    y = np.asarray(y, float).reshape(x.shape[0], -1)
    if y.shape[1] != model.out_dim:
        raise DimensionError(f"Targets have {y.shape[1]} columns, model has {model.out_dim} outputs")
    acts = _activations(model, x)
    diff = acts[-1] - y
    loss = float(np.mean(diff**2))
    delta = 2.0 * diff / diff.size
    grads: list[np.ndarray] = [np.empty(0)] * (2 * len(model.weights))
    for i in range(len(model.weights) - 1, -1, -1):
        grads[2 * i] = acts[i].T @ delta
        grads[2 * i + 1] = delta.sum(axis=0)
        if i:
            delta = (delta @ model.weights[i].T) * (1.0 - acts[i] ** 2)
    return loss, grads


def adam_step(model: MlpModel, grads: Sequence[np.ndarray], state: AdamState) -> tuple[MlpModel, AdamState]:
    """In-place bias-corrected Adam update; returns the same objects."""
    params = _params(model)
    if len(grads) != len(params):
        raise DimensionError(f"Expected {len(params)} gradient arrays, got {len(grads)}")
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**state.step
    c2 = 1.0 - b2**state.step
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if g.shape != p.shape:
            raise DimensionError(f"Gradient shape {g.shape} does not match parameter shape {p.shape}")
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return model, state


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------


@dataclass
class TrainingLog:
    rows: list[dict[str, float]] = field(default_factory=list)
    best_epoch: int = 0
    best_val_mse: float = math.inf

    def write_csv(self, path: str, header: Sequence[str] = ()) -> None:
        ensure_parent(path)
        with open(path, "w", newline="", encoding="utf-8") as f:
            for h in header:
                f.write(f"# {h}\n")
            writer = csv.DictWriter(f, fieldnames=["epoch", "train_mse", "val_mse", "wall_time"])
            writer.writeheader()
            for row in self.rows:
                writer.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})


def training_arrays(kind: str, data: Dataset) -> tuple[np.ndarray, np.ndarray]:
    """Inputs and targets for one network: N1 all samples (theta only), N2 theta < 0, N3 theta >= 0."""
    if kind not in KIND_CODES:
        raise DimensionError(f"Unknown network kind: {kind}")
    theta = data.raw[:, 0]
    if kind == "N1":
        mask = np.ones(len(data), dtype=bool)
    elif kind == "N2":
        mask = theta < 0
    else:
        mask = theta >= 0
    if not mask.any():
        raise EmptyDatasetError(f"No samples left for {kind} after filtering ({len(data)} in dataset)")
    x = data.inputs[mask].astype(np.float64)
    y = data.targets[mask].astype(np.float64)[:, : OUTPUTS[kind]]
    return x, y


def config_hash(config: TrainConfig, extra: Sequence[str] = ()) -> bytes:
    text = "\n".join([config.model_dump_json(), *extra]).encode("utf-8")
    return hashlib.blake2b(text, digest_size=HASH_BYTES).digest()


def fit(
    kind: str,
    x: np.ndarray,
    y: np.ndarray,
    config: TrainConfig | None = None,
    hidden: Sequence[int] = HIDDEN,
    hash_extra: Sequence[str] = (),
) -> tuple[MlpModel, TrainingLog]:
    """Minibatch Adam with a seed-derived validation split and patience on validation MSE."""
    c = config or TrainConfig()
    n = len(x)
    if n == 0:
        raise EmptyDatasetError(f"No training samples for {kind}")
    rng = np.random.default_rng(c.seed)
    perm = rng.permutation(n)
    n_val = int(round(c.validation_fraction * n))
    if c.validation_fraction > 0 and n >= 2:
        n_val = min(max(n_val, 1), n - 1)
    else:
        n_val = 0
    val_idx, train_idx = perm[:n_val], perm[n_val:]
    x_val, y_val = (x[val_idx], y[val_idx]) if n_val else (x[train_idx], y[train_idx])

    model = MlpModel.create(kind, n_in=x.shape[1], hidden=hidden, rng=rng, out=y.shape[1])
    model.config_hash = config_hash(c, hash_extra)
    state = AdamState.for_model(model, c)
    log = TrainingLog()
    best = model.copy()
    stale = 0
    started = time.time()
    for epoch in range(1, c.epochs + 1):
        order = train_idx[rng.permutation(len(train_idx))]
        for start in range(0, len(order), c.batch_size):
            batch = order[start : start + c.batch_size]
            _, grads = backward_pass(model, x[batch], y[batch])
            adam_step(model, grads, state)
        train_mse = mse(model, x[train_idx], y[train_idx])
        val_mse = mse(model, x_val, y_val)
        log.rows.append(
            {"epoch": epoch, "train_mse": train_mse, "val_mse": val_mse, "wall_time": time.time() - started}
        )
        if val_mse < log.best_val_mse:
            log.best_val_mse, log.best_epoch = val_mse, epoch
            best = model.copy()
            stale = 0
        else:
            stale += 1
        logger.debug("%s epoch %d: train %.3e val %.3e", kind, epoch, train_mse, val_mse)
        if stale >= c.patience:
            logger.info("%s: no validation improvement for %d epochs, stopping at %d", kind, c.patience, epoch)
            break
    logger.info("%s: best val_mse %.4e at epoch %d", kind, log.best_val_mse, log.best_epoch)
    return best, log


def train(
    kind: NetworkKind,
    data: Dataset,
    config: TrainConfig | None = None,
    hidden: Sequence[int] = HIDDEN,
    hash_extra: Sequence[str] = (),
) -> tuple[MlpModel, TrainingLog]:
    x, y = training_arrays(kind, data)
    logger.info("%s: training on %d samples", kind, len(x))
    return fit(kind, x, y, config, hidden, hash_extra)


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------


def header_size(n_widths: int) -> int:
    return len(MAGIC) + 4 * (3 + n_widths + 1) + HASH_BYTES


def save_model(model: MlpModel, path: str) -> None:
    ensure_parent(path)
    widths = model.widths
    head = np.array([VERSION, KIND_CODES[model.kind], len(widths), *widths, model.out_dim], dtype="<u4")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(head.tobytes())
        f.write(bytes(model.config_hash).ljust(HASH_BYTES, b"\0")[:HASH_BYTES])
        f.write(model.flat_params().astype("<f8").tobytes())


def read_model_header(path: str) -> dict[str, Any]:
    if not os.path.exists(path):
        raise CheckpointError(f"Checkpoint not found: {path}")
    with open(path, "rb") as f:
        blob = f.read(len(MAGIC) + 12)
        if len(blob) < len(MAGIC) + 12 or blob[:4] != MAGIC:
            raise CheckpointError(f"{path}: not a model checkpoint (expected magic {MAGIC!r})")
        version, kind_code, n_widths = np.frombuffer(blob[4:], dtype="<u4")
        if int(version) != VERSION:
            raise CheckpointError(f"{path}: checkpoint version {int(version)}, this build reads {VERSION}")
        if not 2 <= int(n_widths) <= 64:
            raise CheckpointError(f"{path}: corrupt layer count {int(n_widths)}")
        rest = f.read(4 * (int(n_widths) + 1) + HASH_BYTES)
    if len(rest) < 4 * (int(n_widths) + 1) + HASH_BYTES:
        raise CheckpointError(f"{path}: truncated header")
    dims = np.frombuffer(rest[: 4 * (int(n_widths) + 1)], dtype="<u4")
    widths, out = [int(w) for w in dims[:-1]], int(dims[-1])
    kinds = {v: k for k, v in KIND_CODES.items()}
    if int(kind_code) not in kinds:
        raise CheckpointError(f"{path}: unknown network kind code {int(kind_code)}")
    if out != widths[-1]:
        raise CheckpointError(f"{path}: output size {out} does not match last width {widths[-1]}")
    return {
        "magic": MAGIC.decode(),
        "version": int(version),
        "kind": kinds[int(kind_code)],
        "widths": widths,
        "out": out,
        "config_hash": rest[-HASH_BYTES:].hex(),
    }


def load_model(path: str) -> MlpModel:
    h = read_model_header(path)
    widths = h["widths"]
    n_params = sum(a * b + b for a, b in zip(widths[:-1], widths[1:]))
    offset = header_size(len(widths))
    expected = offset + 8 * n_params
    size = os.path.getsize(path)
    if size != expected:
        raise CheckpointError(f"{path}: size {size} bytes, expected {expected} for widths {widths}")
    flat = np.fromfile(path, dtype="<f8", count=n_params, offset=offset).astype(np.float64)
    if not np.all(np.isfinite(flat)):
        raise CheckpointError(f"{path}: non-finite parameters")
    weights, biases = [], []
    pos = 0
    for a, b in zip(widths[:-1], widths[1:]):
        weights.append(flat[pos : pos + a * b].reshape(a, b).copy())
        pos += a * b
        biases.append(flat[pos : pos + b].copy())
        pos += b
    return MlpModel(weights, biases, h["kind"], bytes.fromhex(h["config_hash"]))
