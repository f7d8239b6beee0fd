"""Complex SVD, leading singular subspaces and the stability-constant harness."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass
from typing import TYPE_CHECKING, Any, Callable, Iterable, Sequence

import numpy as np

from crackscat.core.errors import ConvergenceError, DimensionError, DomainError, ZeroDenominatorError
from crackscat.job_manager import JobRunner
from crackscat.models.schemas import StabilityReport

if TYPE_CHECKING:
    from crackscat.families.base import OperatorFamily
    from crackscat.forward import ForwardMatrix

logger = logging.getLogger(__name__)

MAX_SWEEPS = 100
RANK_TOL = 1e-14
GAP_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class SingularSystem:
    sigma: np.ndarray
    left: np.ndarray
    right: np.ndarray
    rank: int
    sweeps: int = 0

    def reconstruct(self) -> np.ndarray:
        return (self.left * self.sigma) @ self.right.conj().T


def _round_robin(n: int) -> list[tuple[np.ndarray, np.ndarray]]:
    """Disjoint column pairs, every pair exactly once per sweep (circle method)."""
    players = list(range(n + (n % 2)))
    size = len(players)
    rounds = []
    for _ in range(size - 1):
        p, q = [], []
        for i in range(size // 2):
            a, b = players[i], players[size - 1 - i]
            if a < n and b < n:
                p.append(min(a, b))
                q.append(max(a, b))
        rounds.append((np.array(p, dtype=int), np.array(q, dtype=int)))
        players = [players[0], players[-1], *players[1:-1]]
    return rounds


def _one_sided_jacobi(a: np.ndarray) -> tuple[np.ndarray, np.ndarray, int]:
    """Orthogonalize the columns of a (m >= n) by plane rotations; returns (W = A V, V, sweeps)."""
    m, n = a.shape
    w = a.astype(complex, copy=True)
    v = np.eye(n, dtype=complex)
    if n < 2:
        return w, v, 0
    tol = math.sqrt(m) * np.finfo(float).eps
    rounds = _round_robin(n)
    off = 0.0
    for sweep in range(1, MAX_SWEEPS + 1):
        rotated = False
        off_sq = 0.0
        for P, Q in rounds:
            wp, wq = w[:, P], w[:, Q]
            alpha = np.sum(np.abs(wp) ** 2, axis=0)
            beta = np.sum(np.abs(wq) ** 2, axis=0)
            gamma = np.sum(wp.conj() * wq, axis=0)
            g = np.abs(gamma)
            off_sq += float(np.sum(g**2))
            act = (alpha * beta > 0) & (g > tol * np.sqrt(alpha * beta))
            if not act.any():
                continue
            rotated = True
            P, Q = P[act], Q[act]
            alpha, beta, gamma, g = alpha[act], beta[act], gamma[act], g[act]
            phase = np.conj(gamma) / g  # e^{-i arg gamma}
            zeta = (beta - alpha) / (2.0 * g)
            t = np.where(zeta >= 0, 1.0, -1.0) / (np.abs(zeta) + np.sqrt(1.0 + zeta * zeta))
            c = 1.0 / np.sqrt(1.0 + t * t)
            s = c * t
            for mat in (w, v):
                xp = mat[:, P]
                xq = mat[:, Q] * phase
                mat[:, P] = c * xp - s * xq
                mat[:, Q] = s * xp + c * xq
        off = math.sqrt(off_sq)
        if not rotated:
            return w, v, sweep
    raise ConvergenceError(f"Jacobi SVD did not converge in {MAX_SWEEPS} sweeps (off-diagonal norm {off:.3e})", off)


def svd(matrix: Any) -> SingularSystem:
    """Thin SVD A = sum sigma_i l_i r_i^*, sigma descending, min(m, n) triplets."""
    a = np.asarray(matrix)
    if a.ndim != 2:
        raise DimensionError(f"svd expects a 2-D matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise DomainError("svd requires finite entries")
    m, n = a.shape
    if m < n:
        t = svd(a.conj().T)
        return SingularSystem(t.sigma, t.right, t.left, t.rank, t.sweeps)

    w, v, sweeps = _one_sided_jacobi(a)
    sigma = np.linalg.norm(w, axis=0)
    order = np.argsort(-sigma, kind="stable")
    sigma, w, v = sigma[order], w[:, order], v[:, order]

    rank = int(np.sum(sigma > RANK_TOL * sigma[0])) if n and sigma[0] > 0 else 0
    left = np.empty((m, n), dtype=complex)
    left[:, :rank] = w[:, :rank] / sigma[:rank]
    if rank == 0:
        left = np.eye(m, n, dtype=complex)
    elif rank < n:
        # complete the frame with an orthonormal basis of the complement
        q, _ = np.linalg.qr(left[:, :rank], mode="complete")
        left[:, rank:] = q[:, rank:n]
    return SingularSystem(sigma, left, v, rank, sweeps)


def _as_array(A: "ForwardMatrix | np.ndarray") -> np.ndarray:
    return A.entries if hasattr(A, "entries") else np.asarray(A)


def leading_subspace(A: "ForwardMatrix | np.ndarray", n: int = 5) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Top-n (left frame, right frame, sigma)."""
    entries = _as_array(A)
    if not 1 <= n <= min(entries.shape):
        raise DimensionError(f"Subspace size {n} outside 1..{min(entries.shape)}")
    ss = svd(entries)
    if n < len(ss.sigma) and ss.sigma[n - 1] - ss.sigma[n] <= GAP_TOL * ss.sigma[0]:
        logger.warning("Degenerate singular gap at N=%d: sigma_N=%.6e sigma_N+1=%.6e", n, ss.sigma[n - 1], ss.sigma[n])
    return ss.left[:, :n], ss.right[:, :n], ss.sigma[:n]


def param_metric(m: Any, m2: Any) -> float:
    """sqrt(delta(theta, theta')^2 + (a - a')^2), delta the chordal distance of 2*theta on the circle."""
    theta, a = (float(x) for x in m)
    theta2, a2 = (float(x) for x in m2)
    delta = math.hypot(math.cos(2 * theta) - math.cos(2 * theta2), math.sin(2 * theta) - math.sin(2 * theta2))
    return math.hypot(delta, a - a2)


def generic_example1(m: Any, n: int) -> np.ndarray:
    """A e_j = m1 f_j + m2 f_{j+n} + m2^2 f_{j+2n}."""
    m1, m2 = (float(x) for x in m)
    if n < 1:
        raise DimensionError("n must be >= 1")
    out = np.zeros((3 * n, n))
    j = np.arange(n)
    out[j, j] = m1
    out[j + n, j] = m2
    out[j + 2 * n, j] = m2 * m2
    return out


def generic_example2(m: Any, n_max: int) -> np.ndarray:
    """Truncation of A e_n = (m1 f_{3n} + m2 f_{3n+1} + m2^2 f_{3n+2}) / n to n <= n_max."""
    m1, m2 = (float(x) for x in m)
    if n_max < 1:
        raise DimensionError("n_max must be >= 1")
    n = np.arange(1, n_max + 1)
    out = np.zeros((3 * n_max + 2, n_max))
    cols = n - 1
    out[3 * n - 1, cols] = m1 / n
    out[3 * n, cols] = m2 / n
    out[3 * n + 1, cols] = m2 * m2 / n
    return out


def _right_frame(family: "OperatorFamily", m: Any, n: int) -> tuple[np.ndarray, np.ndarray]:
    A = family.matrix(m)
    if not 1 <= n <= min(A.shape):
        raise DimensionError(f"Subspace size {n} outside 1..{min(A.shape)}")
    return A, svd(A).right[:, :n]


def _ratio(A: np.ndarray, Vm: np.ndarray, A2: np.ndarray, Vm2: np.ndarray, dist: float, u: np.ndarray, v: np.ndarray) -> float:
    ue = Vm @ u
    ve = Vm2 @ v
    num = float(np.linalg.norm(A @ ue - A2 @ ve))
    den = dist * float(np.linalg.norm(v)) + float(np.linalg.norm(ue - ve))
    if den == 0.0:
        raise ZeroDenominatorError("Stability ratio undefined: m = m' and u = v")
    return num / den


def stability_ratio(
    family: "OperatorFamily",
    m: Any,
    m2: Any,
    u: Any,
    v: Any,
    metric: Callable[[Any, Any], float] | None = None,
) -> float:
    """||A_m u - A_m' v|| / (|m - m'| ||v|| + ||u - v||), u and v given in the leading right frames."""
    u = np.asarray(u, dtype=complex)
    v = np.asarray(v, dtype=complex)
    if u.shape != v.shape or u.ndim != 1:
        raise DimensionError("u and v must be coefficient vectors of the same length")
    n = len(u)
    A, Vm = _right_frame(family, m, n)
    A2, Vm2 = _right_frame(family, m2, n)
    dist = (metric or family.metric)(m, m2)
    return _ratio(A, Vm, A2, Vm2, dist, u, v)


def _unit_complex(rng: np.random.Generator, n: int) -> np.ndarray:
    g = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    return g / np.linalg.norm(g)


def _sample_pair(family: "OperatorFamily", seed: int, index: int) -> tuple[np.random.Generator, np.ndarray, np.ndarray]:
    rng = np.random.default_rng([seed, index])
    return rng, family.sample_parameter(rng), family.sample_parameter(rng)


def _fmt(vec: np.ndarray) -> list[Any]:
    if np.iscomplexobj(vec):
        return [[float(z.real), float(z.imag)] for z in vec]
    return [float(x) for x in vec]


def estimate_stability_constant(
    family: "OperatorFamily",
    n: int = 5,
    sample_count: int = 10_000,
    seed: int = 0,
    metric: Callable[[Any, Any], float] | None = None,
    threads: int = 1,
) -> StabilityReport:
    """Monte-Carlo minimum of the stability ratio over m, m' uniform on the box and unit u, v."""
    if sample_count < 1:
        raise DomainError("sample_count must be >= 1")
    dist_fn = metric or family.metric

    def one(i: int) -> tuple[float, dict[str, Any]]:
        rng, m, m2 = _sample_pair(family, seed, i)
        A, Vm = _right_frame(family, m, n)
        A2, Vm2 = _right_frame(family, m2, n)
        u = _unit_complex(rng, n)
        v = _unit_complex(rng, n)
        r = _ratio(A, Vm, A2, Vm2, dist_fn(m, m2), u, v)
        return r, {"m": _fmt(m), "m_prime": _fmt(m2), "u": _fmt(u), "v": _fmt(v)}

    results = JobRunner(threads).map_indexed(f"stability-{family.name}", one, sample_count)
    ratios = [r for r, _ in results]
    best = int(np.argmin(ratios))
    logger.info("%s N=%d: min ratio %.6e over %d samples", family.name, n, ratios[best], sample_count)
    return StabilityReport(
        family=family.name,
        n=n,
        sample_count=sample_count,
        seed=seed,
        metric=family.metric_name if metric is None else getattr(metric, "__name__", "custom"),
        min_ratio=ratios[best],
        argmin_index=best,
        argmin=results[best][1],
        ratios=ratios,
    )


def stability_sweep(
    family: "OperatorFamily",
    n_values: Iterable[int] = range(1, 9),
    sample_count: int = 2_000,
    seed: int = 0,
    threads: int = 1,
) -> list[dict[str, Any]]:
    """C(N) over nested leading subspaces.

    E_{m,N} is contained in E_{m,N+1}, so a sample drawn at N is also a sample at every larger N;
    `min_ratio` is therefore the running minimum and `raw_min_ratio` the per-N minimum.
    """
    ns = sorted(set(int(x) for x in n_values))
    n_top = ns[-1]

    def one(i: int) -> list[float]:
        rng, m, m2 = _sample_pair(family, seed, i)
        A, Vm = _right_frame(family, m, n_top)
        A2, Vm2 = _right_frame(family, m2, n_top)
        dist = family.metric(m, m2)
        gu = rng.standard_normal(n_top) + 1j * rng.standard_normal(n_top)
        gv = rng.standard_normal(n_top) + 1j * rng.standard_normal(n_top)
        out = []
        for n in ns:
            u = np.zeros(n_top, dtype=complex)
            v = np.zeros(n_top, dtype=complex)
            u[:n] = gu[:n] / np.linalg.norm(gu[:n])
            v[:n] = gv[:n] / np.linalg.norm(gv[:n])
            out.append(_ratio(A, Vm, A2, Vm2, dist, u, v))
        return out

    table = np.array(JobRunner(threads).map_indexed(f"sweep-{family.name}", one, sample_count))
    raw = table.min(axis=0)
    running = np.minimum.accumulate(raw)
    return [{"n": n, "min_ratio": float(c), "raw_min_ratio": float(r)} for n, c, r in zip(ns, running, raw)]


def u2_margin(family: "OperatorFamily", m: Any, q: Any, n: int | None = None) -> float:
    """sigma_min / sigma_max of [dA/dq | A]; 0 when the block has more columns than rows.

    With n, both halves act on the top-n right singular vectors V_n of A_m,
    so the block is [dA/dq V_n | A V_n].
    """
    q = np.asarray(q, float)
    norm = float(np.linalg.norm(q))
    if norm == 0.0:
        raise DomainError("Direction q must be nonzero")
    q = q / norm
    A = family.matrix(m)
    D = family.derivative(m, q)
    if n is not None:
        if not 1 <= n <= min(A.shape):
            raise DimensionError(f"Subspace size {n} outside 1..{min(A.shape)}")
        V = svd(A).right[:, :n]
        D, A = D @ V, A @ V
    block = np.hstack([D, A])
    if block.shape[1] > block.shape[0]:
        return 0.0
    sigma = svd(block).sigma
    if sigma[0] == 0.0:
        return 0.0
    return float(sigma[-1] / sigma[0])


def u2_sweep(
    family: "OperatorFamily",
    per_axis: int = 5,
    q_angles: int = 8,
    threads: int = 1,
    n: int | None = None,
) -> tuple[float, list[dict[str, Any]]]:
    points = family.parameter_grid(per_axis)
    if family.dim != 2:
        raise DimensionError("u2_sweep samples directions on the unit circle; family must have 2 parameters")
    angles = 2.0 * math.pi * np.arange(q_angles) / q_angles
    jobs = [(m, ang) for m in points for ang in angles]

    def one(i: int) -> dict[str, Any]:
        m, ang = jobs[i]
        q = np.array([math.cos(ang), math.sin(ang)])
        return {"m": [float(x) for x in m], "q_angle": float(ang), "margin": u2_margin(family, m, q, n)}

    rows = JobRunner(threads).map_indexed(f"u2-{family.name}", one, len(jobs))
    worst = min(rows, key=lambda r: r["margin"])
    low = worst["margin"]
    logger.info(
        "%s: min U2 margin %.6e over %d points at m=%s q_angle=%.4f",
        family.name, low, len(rows), worst["m"], worst["q_angle"],
    )
    return low, rows


def report_to_text(report: StabilityReport, header: Sequence[str] = ()) -> str:
    lines = [f"# {h}" for h in header]
    data = report.model_dump(exclude={"ratios"})
    for key, value in data.items():
        lines.append(f"{key}={value}")
    return "\n".join(lines) + "\n"


def write_ratios_csv(report: StabilityReport, path: str, header: Sequence[str] = ()) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        for h in header:
            f.write(f"# {h}\n")
        writer = csv.writer(f)
        writer.writerow(["sample", "ratio"])
        for i, r in enumerate(report.ratios):
            writer.writerow([i, repr(float(r))])
