"""Synthetic data: exact Gaussian paths and piecewise-scaling study series.

Randomness is drawn in fixed-size blocks of paths; block ``b`` uses the
substream ``SeedSequence(seed, spawn_key=(b,))``.  Output therefore depends
only on ``(seed, n)``, never on how many workers produced it.
"""
from __future__ import annotations

import math
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .covariance import SubsidiaryModel, cov_matrix, process_mean
from .errors import InsufficientPaths, NotPSD
from .estimator import ScalePartition
from .lamperti import SampledPath

BLOCK = 4096
BINARY_MAGIC = b"DSI1"


def substream(seed: int, *key: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=key)))


def sampling_factor(S: np.ndarray) -> np.ndarray:
    """Matrix F with F @ F.T == S.

    Uses the Cholesky factor when it exists at zero jitter, otherwise a
    symmetric eigendecomposition with tiny negative eigenvalues clipped.
    """
    n = S.shape[0]
    if n == 0:
        return np.zeros((0, 0))
    try:
        return np.linalg.cholesky(S)
    except np.linalg.LinAlgError:
        pass
    w, V = np.linalg.eigh(S)
    floor = -1e-10 * max(w[-1], 0.0)
    if w[0] < floor:
        raise NotPSD(f"smallest eigenvalue {w[0]:.3g} below clipping floor {floor:.3g}")
    return V * np.sqrt(np.clip(w, 0.0, None))


def gaussian_rows(
    mean: np.ndarray, factor: np.ndarray, n: int, seed: int, workers: int = 1
) -> np.ndarray:
    d = mean.size
    out = np.empty((n, d))
    starts = range(0, n, BLOCK)

    def fill(start: int) -> None:
        stop = min(start + BLOCK, n)
        z = substream(seed, start // BLOCK).standard_normal((stop - start, d))
        out[start:stop] = mean + z @ factor.T

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            list(pool.map(fill, starts))
    else:
        for s in starts:
            fill(s)
    return out


def sample_exact_paths(
    model: SubsidiaryModel, grid: Sequence[float], n: int, seed: int, workers: int = 1
) -> np.ndarray:
    """``n`` independent Gaussian paths of the continuous DSI process on ``grid``."""
    grid = np.asarray(grid, dtype=float)
    if n == 0:
        return np.empty((0, grid.size))
    S, _ = cov_matrix(model, grid)
    mean = np.array([process_mean(model, t) for t in grid])
    return gaussian_rows(mean, sampling_factor(S), n, seed, workers)


def mc_covariance(paths: np.ndarray, grid: Sequence[float], t: float, u: float) -> tuple[float, float]:
    """Unbiased sample covariance of the columns at ``t`` and ``u`` and its standard error."""
    n = paths.shape[0]
    if n < 2:
        raise InsufficientPaths(f"need at least 2 paths, got {n}")
    grid = np.asarray(grid, dtype=float)
    a = _column(grid, t)
    b = _column(grid, u)
    x = paths[:, a] - paths[:, a].mean()
    y = paths[:, b] - paths[:, b].mean()
    prod = x * y
    est = prod.sum() / (n - 1)
    se = prod.std(ddof=1) / math.sqrt(n)
    return float(est), float(se)


def _column(grid: np.ndarray, t: float) -> int:
    idx = int(np.argmin(np.abs(grid - t)))
    if not math.isclose(grid[idx], t, rel_tol=1e-12, abs_tol=0.0):
        raise ValueError(f"t={t} is not a grid point")
    return idx


@dataclass(frozen=True)
class StudySpec:
    """Piecewise-scaling increment process.

    Inside subinterval ``i`` of scale interval ``j`` the increments are
    independent N(0, (lam**((j-1) H_i) * sigma_i)**2), so quadratic variations
    of matching subintervals grow by ``lam**(2 H_i)`` per scale interval.
    """

    H_vec: tuple[float, ...]
    sigma_vec: tuple[float, ...] | None = None
    lam: float = 2.0
    points_per_scale: int = 80
    n_scales: int = 4

    def __post_init__(self):
        object.__setattr__(self, "H_vec", tuple(float(h) for h in self.H_vec))
        if self.sigma_vec is None:
            object.__setattr__(self, "sigma_vec", (1.0,) * len(self.H_vec))
        else:
            object.__setattr__(self, "sigma_vec", tuple(float(s) for s in self.sigma_vec))
        problems = self.problems()
        if problems:
            raise ValueError("; ".join(problems))

    @property
    def q(self) -> int:
        return len(self.H_vec)

    def problems(self) -> list[str]:
        out = []
        q = len(self.H_vec)
        if q < 1:
            out.append("H_vec must not be empty")
        if len(self.sigma_vec) != q:
            out.append("sigma_vec must have the same length as H_vec")
        if any(not 0 < h <= 1.5 for h in self.H_vec):
            out.append("H_vec entries must lie in (0, 1.5]")
        if any(not s > 0 for s in self.sigma_vec):
            out.append("sigma_vec entries must be positive")
        if not self.lam > 1:
            out.append("lam must be > 1")
        if self.points_per_scale < 2 * max(q, 1):
            out.append("points_per_scale must be at least 2 * q")
        if self.n_scales < 2:
            out.append("n_scales must be at least 2")
        return out

    def counts(self) -> list[int]:
        """Points per subinterval; the remainder goes to the leading subintervals."""
        base, extra = divmod(self.points_per_scale, self.q)
        return [base + (1 if i < extra else 0) for i in range(self.q)]

    def times(self) -> np.ndarray:
        p = self.points_per_scale
        frac = np.arange(1, p + 1) / p
        return np.concatenate(
            [self.lam ** (j - 1) * (1.0 + (self.lam - 1.0) * frac) for j in range(1, self.n_scales + 1)]
        )

    def increment_sd(self) -> np.ndarray:
        sd = []
        lam = self.lam
        for j in range(1, self.n_scales + 1):
            for h, s, c in zip(self.H_vec, self.sigma_vec, self.counts()):
                sd.extend([math.exp((j - 1) * h * math.log(lam)) * s] * c)
        return np.array(sd)

    def partition(self) -> ScalePartition:
        counts = self.counts()
        p = self.points_per_scale
        cells = []
        for j in range(self.n_scales):
            start = j * p
            row = []
            for c in counts:
                row.append((start, start + c))
                start += c
            cells.append(tuple(row))
        return ScalePartition(self.lam, tuple(cells))


def gen_dsi_study_series(spec: StudySpec, seed: int | None = None, deterministic: bool = False) -> SampledPath:
    """One study path; ``deterministic`` swaps Gaussian draws for +/- sd alternating."""
    sd = spec.increment_sd()
    if deterministic:
        z = np.where(np.arange(sd.size) % 2 == 0, 1.0, -1.0)
    else:
        if seed is None:
            raise ValueError("seed is required for random study series")
        z = substream(seed, 0).standard_normal(sd.size)
    return SampledPath(spec.times(), np.cumsum(sd * z), "dsi", spec.lam)


def gen_study_batch(spec: StudySpec, n: int, seed: int, workers: int = 1) -> np.ndarray:
    """``n`` study paths as rows; row ``r`` draws from substream ``(seed, r)``.

    Row 0 equals ``gen_dsi_study_series(spec, seed).values``.
    """
    sd = spec.increment_sd()
    out = np.empty((n, sd.size))

    def fill(r: int) -> None:
        out[r] = np.cumsum(sd * substream(seed, r).standard_normal(sd.size))

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            list(pool.map(fill, range(n)))
    else:
        for r in range(n):
            fill(r)
    return out


def write_paths_csv(paths: np.ndarray, grid: Sequence[float], path: str | Path) -> None:
    with open(path, "w") as fh:
        fh.write(",".join(f"{t:.17g}" for t in grid) + "\n")
        for row in paths:
            fh.write(",".join(f"{v:.17g}" for v in row) + "\n")


def read_paths_csv(path: str | Path) -> tuple[np.ndarray, np.ndarray]:
    with open(path) as fh:
        grid = np.array([float(x) for x in fh.readline().strip().split(",")])
        rows = [[float(x) for x in line.strip().split(",")] for line in fh if line.strip()]
    return np.array(rows).reshape(len(rows), grid.size), grid


def write_paths_binary(paths: np.ndarray, path: str | Path) -> None:
    """Magic ``DSI1``, two little-endian uint64 dimensions, then float64 data row-major."""
    paths = np.ascontiguousarray(paths, dtype="<f8")
    rows, cols = paths.shape
    with open(path, "wb") as fh:
        fh.write(BINARY_MAGIC)
        fh.write(struct.pack("<QQ", rows, cols))
        fh.write(paths.tobytes())


def read_paths_binary(path: str | Path) -> np.ndarray:
    data = Path(path).read_bytes()
    if data[:4] != BINARY_MAGIC:
        raise ValueError("not a DSI1 block")
    rows, cols = struct.unpack("<QQ", data[4:20])
    return np.frombuffer(data[20:], dtype="<f8", count=rows * cols).reshape(rows, cols).copy()
