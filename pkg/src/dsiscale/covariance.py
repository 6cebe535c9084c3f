"""Moments of the continuous DSI process built from a discrete subsidiary sequence.

The subsidiary sequence has one node per subinterval, ``X[j, i]`` for scale
interval ``j`` and subinterval ``i``, with
``cov(X[j, i], X[k, l]) = lam**((j + k - 2) H) * G[i, l]`` and
``E X[j, i] = lam**((j - 1) H) * mu[i]``.  Inside each subinterval a random
measure spreads the node value over time; its within-cell covariance blends a
product kernel (weight ``beta``) with an overlap kernel (weight ``1 - beta``).
The continuous process at ``t`` in cell ``(j, i)`` is
``(1 - a) * X[previous node] + M_i((left end, t])`` with ``a`` the fraction of
the cell elapsed at ``t``.

Node ``(j, 0)`` means the last node of the previous scale interval, and node
``(0, q)`` is read as ``lam**-H * X[1, q]`` so the first cell has a predecessor.
"""
from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import NotPSD
from .scale_grid import SamplingScheme, interp_coeff, locate

JITTER_LADDER = (0.0, 1e-12, 1e-10)


@dataclass(frozen=True)
class SubsidiaryModel:
    scheme: SamplingScheme
    H: float
    beta: float
    G: np.ndarray
    mu: np.ndarray

    def __post_init__(self):
        G = np.array(self.G, dtype=float)
        mu = np.array(self.mu, dtype=float)
        problems = model_problems(self.scheme.q, self.H, self.beta, G, mu)
        if problems:
            raise ValueError("; ".join(problems))
        G.setflags(write=False)
        mu.setflags(write=False)
        object.__setattr__(self, "G", G)
        object.__setattr__(self, "mu", mu)

    @property
    def q(self) -> int:
        return self.scheme.q

    def scale(self, power: float) -> float:
        """lam**(power * H)."""
        return math.exp(power * self.H * math.log(self.scheme.lam))

    def to_dict(self) -> dict:
        d = self.scheme.to_dict()
        d.update(H=self.H, beta=self.beta, G=self.G.ravel().tolist(), mu=self.mu.tolist())
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SubsidiaryModel":
        scheme = SamplingScheme.from_dict(d)
        q = scheme.q
        G = np.asarray(d["G"], dtype=float)
        if G.ndim == 1:
            G = G.reshape(q, q)
        return cls(scheme, float(d["H"]), float(d["beta"]), G, np.asarray(d["mu"], dtype=float))

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "SubsidiaryModel":
        return cls.from_dict(json.loads(text))


def model_problems(q: int, H, beta, G: np.ndarray, mu: np.ndarray) -> list[str]:
    problems = []
    if not H > 0:
        problems.append(f"H must be > 0, got {H}")
    if not 0.0 <= beta <= 1.0:
        problems.append(f"beta must lie in [0, 1], got {beta}")
    if G.shape != (q, q):
        problems.append(f"G must be {q}x{q}, got shape {G.shape}")
    else:
        if not np.array_equal(G, G.T):
            problems.append("G must be symmetric")
        if np.any(np.diag(G) <= 0):
            problems.append("G diagonal must be strictly positive")
        elif np.array_equal(G, G.T):
            w = np.linalg.eigvalsh(G)
            if w[0] < -1e-12 * max(w[-1], 0.0):
                problems.append(f"G must be positive semidefinite (smallest eigenvalue {w[0]:.3g})")
    if mu.shape != (q,):
        problems.append(f"mu must have length {q}, got shape {mu.shape}")
    return problems


def _canonical(model: SubsidiaryModel, j: int, i: int) -> tuple[int, int]:
    if i == 0:
        return j - 1, model.q
    return j, i


def sigma_discrete(model: SubsidiaryModel, j: int, i: int, k: int, l: int) -> float:
    """Covariance of subsidiary nodes (j, i) and (k, l)."""
    j, i = _canonical(model, j, i)
    k, l = _canonical(model, k, l)
    q = model.q
    if not (1 <= i <= q and 1 <= l <= q):
        raise IndexError(f"subinterval index out of range 1..{q}: i={i}, l={l}")
    if j < 0 or k < 0:
        raise IndexError(f"scale index below the first extension node: j={j}, k={k}")
    return model.scale(j + k - 2) * model.G[i - 1, l - 1]


def node_mean(model: SubsidiaryModel, j: int, i: int) -> float:
    j, i = _canonical(model, j, i)
    return model.scale(j - 1) * model.mu[i - 1]


@dataclass(frozen=True)
class IntervalSlice:
    """The set (lo, hi] inside subinterval (j, i)."""

    j: int
    i: int
    lo: float
    hi: float

    @property
    def length(self) -> float:
        return max(self.hi - self.lo, 0.0)


def check_slice(model: SubsidiaryModel, A: IntervalSlice) -> None:
    left, right = model.scheme.cell_bounds(A.j, A.i)
    tol = 1e-12 * right
    if not (left - tol <= A.lo <= A.hi <= right + tol):
        raise ValueError(f"slice ({A.lo}, {A.hi}] not inside cell ({left}, {right}]")


def measure_mean(model: SubsidiaryModel, A: IntervalSlice) -> float:
    check_slice(model, A)
    if A.length == 0:
        return 0.0
    m = model.scheme.cell_length(A.j, A.i)
    return A.length / m * node_mean(model, A.j, A.i)


def measure_cov(model: SubsidiaryModel, A: IntervalSlice, B: IntervalSlice) -> float:
    check_slice(model, A)
    check_slice(model, B)
    if A.length == 0 or B.length == 0:
        return 0.0
    sig = sigma_discrete(model, A.j, A.i, B.j, B.i)
    m_a = model.scheme.cell_length(A.j, A.i)
    if (A.j, A.i) == (B.j, B.i):
        overlap = max(0.0, min(A.hi, B.hi) - max(A.lo, B.lo))
        beta = model.beta
        return (beta * A.length * B.length + (1 - beta) * m_a * overlap) / m_a**2 * sig
    m_b = model.scheme.cell_length(B.j, B.i)
    return A.length * B.length / (m_a * m_b) * sig


def _coeffs(model: SubsidiaryModel, t: float):
    loc = locate(t, model.scheme)
    a, a_bar = interp_coeff(loc, model.scheme)
    return loc.j, loc.i, a, a_bar


def partial_cov(model: SubsidiaryModel, t: float, u: float) -> float:
    """Covariance of the partial sums M_i((cell start, t]) and M_l((cell start, u])."""
    j, i, a_t, _ = _coeffs(model, t)
    k, l, a_u, _ = _coeffs(model, u)
    if (j, i) == (k, l):
        lo, hi = min(a_t, a_u), max(a_t, a_u)
        return (model.beta * lo * hi + (1 - model.beta) * lo) * sigma_discrete(model, j, i, j, i)
    return a_t * a_u * sigma_discrete(model, j, i, k, l)


def cross_cov_node_partial(model: SubsidiaryModel, node_j: int, node_i: int, u: float) -> float:
    """Covariance between subsidiary node (node_j, node_i) and the partial sum at u."""
    k, l, a_u, _ = _coeffs(model, u)
    return a_u * sigma_discrete(model, node_j, node_i, k, l)


def process_mean(model: SubsidiaryModel, t: float) -> float:
    j, i, a, a_bar = _coeffs(model, t)
    return a_bar * node_mean(model, j, i - 1) + a * node_mean(model, j, i)


def process_cov(model: SubsidiaryModel, t: float, u: float) -> float:
    if u < t:
        t, u = u, t
    j, i, a_t, ab_t = _coeffs(model, t)
    k, l, a_u, ab_u = _coeffs(model, u)
    s = lambda j1, i1, k1, l1: sigma_discrete(model, j1, i1, k1, l1)  # noqa: E731
    if (j, i) == (k, l):
        weight = model.beta * a_t * a_u + (1 - model.beta) * a_t
        return (
            ab_t * (ab_u * s(j, i - 1, j, i - 1) + a_u * s(j, i - 1, j, i))
            + a_t * ab_u * s(j, i, j, i - 1)
            + weight * s(j, i, j, i)
        )
    return ab_t * (ab_u * s(j, i - 1, k, l - 1) + a_u * s(j, i - 1, k, l)) + a_t * (
        ab_u * s(j, i, k, l - 1) + a_u * s(j, i, k, l)
    )


@dataclass
class PSDReport:
    min_eigenvalue: float
    factorized: bool
    jitter: float
    cholesky: np.ndarray | None = field(default=None, repr=False)


def cov_matrix(
    model: SubsidiaryModel, grid: Sequence[float], workers: int = 1
) -> tuple[np.ndarray, PSDReport]:
    """Covariance matrix on ``grid`` plus a factorization report.

    Raises NotPSD when Cholesky fails at every jitter level of the ladder.
    """
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or np.any(np.diff(grid) <= 0):
        raise ValueError("grid must be a strictly increasing 1-d sequence")
    n = grid.size

    def row(a: int) -> list[float]:
        return [process_cov(model, grid[a], grid[b]) for b in range(a, n)]

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            rows = list(pool.map(row, range(n)))
    else:
        rows = [row(a) for a in range(n)]
    S = np.empty((n, n))
    for a, vals in enumerate(rows):
        S[a, a:] = vals
        S[a:, a] = vals
    min_eig = float(np.linalg.eigvalsh(S)[0]) if n else 0.0
    scale = np.trace(S) / n if n else 0.0
    for eps in JITTER_LADDER:
        try:
            L = np.linalg.cholesky(S + eps * scale * np.eye(n))
        except np.linalg.LinAlgError:
            continue
        return S, PSDReport(min_eig, True, eps * scale, L)
    raise NotPSD(f"covariance matrix is not positive semidefinite (smallest eigenvalue {min_eig:.3g})")


def dsi_defect(model: SubsidiaryModel, t: float, u: float, n: int = 1) -> tuple[float, float]:
    """Relative departures from wide-sense DSI at (t, u) under dilation by lam**n.

    Returns (covariance defect, mean defect); both are zero for an exactly
    scale-invariant process.
    """
    f = model.scheme.lam**n
    c0 = process_cov(model, t, u)
    c1 = process_cov(model, f * t, f * u)
    m0 = process_mean(model, t)
    m1 = process_mean(model, f * t)

    def rel(x, y):
        d = max(abs(x), abs(y))
        return 0.0 if d == 0 else abs(x - y) / d

    return rel(c1, model.scale(2 * n) * c0), rel(m1, model.scale(n) * m0)
