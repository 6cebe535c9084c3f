"""Geometric partition of [1, lambda^m] into scale intervals and subintervals.

Scale interval ``j`` (1-based) is ``(lam**(j-1), lam**j]``.  It is split by the
ratios ``1 = s_0 < s_1 < ... < s_q = lam`` into ``q`` subintervals
``(lam**(j-1) * s_{i-1}, lam**(j-1) * s_i]``.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Sequence

from .errors import OutOfRange

# Relative band around boundaries; points inside it belong to the lower cell.
BOUNDARY_TOL = 1e-9


@dataclass(frozen=True)
class SamplingScheme:
    lam: float
    boundaries: tuple[float, ...]
    n_scales: int

    def __post_init__(self):
        object.__setattr__(self, "boundaries", tuple(float(b) for b in self.boundaries))
        problems = scheme_problems(self.lam, self.boundaries, self.n_scales)
        if problems:
            raise ValueError("; ".join(problems))

    @property
    def q(self) -> int:
        return len(self.boundaries) - 1

    @property
    def t_max(self) -> float:
        return self.lam ** self.n_scales

    def scale_power(self, j: int) -> float:
        """lam**(j-1)."""
        return self.lam ** (j - 1)

    def cell_length(self, j: int, i: int) -> float:
        """Length of subinterval (j, i)."""
        return self.scale_power(j) * (self.boundaries[i] - self.boundaries[i - 1])

    def cell_bounds(self, j: int, i: int) -> tuple[float, float]:
        p = self.scale_power(j)
        return p * self.boundaries[i - 1], p * self.boundaries[i]

    def right_endpoint(self, j: int, i: int) -> float:
        return self.scale_power(j) * self.boundaries[i]

    def to_dict(self) -> dict:
        return {"lambda": self.lam, "boundaries": list(self.boundaries), "n_scales": self.n_scales}

    @classmethod
    def from_dict(cls, d: dict) -> "SamplingScheme":
        return cls(float(d["lambda"]), tuple(d["boundaries"]), int(d["n_scales"]))

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "SamplingScheme":
        return cls.from_dict(json.loads(text))


def scheme_problems(lam, boundaries: Sequence[float], n_scales) -> list[str]:
    """Every violated invariant of a sampling scheme, empty when valid."""
    problems = []
    if not lam > 1:
        problems.append(f"lambda must be > 1, got {lam}")
    if len(boundaries) < 2:
        problems.append("boundaries need at least two entries (s_0 and s_q)")
    else:
        if boundaries[0] != 1.0:
            problems.append(f"boundaries[0] must be 1, got {boundaries[0]}")
        if boundaries[-1] != lam:
            problems.append(f"boundaries[-1] must equal lambda ({lam}), got {boundaries[-1]}")
        if any(b <= a for a, b in zip(boundaries, boundaries[1:])):
            problems.append("boundaries must be strictly increasing")
    if not (isinstance(n_scales, int) and n_scales >= 1):
        problems.append(f"n_scales must be a positive integer, got {n_scales!r}")
    return problems


def uniform_scheme(lam: float, q: int, n_scales: int) -> SamplingScheme:
    """Scheme with q equally long subintervals per scale interval."""
    inner = [1.0 + (lam - 1.0) * k / q for k in range(1, q)]
    return SamplingScheme(lam, (1.0, *inner, lam), n_scales)


@dataclass(frozen=True)
class GridLocation:
    j: int
    i: int
    s_star: float


def locate(t: float, scheme: SamplingScheme) -> GridLocation:
    """Find the subinterval containing ``t`` (left-open, right-closed)."""
    lam = scheme.lam
    if not (t > 1.0 and t <= scheme.t_max * (1 + BOUNDARY_TOL)):
        raise OutOfRange(f"t={t} outside (1, {scheme.t_max}]")
    j = max(1, math.ceil(math.log(t) / math.log(lam)))
    # boundary points close the lower scale interval
    if j > 1 and t <= scheme.scale_power(j) * (1 + BOUNDARY_TOL):
        j -= 1
    while t > scheme.scale_power(j + 1) * (1 + BOUNDARY_TOL):
        j += 1
    if j > scheme.n_scales:
        raise OutOfRange(f"t={t} outside (1, {scheme.t_max}]")
    s_star = t / scheme.scale_power(j)
    bnd = scheme.boundaries
    for i in range(1, len(bnd)):
        if s_star <= bnd[i] * (1 + BOUNDARY_TOL):
            if abs(s_star - bnd[i]) <= bnd[i] * BOUNDARY_TOL:
                s_star = bnd[i]
            return GridLocation(j, i, s_star)
    return GridLocation(j, scheme.q, bnd[-1])


def interp_coeff(loc: GridLocation, scheme: SamplingScheme) -> tuple[float, float]:
    """Fraction ``a`` of the subinterval covered up to the location, and ``1 - a``."""
    lo = scheme.boundaries[loc.i - 1]
    hi = scheme.boundaries[loc.i]
    a = (loc.s_star - lo) / (hi - lo)
    return a, 1.0 - a


def sample_grid(b_start: int, lam: float, j: int, offsets: Sequence[int]) -> list[int]:
    """Indices ``b_start + floor(lam**(j-1) * i)`` for each offset, duplicates dropped."""
    factor = lam ** (j - 1)
    out: list[int] = []
    seen = set()
    for i in offsets:
        # guard against x.9999999 from a product that is an integer in exact arithmetic
        idx = b_start + math.floor(factor * i + 1e-9)
        if idx not in seen:
            seen.add(idx)
            out.append(idx)
    return out
