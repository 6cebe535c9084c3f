"""Per-subinterval Hurst estimation from ratios of quadratic variations.

A series is split into ``m`` scale intervals, ordered by increasing scale
factor, and each into the same ``q`` subintervals.  ``SS[j, i]`` is the mean
squared consecutive difference inside cell ``(j, i)``;
``mu[j, i] = log(SS[j+1, i] / SS[j, i]) / (2 log lam)`` and the estimate for
subinterval ``i`` averages ``mu[:, i]`` over ``j``.  The baseline treats each
scale interval as a single cell.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import IndexOutOfData, NonContiguousGroup, RangeTooNarrow, TooFewPoints, ZeroVariation
from .lamperti import SampledPath
from .scale_grid import BOUNDARY_TOL, sample_grid

Cell = tuple[int, int]  # half-open range of positions in the series


@dataclass(frozen=True)
class ScalePartition:
    """Cells of a series: ``cells[j][i]`` is a ``(start, stop)`` position range.

    Rows are ordered by scale factor ``lam**j``.  Positions refer to the series
    the partition was built for (for resampled data, the resampled series).
    """

    lam: float
    cells: tuple[tuple[Cell, ...], ...]
    scale_endpoints: tuple[int, ...] = ()

    def __post_init__(self):
        cells = tuple(tuple((int(a), int(b)) for a, b in row) for row in self.cells)
        object.__setattr__(self, "cells", cells)
        if not cells:
            raise ValueError("partition has no scale intervals")
        q = len(cells[0])
        if any(len(row) != q for row in cells):
            raise ValueError("every scale interval needs the same number of subintervals")

    @property
    def m(self) -> int:
        return len(self.cells)

    @property
    def q(self) -> int:
        return len(self.cells[0])

    def collapsed(self) -> "ScalePartition":
        """One cell per scale interval."""
        return ScalePartition(
            self.lam, tuple(((row[0][0], row[-1][1]),) for row in self.cells), self.scale_endpoints
        )

    def merged(self, grouping: Sequence[Sequence[int]]) -> "ScalePartition":
        check_grouping(grouping, self.q)
        rows = []
        for row in self.cells:
            new = []
            for g in grouping:
                first, last = row[g[0] - 1], row[g[-1] - 1]
                new.append((first[0], last[1]))
            rows.append(tuple(new))
        return ScalePartition(self.lam, tuple(rows), self.scale_endpoints)

    def counts(self) -> np.ndarray:
        return np.array([[b - a for a, b in row] for row in self.cells])


def check_grouping(grouping: Sequence[Sequence[int]], q: int) -> None:
    flat = [i for g in grouping for i in g]
    if any(len(g) == 0 for g in grouping):
        raise NonContiguousGroup("empty group")
    if flat != list(range(1, q + 1)):
        raise NonContiguousGroup(f"grouping {list(map(list, grouping))} is not an ordered partition of 1..{q}")


@dataclass
class QuadraticVariationTable:
    ss: np.ndarray  # (m, q)
    counts: np.ndarray  # (m, q)


@dataclass
class HurstEstimate:
    per_sub: np.ndarray
    per_pair: np.ndarray
    baseline: float | None = None
    lambda_used: float = float("nan")
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "per_sub": [float(x) for x in self.per_sub],
            "per_pair": [[float(x) for x in row] for row in self.per_pair],
            "baseline": None if self.baseline is None else float(self.baseline),
            "lambda_used": float(self.lambda_used),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, d: dict) -> "HurstEstimate":
        return cls(
            np.array(d["per_sub"], dtype=float),
            np.array(d["per_pair"], dtype=float).reshape(-1, len(d["per_sub"])),
            d.get("baseline"),
            float(d["lambda_used"]),
        )

    def report(self) -> str:
        q = self.per_sub.size
        head = "scale pair " + "".join(f"{'H_' + str(i + 1):>10}" for i in range(q))
        lines = [f"lambda = {self.lambda_used:g}", head]
        for j, row in enumerate(self.per_pair, start=1):
            lines.append(f"{j:>2} -> {j + 1:<4}" + "".join(f"{x:>10.4f}" for x in row))
        lines.append("mean      " + "".join(f"{x:>10.4f}" for x in self.per_sub))
        if self.baseline is not None:
            lines.append(f"baseline (whole scale intervals): {self.baseline:.4f}")
        return "\n".join(lines) + "\n"


def _values(series) -> np.ndarray:
    return series.values if isinstance(series, SampledPath) else np.asarray(series, dtype=float)


def quadratic_variations(series, part: ScalePartition) -> QuadraticVariationTable:
    x = _values(series)
    m, q = part.m, part.q
    ss = np.empty((m, q))
    counts = part.counts()
    for j, row in enumerate(part.cells):
        for i, (a, b) in enumerate(row):
            if b - a < 2:
                raise TooFewPoints(f"cell ({j + 1},{i + 1}) has {b - a} points, need 2")
            if a < 0 or b > x.size:
                raise IndexOutOfData(f"cell ({j + 1},{i + 1}) = [{a},{b}) outside series of length {x.size}")
            d = np.diff(x[a:b])
            ss[j, i] = np.dot(d, d) / (b - a - 1)
    return QuadraticVariationTable(ss, counts)


def hurst_vector(table: QuadraticVariationTable, lam: float) -> HurstEstimate:
    ss = table.ss
    m = ss.shape[0]
    if m < 2:
        raise ValueError("need at least two scale intervals")
    if not lam > 1:
        raise ValueError("lambda must be > 1")
    zero = np.argwhere(ss == 0)
    if zero.size:
        j, i = zero[0]
        raise ZeroVariation(int(j) + 1, int(i) + 1)
    per_pair = np.log(ss[1:] / ss[:-1]) / (2 * math.log(lam))
    return HurstEstimate(per_pair.mean(axis=0), per_pair, None, lam)


def baseline_hurst(series, part: ScalePartition) -> float:
    table = quadratic_variations(series, part.collapsed())
    return float(hurst_vector(table, part.lam).per_sub[0])


def estimate(series, part: ScalePartition) -> HurstEstimate:
    """Per-subinterval estimate with the whole-interval baseline filled in."""
    est = hurst_vector(quadratic_variations(series, part), part.lam)
    est.baseline = baseline_hurst(series, part)
    return est


def merge_groups(series, part: ScalePartition, grouping: Sequence[Sequence[int]]) -> HurstEstimate:
    return estimate(series, part.merged(grouping))


def suggest_grouping(per_sub: Sequence[float], eps: float = 0.05) -> list[list[int]]:
    """Advisory: greedily join adjacent subintervals whose estimates stay within ``eps`` of the group's first."""
    groups: list[list[int]] = []
    anchor = None
    for i, h in enumerate(per_sub, start=1):
        if groups and abs(h - anchor) <= eps:
            groups[-1].append(i)
        else:
            groups.append([i])
            anchor = h
    return groups


def resample_series(
    raw,
    b: Sequence[int],
    lam: float,
    offsets: Sequence[int],
    sub_bounds: Sequence[int] | None = None,
    direction: str = "forward",
    index_base: int = 0,
) -> tuple[SampledPath, ScalePartition]:
    """Geometric resampling of a raw series.

    Scale interval with mapping index ``j`` (scale factor ``lam**(j-1)``) takes
    the raw positions ``b_j + floor(lam**(j-1) * i)`` for each offset ``i``.
    With ``direction="forward"`` mapping index ``j`` uses ``b[j-1]``; with
    ``"backward"`` it uses ``b[m-j]``, i.e. the last start is the smallest scale.

    ``sub_bounds`` are offset endpoints ``e_0 < ... < e_q``; subinterval ``i``
    holds the offsets in ``[e_{i-1}, e_i)`` and the last one also ``e_q``.
    Positions in ``b`` count from ``index_base``.
    """
    x = _values(raw)
    offsets = list(offsets)
    if any(o < 0 for o in offsets) or any(o2 <= o1 for o1, o2 in zip(offsets, offsets[1:])):
        raise ValueError("offsets must be nonnegative and strictly increasing")
    if sub_bounds is None:
        sub_bounds = [offsets[0], offsets[-1]]
    sub_bounds = list(sub_bounds)
    if any(e2 <= e1 for e1, e2 in zip(sub_bounds, sub_bounds[1:])):
        raise ValueError("sub_bounds must be strictly increasing")
    if direction not in ("forward", "backward"):
        raise ValueError("direction must be 'forward' or 'backward'")
    m = len(b)
    rows = []  # (kept raw indices, subinterval ranges local to the row), by mapping index
    for j in range(1, m + 1):
        start = b[j - 1] if direction == "forward" else b[m - j]
        kept: list[tuple[int, int]] = []
        seen = set()
        for o in offsets:
            idx = sample_grid(start, lam, j, [o])[0] - index_base
            if idx in seen:
                continue
            if idx < 0 or idx >= x.size:
                raise IndexOutOfData(f"mapped index {idx + index_base} outside data of length {x.size}")
            seen.add(idx)
            kept.append((o, idx))
        local = []
        for i in range(1, len(sub_bounds)):
            lo, hi = sub_bounds[i - 1], sub_bounds[i]
            last = i == len(sub_bounds) - 1
            members = [k for k, (o, _) in enumerate(kept) if lo <= o < hi or (last and o == hi)]
            if not members:
                raise TooFewPoints(f"subinterval {i} of scale interval {j} is empty")
            local.append((members[0], members[-1] + 1))
        rows.append(([idx for _, idx in kept], local))
    # lay the series out chronologically; partition rows stay in scale order
    chrono = sorted(range(m), key=lambda r: rows[r][0][0])
    base = {}
    positions: list[int] = []
    for r in chrono:
        idx = rows[r][0]
        if positions and positions[-1] == idx[0]:
            # consecutive scale intervals may share their boundary sample
            base[r] = len(positions) - 1
            positions.extend(idx[1:])
        else:
            base[r] = len(positions)
            positions.extend(idx)
    pos = np.array(positions)
    if np.any(np.diff(pos) <= 0):
        raise ValueError("resampled scale intervals overlap")
    cells = tuple(tuple((base[r] + a, base[r] + c) for a, c in rows[r][1]) for r in range(m))
    series = SampledPath(pos.astype(float) + index_base, x[pos])
    return series, ScalePartition(lam, cells, tuple(int(s) for s in b))


def estimate_scale(
    series: SampledPath,
    candidate_range: tuple[float, float],
    n_candidates: int,
    q: int = 4,
    origin: float | None = None,
    flat_threshold: float = 0.05,
) -> tuple[float, np.ndarray, np.ndarray, bool]:
    """Heuristic grid search for the preferred scale.

    For each candidate ``lam`` the time axis from ``origin`` is cut into scale
    intervals ``(origin lam**(j-1), origin lam**j]`` with ``q`` equal-length
    subintervals, and the score is the mean over subintervals of the variance
    of ``mu[:, i]`` across scale pairs.  Candidates yielding fewer than three
    complete scale intervals or a cell with fewer than two points score inf.

    Returns ``(lam_hat, candidates, scores, no_preference)`` where
    ``no_preference`` flags a score curve whose spread is below ``flat_threshold``.
    """
    lo, hi = candidate_range
    if not lo > 1:
        raise ValueError("candidate range must start above 1")
    if not hi > lo or n_candidates < 2:
        raise RangeTooNarrow(f"need hi > lo and at least 2 candidates, got ({lo}, {hi}) x {n_candidates}")
    t = series.times
    x = series.values
    t0 = t[0] if origin is None else origin
    candidates = np.linspace(lo, hi, n_candidates)
    scores = np.full(n_candidates, np.inf)
    for c, lam in enumerate(candidates):
        part = _equal_ratio_partition(t, t0, lam, q)
        if part is None:
            continue
        try:
            est = hurst_vector(quadratic_variations(x, part), lam)
        except (ZeroVariation, TooFewPoints):
            continue
        scores[c] = float(np.mean(np.var(est.per_pair, axis=0, ddof=1)))
    finite = np.isfinite(scores)
    if not finite.any():
        raise RangeTooNarrow("no candidate produced at least three complete scale intervals")
    best = int(np.argmin(np.where(finite, scores, np.inf)))
    spread = float(scores[finite].max() - scores[finite].min())
    return float(candidates[best]), candidates, scores, spread < flat_threshold


def _equal_ratio_partition(t: np.ndarray, t0: float, lam: float, q: int) -> ScalePartition | None:
    m = int(math.floor(math.log(t[-1] / t0) / math.log(lam) + BOUNDARY_TOL))
    if m < 3:
        return None
    cells = []
    for j in range(m):
        edges = t0 * lam**j * (1.0 + (lam - 1.0) * np.arange(q + 1) / q)
        # right-closed cells; points within the tolerance band close the lower cell
        idx = np.searchsorted(t, edges * (1 + BOUNDARY_TOL), side="right")
        row = tuple((int(idx[i]), int(idx[i + 1])) for i in range(q))
        if any(b - a < 2 for a, b in row):
            return None
        cells.append(row)
    return ScalePartition(lam, tuple(cells))
