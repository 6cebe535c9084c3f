"""Quasi-Lamperti transform between periodically correlated and DSI paths.

Forward: ``X(t) = t**H * Y(log_alpha t)``; inverse: ``Y(t) = alpha**(-t H) X(alpha**t)``.
A DSI process with scale ``lam`` maps to a PC process with period
``log_alpha(lam)``.  Both are applied pointwise on the sample grid.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import NonPositiveTime


@dataclass(frozen=True)
class SampledPath:
    times: np.ndarray
    values: np.ndarray
    domain: str | None = None  # "pc" or "dsi"
    period: float | None = None  # PC period T, or DSI scale lambda

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if times.shape != values.shape or times.ndim != 1:
            raise ValueError("times and values must be 1-d arrays of equal length")
        if np.any(np.diff(times) <= 0):
            raise ValueError("times must be strictly increasing")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)

    def __len__(self) -> int:
        return self.times.size

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["time", "value"])
            for t, v in zip(self.times, self.values):
                w.writerow([f"{t:.17g}", f"{v:.17g}"])

    @classmethod
    def from_csv(cls, path: str | Path, domain: str | None = None) -> "SampledPath":
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        return cls(
            np.array([float(r["time"]) for r in rows]),
            np.array([float(r["value"]) for r in rows]),
            domain,
        )


def default_alpha(lam: float, q: int) -> float:
    """Base for which one PC period spans the q subintervals of a scale interval."""
    return lam ** (1.0 / q)


def lamperti_forward(path: SampledPath, H: float, alpha: float) -> SampledPath:
    if not alpha > 1:
        raise ValueError("alpha must be > 1")
    log_a = math.log(alpha)
    tau = path.times
    period = None if path.period is None else alpha**path.period
    return SampledPath(np.exp(tau * log_a), np.exp(H * tau * log_a) * path.values, "dsi", period)


def lamperti_inverse(path: SampledPath, H: float, alpha: float) -> SampledPath:
    if not alpha > 1:
        raise ValueError("alpha must be > 1")
    if np.any(path.times <= 0):
        raise NonPositiveTime("inverse Lamperti transform needs positive times")
    log_a = math.log(alpha)
    log_t = np.log(path.times)
    period = None if path.period is None else math.log(path.period) / log_a
    return SampledPath(log_t / log_a, np.exp(-H * log_t) * path.values, "pc", period)
