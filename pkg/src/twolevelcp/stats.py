"""Binomial estimates with Wilson score intervals."""
from __future__ import annotations

import math
from dataclasses import dataclass

from scipy.stats import norm


def wilson_interval(successes: int, total: int, level: float = 0.95) -> tuple[float, float]:
    if total <= 0:
        raise ValueError("total must be positive")
    z = norm.ppf(0.5 + level / 2)
    p = successes / total
    denom = 1 + z * z / total
    center = (p + z * z / (2 * total)) / denom
    half = z * math.sqrt(p * (1 - p) / total + z * z / (4 * total * total)) / denom
    return float(max(0.0, center - half)), float(min(1.0, center + half))


@dataclass(frozen=True)
class EstimateWithCI:
    point: float
    ci_low: float
    ci_high: float
    reps: int
    successes: int
    level: float = 0.95
    method: str = "wilson"

    @classmethod
    def from_counts(cls, successes: int, reps: int, level: float = 0.95) -> EstimateWithCI:
        lo, hi = wilson_interval(successes, reps, level)
        p = successes / reps
        return cls(p, min(lo, p), max(hi, p), reps, int(successes), level)

    def merge(self, other: EstimateWithCI) -> EstimateWithCI:
        if self.level != other.level:
            raise ValueError("cannot merge estimates at different confidence levels")
        return EstimateWithCI.from_counts(self.successes + other.successes, self.reps + other.reps, self.level)

    @property
    def half_width(self) -> float:
        return (self.ci_high - self.ci_low) / 2

    def overlaps(self, other: EstimateWithCI) -> bool:
        return self.ci_low <= other.ci_high and other.ci_low <= self.ci_high

    def to_dict(self) -> dict:
        return {
            "p": self.point,
            "ci": [self.ci_low, self.ci_high],
            "reps": self.reps,
            "successes": self.successes,
            "level": self.level,
        }
