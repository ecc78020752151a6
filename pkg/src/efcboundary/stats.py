"""Monte Carlo interval estimates."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy import stats

__all__ = ["MCEstimate", "wilson_interval", "proportion", "mean_estimate"]

Z95 = 1.959963984540054


@dataclass(frozen=True)
class MCEstimate:
    """Point estimate with a 95% interval."""

    name: str
    point: float
    ci_low: float
    ci_high: float
    replicas: int
    seed_root: int = 0
    kind: str = "proportion"

    def __post_init__(self):
        if self.replicas < 1:
            raise ValueError("replicas must be >= 1")
        if not (self.ci_low <= self.point <= self.ci_high) and not math.isnan(self.point):
            raise ValueError("interval must contain the point estimate")

    @property
    def sigma(self) -> float:
        """Standard error implied by the interval half-width."""
        return (self.ci_high - self.ci_low) / (2.0 * Z95)

    def separated_from(self, other: "MCEstimate") -> bool:
        return self.ci_low > other.ci_high or other.ci_low > self.ci_high

    def to_dict(self) -> dict:
        return asdict(self)


def wilson_interval(successes: int, n: int, z: float = Z95) -> tuple[float, float]:
    if n <= 0:
        raise ValueError("n must be positive")
    p = successes / n
    den = 1.0 + z * z / n
    centre = (p + z * z / (2 * n)) / den
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / den
    return max(0.0, centre - half), min(1.0, centre + half)


def proportion(name: str, flags, seed_root: int = 0) -> MCEstimate:
    flags = np.asarray(flags, dtype=bool)
    k, n = int(flags.sum()), int(flags.size)
    # a single replica carries no spread information
    lo, hi = wilson_interval(k, n) if n > 1 else (0.0, 1.0)
    p = k / n
    return MCEstimate(name, p, min(lo, p), max(hi, p), n, seed_root, "proportion")


def mean_estimate(name: str, values, seed_root: int = 0) -> MCEstimate:
    x = np.asarray(values, dtype=float)
    n = x.size
    m = float(np.mean(x))
    if n < 2:
        return MCEstimate(name, m, -math.inf, math.inf, n, seed_root, "mean")
    half = stats.t.ppf(0.975, n - 1) * float(np.std(x, ddof=1)) / math.sqrt(n)
    return MCEstimate(name, m, m - half, m + half, n, seed_root, "mean")
