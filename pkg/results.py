"""
Result records shared by the exact and Monte Carlo engines.
"""
import math
from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple

from scipy import stats


def z_value(level: float) -> float:
    """Two-sided normal quantile for a confidence level in (0, 1)."""
    return float(stats.norm.ppf(0.5 + level / 2.0))


@dataclass(frozen=True)
class EstimatorResult:
    """Point estimate with its standard error and path count."""
    estimate: float
    std_error: float
    paths: int
    level: float = 0.99
    # ratio estimators only: covariance of (1{T>n}, (S_n - g_n) 1{T>n})
    covariance: Optional[float] = None

    @property
    def half_width(self) -> float:
        return z_value(self.level) * self.std_error

    @property
    def ci(self) -> Tuple[float, float]:
        return (self.estimate - self.half_width, self.estimate + self.half_width)

    def covers(self, value: float) -> bool:
        lo, hi = self.ci
        return lo <= value <= hi


@dataclass(frozen=True)
class ExitResult:
    """
    Survival curve P(T_n > m), m = 1..n, and the boundary functional E_n.
    Exact results carry e_n_alt (the crossing-side form); Monte Carlo
    results carry standard errors and a path count instead.
    """
    n: int
    survival: Tuple[float, ...]
    e_n: float
    e_n_alt: Optional[float] = None
    engine: str = "exact"
    survival_se: Optional[Dict[int, float]] = None
    e_n_se: Optional[float] = None
    paths: Optional[int] = None
    extras: Dict[str, float] = field(default_factory=dict)

    def survival_at(self, m: int) -> float:
        if not 1 <= m <= self.n:
            raise IndexError(f"checkpoint m={m} outside 1..{self.n}")
        return self.survival[m - 1]

    @property
    def p_survive(self) -> float:
        """P(T_n > n)."""
        return self.survival[-1] if self.survival else math.nan
