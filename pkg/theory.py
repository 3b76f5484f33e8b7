"""
Predictions checked against the engines: the sqrt(2/pi) E_n asymptotic,
the explicit tail bound, the parameterized two-sided bounds, the
Psi(a)/a regime map and the limit constants of the weighted arrays.
"""
import math
import logging
from dataclasses import dataclass
from typing import Callable, Dict, List, Sequence, Tuple

import numpy as np
from scipy import integrate, stats

from errors import UninformativeLimitError
from increments import Psi, SQRT_2_OVER_PI
from row_model import ArrayDiagnostics

logger = logging.getLogger(__name__)

TAIL_BOUND_FACTOR = 4.0
TAIL_BOUND_RHO_MULTIPLE = 24.0
UPPER_BOUND_RHO_LIMIT = 1.0 / 24.0


@dataclass(frozen=True)
class BoundReport:
    m: int
    e_n: float
    rho: float
    B_m: float
    main_prediction: float
    tail_bound: float
    tail_bound_applicable: bool
    lower_bound: float
    upper_bound: float
    upper_bound_valid: bool
    c1: float
    c2: float


def main_asymptotic(e_n: float) -> float:
    """sqrt(2/pi) * E_n, the leading-order value of P(T_n > n)."""
    if e_n < 0.0:
        raise ValueError(f"E_n must be non-negative, got {e_n}")
    return SQRT_2_OVER_PI * e_n


def tail_bound(e_n: float, B_m: float, rho: float) -> Tuple[float, bool]:
    """P(T_n > m) <= 4 E_n / B_m, guaranteed when B_m >= 24 rho."""
    if B_m <= 0.0:
        raise ValueError(f"B_m must be positive, got {B_m}")
    return TAIL_BOUND_FACTOR * e_n / B_m, B_m >= TAIL_BOUND_RHO_MULTIPLE * rho


def theorem_bounds(e_n: float, rho: float, c1: float = 1.0, c2: float = 1.0) -> Tuple[float, float, bool]:
    """
    Lower and upper bounds sqrt(2/pi) E_n (1 -/+ C rho^{2/3}). C1, C2 are
    unspecified absolute constants, so they are taken as parameters. The
    upper bound is only claimed for rho <= 1/24.
    """
    main = main_asymptotic(e_n)
    factor = rho ** (2.0 / 3.0)
    return main * (1.0 - c1 * factor), main * (1.0 + c2 * factor), rho <= UPPER_BOUND_RHO_LIMIT


def bound_report(e_n: float, diag: ArrayDiagnostics, m: int, c1: float = 1.0, c2: float = 1.0) -> BoundReport:
    B_m = diag.B_at(m)
    bound, applicable = tail_bound(e_n, B_m, diag.rho)
    lower, upper, valid = theorem_bounds(e_n, diag.rho, c1, c2)
    return BoundReport(
        m=m, e_n=e_n, rho=diag.rho, B_m=B_m,
        main_prediction=main_asymptotic(e_n),
        tail_bound=bound, tail_bound_applicable=applicable,
        lower_bound=lower, upper_bound=upper, upper_bound_valid=valid,
        c1=c1, c2=c2,
    )


def regime_ratio(a: float) -> float:
    """Limit of P(T_n > n) / E_n when r_n -> a: Psi(a)/a, sqrt(2/pi) at a = 0."""
    if a < 0.0:
        raise ValueError(f"a must be non-negative, got {a}")
    if a == 0.0:
        return SQRT_2_OVER_PI
    return Psi(a) / a


def ar_sigma(gamma: float, n: int) -> float:
    """
    sigma_n(gamma) = ((gamma^{-2n} - 1) / (1 - gamma^2))^{1/2}, evaluated
    through log1p/expm1 so gamma close to one keeps full precision.
    """
    if not 0.0 < gamma < 1.0:
        raise ValueError(f"gamma must lie in (0, 1), got {gamma}")
    if n < 1:
        raise ValueError("n must be positive")
    log_gamma = math.log1p(gamma - 1.0)
    numerator = math.expm1(-2.0 * n * log_gamma)
    denominator = -math.expm1(2.0 * log_gamma)
    return math.sqrt(numerator / denominator)


def gaposhkin_sigma(f: Callable[[float], float], n: int, ex2: float) -> Tuple[float, float]:
    """
    (sigma_n(f), sigma(f)) with sigma_n^2 = (EX^2 / n) sum_j f^2(j/n) and its
    Riemann limit sigma^2 = EX^2 int_0^1 f^2(t) dt.
    """
    if ex2 <= 0.0:
        raise ValueError("EX^2 must be positive")
    grid = np.arange(1, n + 1) / n
    values = np.array([f(t) for t in grid], dtype=float)
    if np.any(values < 0.0):
        raise ValueError("f must be non-negative")
    sigma_n_sq = ex2 * math.fsum((values * values).tolist()) / n
    integral, _ = integrate.quad(lambda t: f(t) ** 2, 0.0, 1.0, limit=200)
    if sigma_n_sq <= 0.0 or integral <= 0.0:
        raise ValueError("f is degenerate (identically zero)")
    return math.sqrt(sigma_n_sq), math.sqrt(ex2 * integral)


def predicted_limit(kind: str, params: Dict, overshoot: float) -> float:
    """
    Right-hand constant of the weighted-array limits, given the overshoot
    E[-S_tau] of the limit walk:
      weighted / scaled_iid: sqrt(2/pi) E[-U_tau]
      gaposhkin:             sqrt(2/pi) f(0)/sigma(f) E[-S_tau]
      ar1:                   sqrt(2/(pi EX^2)) E[-S_tau]
    """
    if overshoot < 0.0:
        raise ValueError(f"overshoot must be non-negative, got {overshoot}")
    if kind in ("weighted", "scaled_iid"):
        return SQRT_2_OVER_PI * overshoot
    if kind == "gaposhkin":
        f0 = float(params["f0"])
        if f0 == 0.0:
            raise UninformativeLimitError("f(0) = 0: the limit is zero and does not give the decay rate")
        return SQRT_2_OVER_PI * f0 / float(params["sigma_f"]) * overshoot
    if kind == "ar1":
        return math.sqrt(2.0 / (math.pi * float(params["ex2"]))) * overshoot
    raise ValueError(f"No limit formula for scenario kind '{kind}'")


@dataclass(frozen=True)
class RateFit:
    slope: float
    intercept: float
    points_used: int
    excluded: Tuple[Tuple[float, float], ...]


def rate_fit(points: Sequence[Tuple[float, float]]) -> RateFit:
    """
    Least-squares slope of log|ratio - 1| against log rho. Points with
    non-positive deviation (exact agreement) are reported, not fitted.
    """
    usable: List[Tuple[float, float]] = [(r, d) for r, d in points if d > 0.0 and r > 0.0]
    excluded = tuple((r, d) for r, d in points if not (d > 0.0 and r > 0.0))
    if excluded:
        logger.info("rate_fit: %d point(s) with exact agreement left out", len(excluded))
    if len(usable) < 4:
        raise ValueError(f"rate_fit needs at least 4 points with positive deviation, got {len(usable)}")
    log_rho = np.log([r for r, _ in usable])
    log_dev = np.log([d for _, d in usable])
    fit = stats.linregress(log_rho, log_dev)
    return RateFit(float(fit.slope), float(fit.intercept), len(usable), excluded)
