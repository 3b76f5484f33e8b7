"""
Invariant suites behind `main.py verify`: reflection and martingale
identities of the simple walk, the two forms of E_n, the explicit tail
bound and per-step mass conservation of the exact sweep.
"""
import math
import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from errors import ModelError
from exact_engine import SSRW_ATOMS, LatticeDP, exit_exact
from increments import IncrementSpec
from row_model import BoundarySpec, RowModel, diagnostics
from safe_print_utils import safe_print_global as safe_print
from theory import tail_bound

logger = logging.getLogger(__name__)

IDENTITY_TOLERANCE = 1e-12
OPTIONAL_STOPPING_TOLERANCE = 1e-10
RANDOM_MODELS = 100
DEFAULT_SEED = 20180301


@dataclass
class SuiteReport:
    name: str
    checks: int = 0
    failures: int = 0
    details: List[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.failures == 0 and self.checks > 0

    def record(self, ok: bool, message: str):
        self.checks += 1
        if not ok:
            self.failures += 1
            if len(self.details) < 10:
                self.details.append(message)


@dataclass
class VerificationReport:
    suites: List[SuiteReport]

    @property
    def passed(self) -> bool:
        return all(s.passed for s in self.suites)

    def summary_lines(self) -> List[str]:
        lines = []
        for s in self.suites:
            status = "[SUCCESS]" if s.passed else "[FAILED]"
            lines.append(f"{status} {s.name}: {s.checks} checks, {s.failures} failures")
            lines.extend(f"    - {d}" for d in s.details)
        return lines


def random_lattice_models(count: int, max_n: int, seed: int = DEFAULT_SEED) -> List[RowModel]:
    """
    Small lattice rows with symmetric (hence exactly centered) steps and
    integer boundaries. Rows that cannot survive are redrawn.
    """
    rng = np.random.default_rng(seed)
    models: List[RowModel] = []
    while len(models) < count:
        n = int(rng.integers(2, max_n + 1))
        increments = []
        for _ in range(n):
            a = int(rng.integers(1, 4))
            if rng.random() < 0.5:
                increments.append(IncrementSpec.finite_discrete([(-a, 0.5), (a, 0.5)]))
            else:
                q = float(rng.uniform(0.05, 0.5))
                increments.append(IncrementSpec.finite_discrete([(-a, q), (0.0, 1.0 - 2.0 * q), (a, q)]))
        levels = rng.integers(-2, 2, size=n).astype(float)
        try:
            models.append(RowModel.build(increments, BoundarySpec.explicit(levels)))
        except ModelError:
            continue
    return models


def ssrw_row(n: int, g: float = 0.0) -> RowModel:
    return RowModel.build([IncrementSpec.rademacher()] * n, BoundarySpec.constant(g, n))


def reflection_suite(dp_class=LatticeDP, max_N: int = 20, max_m: int = 200) -> SuiteReport:
    """P(N + min U > 0) = P(-N < U_m <= N) for all N <= max_N, m <= max_m."""
    report = SuiteReport("reflection")
    for N in range(1, max_N + 1):
        rhs: Dict[int, float] = {}
        dp = dp_class([SSRW_ATOMS] * max_m, [0] * max_m, start=N, track_unrestricted=True)
        dp.run(observer=lambda k, d, N=N: rhs.__setitem__(k, d.unrestricted_mass(0, 2 * N)))
        for m in range(1, max_m + 1):
            lhs = dp.survival[m - 1]
            report.record(abs(lhs - rhs[m]) <= IDENTITY_TOLERANCE,
                          f"N={N} m={m}: survival {lhs!r} vs window {rhs[m]!r}")
    return report


def martingale_suite(dp_class=LatticeDP, max_N: int = 10, max_m: int = 100) -> SuiteReport:
    """E[N + U_m; N + min U > 0] = N."""
    report = SuiteReport("martingale")
    for N in range(1, max_N + 1):
        moments: Dict[int, float] = {}
        dp = dp_class([SSRW_ATOMS] * max_m, [0] * max_m, start=N)
        dp.run(observer=lambda k, d: moments.__setitem__(k, d.surviving_moment()))
        for m in range(1, max_m + 1):
            report.record(abs(moments[m] - N) <= IDENTITY_TOLERANCE, f"N={N} m={m}: moment {moments[m]!r}")
    return report


def optional_stopping_suite(models: Sequence[RowModel], dp_class=LatticeDP) -> SuiteReport:
    """E[S_n - g_n; T > n] = E[-S_T; T <= n] - g_n P(T > n)."""
    report = SuiteReport("optional_stopping")
    for i, model in enumerate(models):
        result = exit_exact(model, dp_class=dp_class)
        report.record(abs(result.e_n - result.e_n_alt) <= OPTIONAL_STOPPING_TOLERANCE,
                      f"model {i} (n={model.n}): {result.e_n!r} vs {result.e_n_alt!r}")
    return report


def tail_bound_suite(models: Sequence[RowModel], dp_class=LatticeDP) -> SuiteReport:
    """P(T_n > m) <= 4 E_n / B_m at every m with B_m >= 24 rho."""
    report = SuiteReport("tail_bound")
    for i, model in enumerate(models):
        result = exit_exact(model, dp_class=dp_class)
        diag = diagnostics(model)
        for m in range(1, model.n + 1):
            bound, applicable = tail_bound(result.e_n, diag.B_at(m), diag.rho)
            if applicable:
                p = result.survival_at(m)
                report.record(p <= bound + IDENTITY_TOLERANCE, f"model {i} (n={model.n}) m={m}: P={p!r} > {bound!r}")
    return report


def mass_conservation_suite(models: Sequence[RowModel], dp_class=LatticeDP) -> SuiteReport:
    """Per step: sum u_k = 1 and sum f_k + P(T <= k) = 1."""
    report = SuiteReport("mass_conservation")
    for i, model in enumerate(models):
        lattice = model.lattice_info

        def observe(k, d, i=i):
            crossed = math.fsum(d.crossed)
            total = d.surviving_mass() + crossed
            report.record(abs(total - 1.0) <= IDENTITY_TOLERANCE, f"model {i} k={k}: killed+alive={total!r}")
            free = math.fsum(d.unrestricted.tolist())
            report.record(abs(free - 1.0) <= IDENTITY_TOLERANCE, f"model {i} k={k}: unrestricted={free!r}")
            if k > 1:
                report.record(d.survival[k - 1] <= d.survival[k - 2] + IDENTITY_TOLERANCE,
                              f"model {i} k={k}: survival increased")

        dp_class(lattice.int_atoms, lattice.int_boundary, step=lattice.step, track_unrestricted=True).run(observe)
    return report


SUITE_NAMES = ("reflection", "martingale", "optional_stopping", "tail_bound", "mass_conservation")


def verify(suites: Optional[Sequence[str]] = None, dp_class=LatticeDP, seed: int = DEFAULT_SEED,
           random_models: int = RANDOM_MODELS, echo: bool = True) -> VerificationReport:
    """Run the named suites (all by default) against `dp_class`."""
    selected = list(suites) if suites else list(SUITE_NAMES)
    unknown = set(selected) - set(SUITE_NAMES)
    if unknown:
        raise ValueError(f"Unknown suites: {sorted(unknown)}")

    small: List[RowModel] = []
    bounded: List[RowModel] = []
    if {"optional_stopping", "mass_conservation"} & set(selected):
        small = random_lattice_models(random_models, 50, seed)
    if "tail_bound" in selected:
        # small random rows never reach B_m >= 24 rho; long walks make the check bite
        bounded = random_lattice_models(random_models, 200, seed + 1) + [ssrw_row(1600), ssrw_row(2500),
                                                                         ssrw_row(2500, g=-1.0)]

    runners: Dict[str, Callable[[], SuiteReport]] = {
        "reflection": lambda: reflection_suite(dp_class),
        "martingale": lambda: martingale_suite(dp_class),
        "optional_stopping": lambda: optional_stopping_suite(small, dp_class),
        "tail_bound": lambda: tail_bound_suite(bounded, dp_class),
        "mass_conservation": lambda: mass_conservation_suite(small, dp_class),
    }
    reports = []
    for name in selected:
        if echo:
            safe_print(f"[VERIFY] Running suite '{name}'...")
        report = runners[name]()
        logger.info("Suite %s: %d checks, %d failures", name, report.checks, report.failures)
        reports.append(report)
    return VerificationReport(reports)
