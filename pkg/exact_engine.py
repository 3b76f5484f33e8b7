"""
Exact dynamic programming over lattice walks.

The sweep carries f_k(x) = P(S_k = x, T > k) over integer lattice states
and, on request, the unrestricted table u_k(x) = P(S_k = x). Mass that
lands on or below the boundary is removed at the step it crosses, which
also accumulates E[-S_T; T <= n] in the same pass.
"""
import os
import math
import logging
from typing import Callable, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from errors import EngineMismatchError, ResourceGuardError
from increments import IncrementSpec, Psi
from results import ExitResult
from row_model import BoundarySpec, RowModel

logger = logging.getLogger(__name__)

DEFAULT_MAX_CELL_UPDATES = 2 * 10 ** 9
SSRW_ATOMS = ((-1, 0.5), (1, 0.5))

IntAtoms = Tuple[Tuple[int, float], ...]


def max_cell_updates_from_env() -> int:
    return int(float(os.getenv("FPT_MAX_CELL_UPDATES", DEFAULT_MAX_CELL_UPDATES)))


def _fsum(values: np.ndarray) -> float:
    return math.fsum(values.tolist())


class LatticeDP:
    """
    Survival-mass sweep for one lattice walk.

    `int_atoms[k]` is the law of the (k+1)-th step in lattice units and
    `int_boundary[k]` the boundary level; a state x survives step k+1 iff
    x > int_boundary[k]. `step` converts lattice units to reported units.
    """

    def __init__(self, int_atoms: Sequence[IntAtoms], int_boundary: Sequence[int], start: int = 0,
                 step: float = 1.0, track_unrestricted: bool = False, record_survival: bool = True,
                 max_cell_updates: Optional[int] = None):
        if len(int_atoms) != len(int_boundary):
            raise ValueError("int_atoms and int_boundary must have equal length")
        self.int_atoms = [tuple(a) for a in int_atoms]
        self.int_boundary = [int(b) for b in int_boundary]
        self.start = int(start)
        self.step = float(step)
        self.track_unrestricted = track_unrestricted
        self.record_survival = record_survival
        self.max_cell_updates = max_cell_updates if max_cell_updates is not None else max_cell_updates_from_env()

        reach = abs(self.start) + sum(max(abs(a) for a, _ in atoms) for atoms in self.int_atoms)
        self.offset = reach
        self.size = 2 * reach + 1

        self.survival: List[float] = []
        self.crossed: List[float] = []
        self.crossing_moments: List[float] = []
        self.mass: Optional[np.ndarray] = None
        self.unrestricted: Optional[np.ndarray] = None
        self._lo = self._hi = 0
        self._ulo = self._uhi = 0

    def estimated_cell_updates(self) -> int:
        width, total = 1, 0
        for atoms in self.int_atoms:
            values = [a for a, _ in atoms]
            width += max(values) - min(values)
            total += width * len(atoms)
        return total * (2 if self.track_unrestricted else 1)

    @staticmethod
    def _propagate(table: np.ndarray, lo: int, hi: int, atoms: IntAtoms) -> Tuple[np.ndarray, int, int]:
        values = [a for a, _ in atoms]
        new_lo, new_hi = lo + min(values), hi + max(values)
        out = np.zeros_like(table)
        block = table[lo:hi + 1]
        for a, p in atoms:
            out[lo + a:hi + a + 1] += p * block
        return out, new_lo, new_hi

    def cut_index(self, k: int) -> int:
        """Highest table index killed at step k: states x <= int_boundary[k-1]."""
        return self.int_boundary[k - 1] + self.offset

    def run(self, observer: Optional[Callable[[int, "LatticeDP"], None]] = None) -> "LatticeDP":
        """
        Sweep all steps. `observer(k, self)` is called after step k with the
        tables of step k in place, so queries below can be used mid-sweep.
        """
        cost = self.estimated_cell_updates()
        if cost > self.max_cell_updates:
            raise ResourceGuardError(
                f"Exact sweep needs ~{cost:.3g} cell updates, budget is {self.max_cell_updates:.3g}")
        logger.debug("Lattice sweep: %d steps, %d states, ~%d cell updates", len(self.int_atoms), self.size, cost)

        origin = self.start + self.offset
        self.mass = np.zeros(self.size)
        self.mass[origin] = 1.0
        self._lo = self._hi = origin
        if self.track_unrestricted:
            self.unrestricted = self.mass.copy()
            self._ulo = self._uhi = origin
        alive = True

        for k, atoms in enumerate(self.int_atoms, start=1):
            if self.track_unrestricted:
                self.unrestricted, self._ulo, self._uhi = self._propagate(
                    self.unrestricted, self._ulo, self._uhi, atoms)
            killed_mass, killed_moment = 0.0, 0.0
            if alive:
                f, lo, hi = self._propagate(self.mass, self._lo, self._hi, atoms)
                cut = self.cut_index(k)
                if cut >= lo:
                    top = min(cut, hi)
                    killed = f[lo:top + 1]
                    states = np.arange(lo, top + 1) - self.offset
                    killed_mass = _fsum(killed)
                    killed_moment = _fsum(states * killed)
                    f[lo:top + 1] = 0.0
                    lo = top + 1
                if lo > hi:
                    alive = False
                    lo = hi = origin
                    f[:] = 0.0
                self.mass, self._lo, self._hi = f, lo, hi
            self.crossed.append(killed_mass)
            self.crossing_moments.append(killed_moment)
            if self.record_survival:
                self.survival.append(_fsum(self.mass[self._lo:self._hi + 1]) if alive else 0.0)
            if observer is not None:
                observer(k, self)
        return self

    # Queries on the current tables (lattice-unit states)

    def states(self) -> np.ndarray:
        return np.arange(self.size) - self.offset

    def surviving_moment(self, shift: int = 0) -> float:
        """sum_x (x - shift) f_n(x), in lattice units."""
        lo, hi = self._lo, self._hi
        return _fsum((self.states()[lo:hi + 1] - shift) * self.mass[lo:hi + 1])

    def surviving_mass(self) -> float:
        return _fsum(self.mass)

    def unrestricted_mass(self, lo_exclusive: int, hi_inclusive: int) -> float:
        """P(lo < S_n <= hi) from the unrestricted table."""
        if self.unrestricted is None:
            raise ValueError("Sweep was run without track_unrestricted")
        a = max(lo_exclusive + 1 + self.offset, 0)
        b = min(hi_inclusive + self.offset, self.size - 1)
        if a > b:
            return 0.0
        return _fsum(self.unrestricted[a:b + 1])

    def crossing_moment(self) -> float:
        """sum over steps of E[S_T; T = k], in lattice units."""
        return math.fsum(self.crossing_moments)


def exit_exact(model: RowModel, max_cell_updates: Optional[int] = None, dp_class=LatticeDP) -> ExitResult:
    """P(T_n > m) for every m, E_n and its crossing-side form for a lattice row."""
    lattice = model.lattice_info
    if lattice is None:
        raise EngineMismatchError("Exact engine needs a lattice row (continuous or irrational atoms found)")
    dp = dp_class(lattice.int_atoms, lattice.int_boundary, step=lattice.step,
                  max_cell_updates=max_cell_updates).run()
    h = lattice.step
    b_n = lattice.int_boundary[-1]
    p_survive = dp.survival[-1]
    e_n = h * dp.surviving_moment(shift=b_n)
    # E[-S_T; T <= n] - g_{n,n} P(T_n > n)
    e_n_alt = -h * dp.crossing_moment() - h * b_n * p_survive
    logger.info("Exact sweep n=%d: P(T>n)=%.6g E_n=%.6g", model.n, p_survive, e_n)
    return ExitResult(
        n=model.n,
        survival=tuple(dp.survival),
        e_n=e_n,
        e_n_alt=e_n_alt,
        engine="exact",
        extras={"crossed_total": math.fsum(dp.crossed)},
    )


def reflection_check(N: int, m: int, dp_class=LatticeDP) -> Tuple[float, float]:
    """
    Simple symmetric walk U with m steps:
    lhs = P(N + min_{k<=m} U_k > 0) by the killed sweep,
    rhs = P(-N < U_m <= N) from the unrestricted table.
    """
    if N < 1 or m < 1:
        raise ValueError("N and m must be positive")
    dp = dp_class([SSRW_ATOMS] * m, [0] * m, start=N, track_unrestricted=True).run()
    lhs = dp.survival[-1]
    rhs = dp.unrestricted_mass(0, 2 * N)
    return lhs, rhs


def martingale_check(N: int, m: int, dp_class=LatticeDP) -> float:
    """E[(N + U_m) 1{N + min U > 0}], which equals N for the simple walk."""
    if N < 1 or m < 1:
        raise ValueError("N and m must be positive")
    dp = dp_class([SSRW_ATOMS] * m, [0] * m, start=N).run()
    return dp.surviving_moment()


def overshoot_exact(increments: Union[IncrementSpec, Sequence[IncrementSpec]],
                    boundary: Union[float, Sequence[float]], horizon: int,
                    max_cell_updates: Optional[int] = None, dp_class=LatticeDP) -> Tuple[float, float]:
    """
    (E[-S_tau; tau <= H], P(tau > H)) for tau = inf{k : S_k <= g_k}, in walk
    units. `increments` is one law (iid walk) or one law per step.
    """
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    specs = [increments] * horizon if isinstance(increments, IncrementSpec) else list(increments)[:horizon]
    if len(specs) < horizon:
        raise ValueError(f"Need {horizon} increment laws, got {len(specs)}")
    levels = [float(boundary)] * horizon if np.ndim(boundary) == 0 else [float(g) for g in boundary][:horizon]
    # the normalizing scale is irrelevant here, only the lattice is used
    row = RowModel.build(specs, BoundarySpec.explicit(levels), require_survival=False)
    lattice = row.lattice_info
    if lattice is None:
        raise EngineMismatchError("overshoot_exact needs a lattice walk")
    walk_h = float(lattice.walk_step)
    dp = dp_class(lattice.int_atoms, lattice.int_boundary, step=walk_h, max_cell_updates=max_cell_updates).run()
    return -walk_h * dp.crossing_moment(), dp.survival[-1]


def local_clt_check(m: int, N_grid: Iterable[int], dp_class=LatticeDP) -> float:
    """sup over N of |P(-N < U_m <= N) / Psi(N / sqrt(m)) - 1| for the simple walk."""
    if m < 1:
        raise ValueError("m must be positive")
    # boundary below the reachable range: nothing is killed, f_m = u_m
    dp = dp_class([SSRW_ATOMS] * m, [-(m + 1)] * m, record_survival=False).run()
    table = dp.mass
    offset = dp.offset
    cumulative = np.cumsum(table)
    worst = 0.0
    for N in N_grid:
        a = min(max(-N + offset, -1), dp.size - 1)
        b = min(N + offset, dp.size - 1)
        prob = cumulative[b] - (cumulative[a] if a >= 0 else 0.0)
        worst = max(worst, abs(prob / Psi(N / math.sqrt(m)) - 1.0))
    return worst
