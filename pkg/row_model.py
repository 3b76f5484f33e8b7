"""
One row of the triangular array: n increments, a moving boundary and the
scale B_n that normalizes the row to unit total variance.

Increments and boundary are stored in walk units (the unscaled X_k and g_k);
the normalized entries are X_{k,n} = X_k / scale and g_{k,n} = g_k / scale.
Keeping walk units lets lattice rows be compared in exact integer arithmetic.
"""
import math
import logging
from dataclasses import dataclass, replace
from fractions import Fraction
from functools import reduce
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from errors import ModelError
from increments import IncrementSpec

logger = logging.getLogger(__name__)

VARIANCE_TOLERANCE = 1e-9
MAX_DENOMINATOR = 10 ** 6
BOUNDARY_KINDS = ("zero", "constant_scaled", "explicit_array")


@dataclass(frozen=True)
class BoundarySpec:
    """Boundary g_k in walk units, one value per step."""
    kind: str
    values: Tuple[float, ...]

    def __post_init__(self):
        if self.kind not in BOUNDARY_KINDS:
            raise ModelError(f"Unknown boundary kind '{self.kind}'")
        if not all(math.isfinite(v) for v in self.values):
            raise ModelError("Boundary values must be finite")

    @classmethod
    def zero(cls, n: int) -> "BoundarySpec":
        return cls("zero", (0.0,) * n)

    @classmethod
    def constant(cls, g: float, n: int) -> "BoundarySpec":
        """Constant walk-level g, i.e. g_{k,n} = g / B_n after normalization."""
        if g == 0.0:
            return cls.zero(n)
        return cls("constant_scaled", (float(g),) * n)

    @classmethod
    def explicit(cls, values: Sequence[float]) -> "BoundarySpec":
        return cls("explicit_array", tuple(float(v) for v in values))

    def to_dict(self) -> Dict:
        if self.kind == "zero":
            return {"kind": "zero"}
        if self.kind == "constant_scaled":
            return {"kind": "constant_scaled", "g": self.values[0]}
        return {"kind": "explicit_array", "values": list(self.values)}

    @classmethod
    def from_dict(cls, data: Dict, n: int) -> "BoundarySpec":
        kind = data.get("kind")
        allowed = {"zero": set(), "constant_scaled": {"g"}, "explicit_array": {"values"}}
        if kind not in allowed:
            raise ModelError(f"Unknown boundary kind '{kind}'")
        unknown = set(data) - allowed[kind] - {"kind"}
        if unknown:
            raise ModelError(f"Unknown keys for boundary {kind}: {sorted(unknown)}")
        if kind == "zero":
            return cls.zero(n)
        if kind == "constant_scaled":
            return cls.constant(float(data["g"]), n)
        return cls.explicit(data["values"])


@dataclass(frozen=True)
class ScalingReport:
    b_n: float
    scaled_variances: Tuple[float, ...]
    scaled_boundary: Tuple[float, ...]


def normalize_sequence(raw_variances: Sequence[float], raw_boundary: Sequence[float]) -> ScalingReport:
    """Embed a single sequence into the array: X_{k,n} = X_k / B_n, g_{k,n} = g_k / B_n."""
    if any(v < 0.0 or not math.isfinite(v) for v in raw_variances):
        raise ModelError("Variances must be finite and non-negative")
    total = math.fsum(raw_variances)
    if total <= 0.0:
        raise ModelError("Total variance is zero; the row cannot be normalized")
    b_n = math.sqrt(total)
    return ScalingReport(
        b_n=b_n,
        scaled_variances=tuple(v / total for v in raw_variances),
        scaled_boundary=tuple(g / b_n for g in raw_boundary),
    )


@dataclass(frozen=True)
class LatticeInfo:
    """
    Common lattice of a row: every atom and boundary value is an integer
    multiple of walk_step. `step` is the same lattice in normalized units.
    """
    walk_step: Fraction
    step: float
    int_atoms: Tuple[Tuple[Tuple[int, float], ...], ...]
    int_boundary: Tuple[int, ...]


@dataclass(frozen=True)
class ArrayDiagnostics:
    r_n: float
    g_n_star: float
    rho: float
    B: Tuple[float, ...]
    B_tail: Tuple[float, ...]

    def B_at(self, m: int) -> float:
        return self.B[m - 1]


@dataclass(frozen=True)
class RowModel:
    increments: Tuple[IncrementSpec, ...]
    boundary: BoundarySpec
    scale: float
    lattice_info: Optional[LatticeInfo] = None

    @property
    def n(self) -> int:
        return len(self.increments)

    @property
    def walk_boundary(self) -> np.ndarray:
        return np.asarray(self.boundary.values, dtype=float)

    @property
    def scaled_boundary(self) -> np.ndarray:
        return self.walk_boundary / self.scale

    @property
    def is_lattice(self) -> bool:
        return self.lattice_info is not None

    @classmethod
    def build(cls, increments: Sequence[IncrementSpec], boundary: BoundarySpec,
              scale: Optional[float] = None, require_survival: bool = True) -> "RowModel":
        """
        Validate and assemble a row. `scale` defaults to B_n = (sum var)^{1/2};
        an explicit scale must still normalize the row to unit variance.
        """
        increments = tuple(increments)
        if not increments:
            raise ModelError("A row needs at least one increment")
        if len(boundary.values) != len(increments):
            raise ModelError(f"Boundary has {len(boundary.values)} values for {len(increments)} increments")
        for spec in increments:
            if spec.variance == 0.0 and spec.support_bound != 0.0:
                raise ModelError("Zero-variance entries must be the constant 0")
        total = math.fsum(spec.variance for spec in increments)
        if scale is None:
            scale = normalize_sequence([s.variance for s in increments], boundary.values).b_n
        if scale <= 0.0 or not math.isfinite(scale):
            raise ModelError(f"Invalid scale {scale}")
        if abs(total / (scale * scale) - 1.0) > VARIANCE_TOLERANCE:
            raise ModelError(f"Row variance is {total / scale ** 2!r}, expected 1")

        model = cls(increments=increments, boundary=boundary, scale=float(scale))
        model = replace(model, lattice_info=detect_lattice(model))
        if require_survival and not survival_possible(model):
            raise ModelError("No path stays strictly above the boundary: P(T_n > n) = 0")
        logger.debug("Built row n=%d scale=%.6g lattice=%s", model.n, model.scale, model.is_lattice)
        return model

    def to_dict(self) -> Dict:
        return {
            "increments": [s.to_dict() for s in self.increments],
            "boundary": self.boundary.to_dict(),
            "scale": self.scale,
        }

    @classmethod
    def from_dict(cls, data: Dict, require_survival: bool = True) -> "RowModel":
        unknown = set(data) - {"increments", "boundary", "scale"}
        if unknown:
            raise ModelError(f"Unknown row keys: {sorted(unknown)}")
        increments = [IncrementSpec.from_dict(d) for d in data["increments"]]
        boundary = BoundarySpec.from_dict(data.get("boundary", {"kind": "zero"}), len(increments))
        return cls.build(increments, boundary, data.get("scale"), require_survival=require_survival)


def diagnostics(model: RowModel) -> ArrayDiagnostics:
    """r_n, g_n*, rho = r_n + g_n* and the cumulative scales B_k, B_{k,n}."""
    r_n = max(spec.support_bound for spec in model.increments) / model.scale
    g_n_star = float(np.max(np.abs(model.scaled_boundary)))
    variances = np.array([spec.variance for spec in model.increments]) / model.scale ** 2
    b_sq = np.cumsum(variances)
    B = np.sqrt(b_sq)
    B_tail = np.sqrt(np.clip(1.0 - b_sq, 0.0, None))
    return ArrayDiagnostics(
        r_n=float(r_n),
        g_n_star=g_n_star,
        rho=float(r_n) + g_n_star,
        B=tuple(float(b) for b in B),
        B_tail=tuple(float(b) for b in B_tail),
    )


def _as_fraction(value: float) -> Optional[Fraction]:
    frac = Fraction(value).limit_denominator(MAX_DENOMINATOR)
    return frac if float(frac) == value else None


def detect_lattice(model: RowModel) -> Optional[LatticeInfo]:
    """Common lattice step of all atoms and boundary values, or None."""
    if any(spec.is_continuous for spec in model.increments):
        return None
    fractions: List[Fraction] = []
    for value in [v for spec in model.increments for v, _ in spec.discrete_atoms()] + list(model.boundary.values):
        frac = _as_fraction(value)
        if frac is None:
            return None
        fractions.append(frac)
    nonzero = [f for f in fractions if f != 0]
    if not nonzero:
        walk_step = Fraction(1)
    else:
        common_den = reduce(lambda a, b: a * b // math.gcd(a, b), (f.denominator for f in nonzero), 1)
        numerators = [abs(f.numerator * (common_den // f.denominator)) for f in nonzero]
        walk_step = Fraction(reduce(math.gcd, numerators), common_den)

    def to_int(value: float) -> int:
        multiple = _as_fraction(value) / walk_step
        if multiple.denominator != 1:
            raise ModelError(f"Value {value} is not on the lattice {walk_step}")
        return int(multiple)

    int_atoms = tuple(tuple((to_int(v), p) for v, p in spec.discrete_atoms()) for spec in model.increments)
    int_boundary = tuple(to_int(g) for g in model.boundary.values)
    return LatticeInfo(
        walk_step=walk_step,
        step=float(walk_step) / model.scale,
        int_atoms=int_atoms,
        int_boundary=int_boundary,
    )


def survival_possible(model: RowModel) -> bool:
    """
    True when some path stays strictly above the boundary. The path taking
    the largest atom at every step maximizes every partial sum at once, so
    checking it is the reachability test (exact integers on lattices).
    """
    if model.lattice_info is not None:
        top = 0
        for atoms, bound in zip(model.lattice_info.int_atoms, model.lattice_info.int_boundary):
            top += max(v for v, _ in atoms)
            if top <= bound:
                return False
        return True
    top = 0.0
    for spec, bound in zip(model.increments, model.boundary.values):
        atoms = spec.discrete_atoms()
        top += max(v for v, _ in atoms) if atoms else spec.support_bound
        if top <= bound:
            return False
    return True
