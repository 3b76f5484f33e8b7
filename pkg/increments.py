"""
Increment distributions for one entry of the triangular array, their
samplers, and the normal-distribution helpers phi, Psi and Phi.
"""
import math
import logging
from dataclasses import dataclass
from typing import Dict, Sequence, Tuple, Union

import numpy as np
from scipy import special

from errors import SpecError

logger = logging.getLogger(__name__)

KINDS = ("rademacher", "three_point", "uniform_symmetric", "finite_discrete")
DISCRETE_KINDS = ("rademacher", "three_point", "finite_discrete")
MOMENT_TOLERANCE = 1e-12

SQRT_2PI = math.sqrt(2.0 * math.pi)
SQRT_2_OVER_PI = math.sqrt(2.0 / math.pi)


@dataclass(frozen=True)
class IncrementSpec:
    """
    One bounded, mean-zero increment law. Immutable and safe to share.

    three_point(N) takes the values -N, 0, N with probabilities p, 1-2p, p
    where p = 1/(2N^2), so its variance is exactly one.
    """
    kind: str
    level: float = 0.0
    half_width: float = 0.0
    atoms: Tuple[Tuple[float, float], ...] = ()

    def __post_init__(self):
        if self.kind not in KINDS:
            raise SpecError(f"Unknown increment kind '{self.kind}'")
        if self.kind == "three_point":
            if not math.isfinite(self.level) or self.level < 1.0:
                raise SpecError(f"three_point needs N >= 1 (p <= 1/2), got N={self.level}")
        elif self.kind == "uniform_symmetric":
            if not math.isfinite(self.half_width) or self.half_width <= 0.0:
                raise SpecError(f"uniform_symmetric needs b > 0, got b={self.half_width}")
        elif self.kind == "finite_discrete":
            self._validate_atoms()

    def _validate_atoms(self):
        if not self.atoms:
            raise SpecError("finite_discrete needs at least one atom")
        for value, prob in self.atoms:
            if not (math.isfinite(value) and math.isfinite(prob)) or prob < 0.0:
                raise SpecError(f"Invalid atom ({value}, {prob})")
        total = math.fsum(prob for _, prob in self.atoms)
        if abs(total - 1.0) > MOMENT_TOLERANCE:
            raise SpecError(f"Atom probabilities sum to {total!r}, not 1")
        mean = math.fsum(value * prob for value, prob in self.atoms)
        if abs(mean) > MOMENT_TOLERANCE:
            # no auto-centering: the caller has to fix the law
            raise SpecError(f"finite_discrete mean is {mean!r}; increments must be centered")

    # Constructors

    @classmethod
    def rademacher(cls) -> "IncrementSpec":
        return cls(kind="rademacher")

    @classmethod
    def three_point(cls, level: float) -> "IncrementSpec":
        return cls(kind="three_point", level=float(level))

    @classmethod
    def uniform_symmetric(cls, half_width: float) -> "IncrementSpec":
        return cls(kind="uniform_symmetric", half_width=float(half_width))

    @classmethod
    def finite_discrete(cls, atoms: Sequence[Tuple[float, float]]) -> "IncrementSpec":
        return cls(kind="finite_discrete", atoms=tuple((float(v), float(p)) for v, p in atoms))

    # Moments and support

    @property
    def p(self) -> float:
        """Tail probability of three_point; zero for other kinds."""
        if self.kind != "three_point":
            return 0.0
        return 1.0 / (2.0 * self.level * self.level)

    @property
    def support_bound(self) -> float:
        if self.kind == "rademacher":
            return 1.0
        if self.kind == "three_point":
            return self.level
        if self.kind == "uniform_symmetric":
            return self.half_width
        return max(abs(value) for value, prob in self.atoms if prob > 0.0)

    @property
    def variance(self) -> float:
        if self.kind in ("rademacher", "three_point"):
            return 1.0
        if self.kind == "uniform_symmetric":
            return self.half_width * self.half_width / 3.0
        return math.fsum(value * value * prob for value, prob in self.atoms)

    @property
    def is_continuous(self) -> bool:
        return self.kind == "uniform_symmetric"

    def discrete_atoms(self) -> Tuple[Tuple[float, float], ...]:
        """Atoms with positive probability; empty for continuous kinds."""
        if self.kind == "rademacher":
            return ((-1.0, 0.5), (1.0, 0.5))
        if self.kind == "three_point":
            p = self.p
            atoms = ((-self.level, p), (0.0, 1.0 - 2.0 * p), (self.level, p))
            return tuple(a for a in atoms if a[1] > 0.0)
        if self.kind == "finite_discrete":
            return tuple(a for a in self.atoms if a[1] > 0.0)
        return ()

    def scaled(self, weight: float) -> "IncrementSpec":
        """Law of weight*X. A unit weight returns the spec itself."""
        if not math.isfinite(weight) or weight <= 0.0:
            raise SpecError(f"Weights must be positive and finite, got {weight}")
        if weight == 1.0:
            return self
        if self.kind == "uniform_symmetric":
            return IncrementSpec.uniform_symmetric(self.half_width * weight)
        return IncrementSpec.finite_discrete([(value * weight, prob) for value, prob in self.discrete_atoms()])

    # Serialization

    def to_dict(self) -> Dict:
        if self.kind == "three_point":
            return {"kind": self.kind, "N": self.level}
        if self.kind == "uniform_symmetric":
            return {"kind": self.kind, "b": self.half_width}
        if self.kind == "finite_discrete":
            return {"kind": self.kind, "atoms": [[v, p] for v, p in self.atoms]}
        return {"kind": self.kind}

    @classmethod
    def from_dict(cls, data: Dict) -> "IncrementSpec":
        allowed = {"rademacher": set(), "three_point": {"N"}, "uniform_symmetric": {"b"},
                   "finite_discrete": {"atoms"}}
        kind = data.get("kind")
        if kind not in allowed:
            raise SpecError(f"Unknown increment kind '{kind}'")
        unknown = set(data) - allowed[kind] - {"kind"}
        if unknown:
            raise SpecError(f"Unknown keys for {kind}: {sorted(unknown)}")
        try:
            if kind == "three_point":
                return cls.three_point(data["N"])
            if kind == "uniform_symmetric":
                return cls.uniform_symmetric(data["b"])
            if kind == "finite_discrete":
                return cls.finite_discrete(data["atoms"])
        except (KeyError, TypeError) as e:
            raise SpecError(f"Malformed {kind} increment: {e}") from e
        return cls.rademacher()


def from_uniform(spec: IncrementSpec, u: np.ndarray) -> np.ndarray:
    """
    Inverse-CDF transform: one uniform in [0, 1) per draw, any array shape.
    Step k of a Monte Carlo path consumes exactly the k-th uniform of its stream.
    """
    u = np.asarray(u, dtype=float)
    if spec.kind == "rademacher":
        return np.where(u < 0.5, -1.0, 1.0)
    if spec.kind == "three_point":
        p = spec.p
        return np.where(u < p, spec.level, np.where(u < 2.0 * p, -spec.level, 0.0))
    if spec.kind == "uniform_symmetric":
        return spec.half_width * (2.0 * u - 1.0)
    values = np.array([v for v, _ in spec.atoms])
    cumulative = np.cumsum([p for _, p in spec.atoms])
    cumulative /= cumulative[-1]
    index = np.searchsorted(cumulative, u, side="right")
    return values[np.minimum(index, len(values) - 1)]


def sample_many(spec: IncrementSpec, rng: np.random.Generator, size: int) -> np.ndarray:
    """Vectorized draws of `spec` from a numpy generator."""
    return from_uniform(spec, rng.random(size))


def sample(spec: IncrementSpec, stream: Union[np.random.Generator, "object"]) -> float:
    """
    One draw from `spec`. `stream` is a numpy Generator or any object
    exposing one as `.generator` (see mc_engine.RngStream).
    """
    rng = stream if isinstance(stream, np.random.Generator) else stream.generator
    return float(sample_many(spec, rng, 1)[0])


# Normal helpers

def phi(u):
    """Standard normal density."""
    return np.exp(-0.5 * np.square(u)) / SQRT_2PI if np.ndim(u) else math.exp(-0.5 * u * u) / SQRT_2PI


def normal_cdf(x):
    """Standard normal distribution function (scipy ndtr, abs error ~1e-16)."""
    value = special.ndtr(x)
    return float(value) if np.ndim(value) == 0 else value


def Psi(x):
    """Psi(x) = 2 * int_0^{x+} phi = P(|Z| <= x) for x >= 0, zero otherwise."""
    value = np.where(np.asarray(x) > 0.0, special.erf(np.maximum(x, 0.0) / math.sqrt(2.0)), 0.0)
    return float(value) if np.ndim(value) == 0 else value
