"""
Named generators that assemble a RowModel for every worked example:
scaled iid walks, the Lindeberg counterexamples (lind, lind2), Gaposhkin
summation and the AR(1) transition family.
"""
import math
import logging
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, Optional

import numpy as np

from errors import ConfigError, FirstPassageError, UninformativeLimitError
from increments import IncrementSpec, SQRT_2_OVER_PI
from row_model import BoundarySpec, RowModel, diagnostics
from theory import ar_sigma, gaposhkin_sigma, predicted_limit, regime_ratio

logger = logging.getLogger(__name__)

SCENARIO_KINDS = ("scaled_iid", "lind", "lind2", "gaposhkin", "ar1")
PARAM_KEYS = {
    "scaled_iid": {"increment", "g"},
    "lind": {"N", "M", "base", "require_identity"},
    "lind2": {"N"},
    "gaposhkin": {"f", "increment"},
    "ar1": {"c", "innovation"},
}
CONFIG_KEYS = {"kind", "n", "params", "seed", "name"}


@dataclass(frozen=True)
class ScenarioConfig:
    kind: str
    n: int
    params: Dict[str, Any] = field(default_factory=dict)
    seed: int = 0
    name: Optional[str] = None

    @property
    def label(self) -> str:
        return self.name or self.kind

    def with_n(self, n: int) -> "ScenarioConfig":
        return ScenarioConfig(self.kind, n, dict(self.params), self.seed, self.name)

    @classmethod
    def from_dict(cls, data: Dict, n: Optional[int] = None) -> "ScenarioConfig":
        unknown = set(data) - CONFIG_KEYS
        if unknown:
            raise ConfigError(f"Unknown scenario keys: {sorted(unknown)}")
        kind = data.get("kind")
        if kind not in SCENARIO_KINDS:
            raise ConfigError(f"Unknown scenario kind '{kind}'")
        params = dict(data.get("params", {}))
        bad = set(params) - PARAM_KEYS[kind]
        if bad:
            raise ConfigError(f"Unknown params for {kind}: {sorted(bad)}")
        size = data.get("n", n)
        if size is None:
            raise ConfigError(f"Scenario '{data.get('name', kind)}' has no n")
        return cls(kind, int(size), params, int(data.get("seed", 0)), data.get("name"))

    def to_dict(self) -> Dict:
        data = {"kind": self.kind, "n": self.n, "params": self.params, "seed": self.seed}
        if self.name:
            data["name"] = self.name
        return data


@dataclass(frozen=True)
class BuiltScenario:
    config: ScenarioConfig
    model: RowModel
    exact_solvable: bool
    metadata: Dict[str, Any]


class WeightFunction:
    """Non-negative weight f on [0, 1] for Gaposhkin summation."""

    def __init__(self, family: str, func: Callable[[float], float], f0: float):
        self.family = family
        self._func = func
        self.f0 = f0

    def __call__(self, t: float) -> float:
        return self._func(t)

    @classmethod
    def from_dict(cls, data: Dict) -> "WeightFunction":
        family = data.get("family")
        allowed = {"constant": {"c"}, "power": {"alpha"}, "affine": {"a", "b"}, "grid": {"values"}}
        if family not in allowed:
            raise ConfigError(f"Unknown f family '{family}'")
        unknown = set(data) - allowed[family] - {"family"}
        if unknown:
            raise ConfigError(f"Unknown keys for f family {family}: {sorted(unknown)}")
        if family == "constant":
            c = float(data.get("c", 1.0))
            return cls(family, lambda t: c, c)
        if family == "power":
            alpha = float(data["alpha"])
            if alpha <= 0.0:
                raise ConfigError("power family needs alpha > 0")
            return cls(family, lambda t: t ** alpha, 0.0)
        if family == "affine":
            a, b = float(data.get("a", 1.0)), float(data.get("b", 1.0))
            return cls(family, lambda t: a + b * t, a)
        values = np.asarray(data["values"], dtype=float)
        if values.size < 2 or np.any(values < 0.0):
            raise ConfigError("grid family needs at least two non-negative values")
        knots = np.linspace(0.0, 1.0, values.size)
        return cls(family, lambda t: float(np.interp(t, knots, values)), float(values[0]))


def _increment(params: Dict, key: str, default: IncrementSpec) -> IncrementSpec:
    return IncrementSpec.from_dict(params[key]) if key in params else default


def resolve_level(schedule: Any, n: int, M: float = 1.0) -> float:
    """
    N_n from a schedule: a number (fixed), {"rule": "fixed", "value": v},
    {"rule": "sqrt", "a": a} -> max(1, round(a sqrt(n))), or
    {"rule": "linear", "M": M} -> n M + 1.
    """
    if isinstance(schedule, (int, float)):
        return float(schedule)
    if not isinstance(schedule, dict):
        raise ConfigError(f"Invalid N schedule {schedule!r}")
    rule = schedule.get("rule")
    if rule == "fixed":
        return float(schedule["value"])
    if rule == "sqrt":
        return float(max(1, round(float(schedule["a"]) * math.sqrt(n))))
    if rule == "linear":
        return n * float(schedule.get("M", M)) + 1.0
    raise ConfigError(f"Unknown N rule '{rule}'")


def _lind_row(n: int, level: float, base: IncrementSpec) -> RowModel:
    if n < 2:
        raise ConfigError("lind rows need n > 1")
    increments = [IncrementSpec.three_point(level)] + [base] * (n - 1)
    return RowModel.build(increments, BoundarySpec.zero(n))


def _build_lind(config: ScenarioConfig) -> BuiltScenario:
    params, n = config.params, config.n
    M = float(params.get("M", 1.0))
    base = _increment(params, "base", IncrementSpec.rademacher())
    if abs(base.variance - 1.0) > 1e-12 or base.support_bound > M:
        raise ConfigError(f"lind base law needs unit variance and |X| <= M = {M}")
    level = resolve_level(params.get("N", {"rule": "linear"}), n, M)
    above_threshold = level > (n - 1) * M
    if params.get("require_identity", False) and not above_threshold:
        raise ConfigError(f"N_n = {level} <= (n-1)M = {(n - 1) * M}: the exact survival identity does not apply")
    model = _lind_row(n, level, base)
    p = model.increments[0].p
    metadata = {"N_n": level, "p_n": p, "r_n": diagnostics(model).r_n}
    if above_threshold:
        # {T_n > n} = {Y_n = N_n}
        metadata.update(predicted_p=p, predicted_e_n=p * level / math.sqrt(n),
                        predicted_ratio=math.sqrt(n) / level)
    return BuiltScenario(config, model, model.is_lattice and level.is_integer(), metadata)


def _build_lind2(config: ScenarioConfig) -> BuiltScenario:
    n = config.n
    level = resolve_level(config.params.get("N", {"rule": "sqrt", "a": 1.0}), n)
    if not level.is_integer() or level < 1:
        raise ConfigError(f"lind2 needs a natural number N_n, got {level}")
    model = _lind_row(n, level, IncrementSpec.rademacher())
    r_n = level / math.sqrt(n)
    p = model.increments[0].p
    metadata = {
        "N_n": level, "p_n": p, "r_n": r_n,
        "predicted_e_n": p * r_n,
        # ratio P/E_n in the limit, evaluated at the realized r_n
        "predicted_ratio": regime_ratio(r_n),
    }
    return BuiltScenario(config, model, model.is_lattice, metadata)


def _build_scaled_iid(config: ScenarioConfig) -> BuiltScenario:
    params, n = config.params, config.n
    spec = _increment(params, "increment", IncrementSpec.rademacher())
    g = params.get("g", 0.0)
    boundary = BoundarySpec.explicit(g) if isinstance(g, (list, tuple)) else BoundarySpec.constant(float(g), n)
    model = RowModel.build([spec] * n, boundary)
    metadata = {"predicted_ratio": SQRT_2_OVER_PI, "limit_normalizer": model.scale,
                "limit_factor": SQRT_2_OVER_PI, "limit_supported": spec.is_continuous and g == 0.0,
                "base_increment": spec}
    return BuiltScenario(config, model, model.is_lattice, metadata)


def _build_gaposhkin(config: ScenarioConfig) -> BuiltScenario:
    params, n = config.params, config.n
    spec = _increment(params, "increment", IncrementSpec.uniform_symmetric(math.sqrt(3.0)))
    f = WeightFunction.from_dict(params.get("f", {"family": "constant", "c": 1.0}))
    increments = []
    for j in range(1, n + 1):
        weight = f(j / n)
        increments.append(spec.scaled(weight) if weight > 0.0 else IncrementSpec.finite_discrete([(0.0, 1.0)]))
    try:
        model = RowModel.build(increments, BoundarySpec.zero(n))
        sigma_n, sigma_f = gaposhkin_sigma(f, n, spec.variance)
    except (ValueError, FirstPassageError) as e:
        raise ConfigError(f"gaposhkin scenario invalid: {e}") from e
    metadata = {"f0": f.f0, "sigma_n_f": sigma_n, "sigma_f": sigma_f, "limit_normalizer": math.sqrt(n),
                "limit_supported": spec.is_continuous, "base_increment": spec}
    try:
        metadata["limit_factor"] = predicted_limit("gaposhkin", {"f0": f.f0, "sigma_f": sigma_f}, 1.0)
    except UninformativeLimitError:
        metadata.update(limit_factor=None, limit_supported=False)
    return BuiltScenario(config, model, model.is_lattice, metadata)


def _ar1_gamma(config: ScenarioConfig) -> float:
    c = float(config.params.get("c", 1.0))
    gamma = 1.0 - c / config.n
    if not 0.0 < gamma < 1.0:
        raise ConfigError(f"gamma_n = 1 - c/n = {gamma} must lie in (0, 1)")
    return gamma


def ar1_transform(config: ScenarioConfig) -> RowModel:
    """
    Weighted-walk form of the AR(1) exit problem: {T(gamma) > n} equals
    {sum_{j<=k} gamma^{-j} X_j > 0 for all k <= n}, so the row has weights
    gamma^{-k}, zero boundary and scale sigma_n(gamma) (EX^2)^{1/2}.
    """
    if config.kind != "ar1":
        raise ConfigError("ar1_transform needs an ar1 scenario")
    gamma = _ar1_gamma(config)
    innovation = _increment(config.params, "innovation", IncrementSpec.uniform_symmetric(math.sqrt(3.0)))
    n = config.n
    increments = [innovation.scaled(gamma ** -k) for k in range(1, n + 1)]
    scale = ar_sigma(gamma, n) * math.sqrt(innovation.variance)
    return RowModel.build(increments, BoundarySpec.zero(n), scale=scale)


def _build_ar1(config: ScenarioConfig) -> BuiltScenario:
    gamma = _ar1_gamma(config)
    model = ar1_transform(config)
    innovation = _increment(config.params, "innovation", IncrementSpec.uniform_symmetric(math.sqrt(3.0)))
    metadata = {
        "gamma": gamma,
        "limit_normalizer": ar_sigma(gamma, config.n),
        "limit_factor": predicted_limit("ar1", {"ex2": innovation.variance}, 1.0),
        "limit_supported": innovation.is_continuous,
        "base_increment": innovation,
    }
    return BuiltScenario(config, model, model.is_lattice, metadata)


BUILDERS = {
    "scaled_iid": _build_scaled_iid,
    "lind": _build_lind,
    "lind2": _build_lind2,
    "gaposhkin": _build_gaposhkin,
    "ar1": _build_ar1,
}


def build(config: ScenarioConfig) -> BuiltScenario:
    """RowModel plus predicted quantities and the exact-solvability flag."""
    if config.kind not in BUILDERS:
        raise ConfigError(f"Unknown scenario kind '{config.kind}'")
    if config.n < 1:
        raise ConfigError("n must be positive")
    bad = set(config.params) - PARAM_KEYS[config.kind]
    if bad:
        raise ConfigError(f"Unknown params for {config.kind}: {sorted(bad)}")
    built = BUILDERS[config.kind](config)
    logger.debug("Built scenario %s n=%d exact=%s", config.label, config.n, built.exact_solvable)
    return built


def ar1_recursion_survival(innovations: np.ndarray, gamma: float) -> np.ndarray:
    """1{T(gamma) > n} per row of innovations, via U_k = gamma U_{k-1} + X_k."""
    U = np.zeros(innovations.shape[0])
    alive = np.ones(innovations.shape[0], dtype=bool)
    for k in range(innovations.shape[1]):
        U = gamma * U + innovations[:, k]
        alive &= U > 0.0
    return alive


def weighted_sum_survival(innovations: np.ndarray, gamma: float) -> np.ndarray:
    """1{sum_{j<=k} gamma^{-j} X_j > 0 for all k} per row of innovations."""
    weights = gamma ** -np.arange(1, innovations.shape[1] + 1, dtype=float)
    partial = np.cumsum(innovations * weights, axis=1)
    return np.all(partial > 0.0, axis=1)
