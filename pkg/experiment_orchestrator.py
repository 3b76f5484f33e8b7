import os
import json
import math
import time
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np

from errors import ConfigError, EngineMismatchError
from exact_engine import exit_exact
from file_generator import FileGenerator
from increments import SQRT_2_OVER_PI
from mc_engine import DEFAULT_BLOCK_SIZE, estimate_overshoot, simulate_exit, workers_from_env
from row_model import diagnostics
from run_logger import RunLogger
from safe_print_utils import safe_print_global as safe_print
from scenarios import BuiltScenario, ScenarioConfig, build
from theory import RateFit, bound_report, main_asymptotic, rate_fit

logger = logging.getLogger(__name__)

ENGINES = ("exact", "mc", "both")
RUN_SPEC_KEYS = {"scenarios", "n_grid", "engine", "mc", "output", "bounds", "checkpoint_fractions",
                 "include_timing", "overshoot"}
MC_KEYS = {"paths", "seed", "ci_level", "block_size"}
OUTPUT_KEYS = {"csv", "json", "plot_data", "xlsx"}
BOUND_KEYS = {"c1", "c2"}
OVERSHOOT_KEYS = {"horizon", "paths", "seed"}


def _reject_unknown(data: Dict, allowed: set, where: str):
    if not isinstance(data, dict):
        raise ConfigError(f"'{where}' must be an object")
    unknown = set(data) - allowed
    if unknown:
        raise ConfigError(f"Unknown keys in {where}: {sorted(unknown)}")


@dataclass
class RunSpec:
    """Parsed run specification. Unknown keys anywhere are rejected."""
    scenarios: List[ScenarioConfig]
    n_grid: List[int]
    engine: str = "exact"
    paths: int = 100000
    seed: int = 1
    ci_level: float = 0.99
    block_size: int = DEFAULT_BLOCK_SIZE
    outputs: Dict[str, str] = field(default_factory=dict)
    c1: float = 1.0
    c2: float = 1.0
    checkpoint_fractions: Tuple[float, ...] = (0.25, 0.5, 1.0)
    include_timing: bool = False
    overshoot: Optional[Dict[str, int]] = None
    raw: Optional[Dict] = None

    @classmethod
    def from_dict(cls, data: Dict) -> "RunSpec":
        _reject_unknown(data, RUN_SPEC_KEYS, "run spec")
        n_grid = [int(n) for n in data.get("n_grid", [])]
        if not n_grid:
            raise ConfigError("n_grid is empty")
        if any(b <= a for a, b in zip(n_grid, n_grid[1:])) or n_grid[0] < 1:
            raise ConfigError("n_grid must be positive and strictly increasing")
        raw_scenarios = data.get("scenarios") or []
        if not raw_scenarios:
            raise ConfigError("Run spec has no scenarios")
        scenarios = [ScenarioConfig.from_dict(s, n=n_grid[0]) for s in raw_scenarios]
        labels = [s.label for s in scenarios]
        if len(set(labels)) != len(labels):
            raise ConfigError(f"Scenario names must be unique, got {labels}")

        engine = data.get("engine", "exact")
        if engine not in ENGINES:
            raise ConfigError(f"engine must be one of {ENGINES}, got '{engine}'")
        mc = data.get("mc", {})
        _reject_unknown(mc, MC_KEYS, "mc")
        outputs = data.get("output", {})
        _reject_unknown(outputs, OUTPUT_KEYS, "output")
        bounds = data.get("bounds", {})
        _reject_unknown(bounds, BOUND_KEYS, "bounds")
        overshoot = data.get("overshoot")
        if overshoot is not None:
            _reject_unknown(overshoot, OVERSHOOT_KEYS, "overshoot")

        fractions = tuple(float(x) for x in data.get("checkpoint_fractions", (0.25, 0.5, 1.0)))
        if not fractions or any(not 0.0 < x <= 1.0 for x in fractions):
            raise ConfigError("checkpoint_fractions must lie in (0, 1]")
        spec = cls(
            scenarios=scenarios,
            n_grid=n_grid,
            engine=engine,
            paths=int(mc.get("paths", 100000)),
            seed=int(mc.get("seed", 1)),
            ci_level=float(mc.get("ci_level", 0.99)),
            block_size=int(mc.get("block_size", DEFAULT_BLOCK_SIZE)),
            outputs=dict(outputs),
            c1=float(bounds.get("c1", 1.0)),
            c2=float(bounds.get("c2", 1.0)),
            checkpoint_fractions=fractions,
            include_timing=bool(data.get("include_timing", False)),
            overshoot=dict(overshoot) if overshoot is not None else None,
            raw=data,
        )
        if engine != "exact" and spec.paths < 1000:
            raise ConfigError("mc.paths must be at least 1000")
        if not 0.0 < spec.ci_level < 1.0:
            raise ConfigError("mc.ci_level must lie in (0, 1)")
        return spec

    @classmethod
    def load(cls, path: str) -> "RunSpec":
        try:
            with open(path, 'r', encoding='utf-8') as f:
                data = json.load(f)
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"Cannot read run spec {path}: {e}") from e
        return cls.from_dict(data)

    def jobs(self) -> List[Tuple[ScenarioConfig, int, str]]:
        engines = ["exact", "mc"] if self.engine == "both" else [self.engine]
        return [(s.with_n(n), n, e) for s in self.scenarios for n in self.n_grid for e in engines]


def _checkpoints(n: int, fractions: Tuple[float, ...]) -> List[int]:
    return sorted({min(n, max(1, math.ceil(x * n))) for x in fractions} | {n})


def _mc_seed(base_seed: int, config: ScenarioConfig, n: int) -> int:
    return int(np.random.SeedSequence([base_seed, config.seed, n]).generate_state(1)[0])


def _prediction(built: BuiltScenario, overshoot: Optional[float]) -> Tuple[Optional[str], Optional[float]]:
    """What the predicted_limit column predicts, and its value."""
    meta = built.metadata
    if "predicted_ratio" in meta:
        # P/E_n limit expressed on the ratio column's sqrt(2/pi) scale
        return "ratio", meta["predicted_ratio"] / SQRT_2_OVER_PI
    if meta.get("limit_supported") and meta.get("limit_factor") is not None and overshoot is not None:
        return "normalized_P", meta["limit_factor"] * overshoot
    return None, None


def compute_row(config: ScenarioConfig, n: int, engine: str, spec: RunSpec,
                overshoot: Optional[float] = None) -> Dict:
    """One result row for (scenario, n, engine)."""
    started = time.perf_counter()
    built = build(config)
    model = built.model
    diag = diagnostics(model)
    checkpoints = _checkpoints(n, spec.checkpoint_fractions)

    if engine == "exact":
        if not built.exact_solvable:
            raise EngineMismatchError(f"Scenario '{config.label}' (n={n}) is not exactly solvable")
        result = exit_exact(model)
        p, p_se, e_n, e_n_se = result.p_survive, 0.0, result.e_n, 0.0
        ratio = p / main_asymptotic(e_n) if e_n > 0.0 else math.nan
        ratio_se = 0.0
    else:
        est = simulate_exit(model, spec.paths, _mc_seed(spec.seed, config, n), checkpoints,
                            level=spec.ci_level, workers=1, block_size=spec.block_size)
        p, p_se = est.p_survive.estimate, est.p_survive.std_error
        e_n, e_n_se = est.e_n.estimate, est.e_n.std_error
        ratio, ratio_se = est.ratio.estimate, est.ratio.std_error

    report = bound_report(max(e_n, 0.0), diag, n, spec.c1, spec.c2)
    target, predicted = _prediction(built, overshoot)
    normalizer = built.metadata.get("limit_normalizer")
    row = {
        "scenario": config.label,
        "n": n,
        "engine": engine,
        "P": p,
        "P_se": p_se,
        "E_n": e_n,
        "E_n_se": e_n_se,
        "ratio": ratio,
        "ratio_se": ratio_se,
        "P_over_E_n": p / e_n if e_n > 0.0 else math.nan,
        "rho": diag.rho,
        "B_checkpoints": tuple(diag.B_at(m) for m in checkpoints),
        "main_prediction": report.main_prediction,
        "tail_bound": report.tail_bound,
        "tail_bound_applicable": report.tail_bound_applicable,
        "lower_bound": report.lower_bound,
        "upper_bound": report.upper_bound,
        "upper_bound_valid": report.upper_bound_valid,
        "normalized_P": normalizer * p if normalizer is not None else None,
        "predicted_target": target,
        "predicted_limit": predicted,
    }
    row["runtime_ms"] = (time.perf_counter() - started) * 1000.0
    return row


def _compute_job(args) -> Dict:
    return compute_row(*args)


class ExperimentOrchestrator:
    """
    Runs every (scenario, n, engine) job of a RunSpec on a worker pool and
    writes the result files. Rows come out in (scenario, n, engine) order
    regardless of completion order.
    """

    def __init__(self, spec: RunSpec, message_callback: Optional[Callable[[str], None]] = None,
                 workers: Optional[int] = None, run_logger: Optional[RunLogger] = None):
        self.spec = spec
        self.message_callback = message_callback
        self.workers = workers or workers_from_env()
        self.run_logger = run_logger
        self.rows: List[Dict] = []

    def _notify(self, message: str):
        if self.message_callback:
            self.message_callback(message)
        else:
            safe_print(message)

    def validate(self):
        """engine=exact needs exactly solvable scenarios; checked before any work starts."""
        if self.spec.engine != "exact":
            return
        for config in self.spec.scenarios:
            for n in self.spec.n_grid:
                if not build(config.with_n(n)).exact_solvable:
                    raise EngineMismatchError(
                        f"engine=exact but scenario '{config.label}' is not exactly solvable at n={n}")

    def _overshoots(self) -> Dict[str, float]:
        """MC overshoot E[-S_tau] of each scenario's base increment, when requested."""
        if not self.spec.overshoot:
            return {}
        horizon = int(self.spec.overshoot.get("horizon", 10 ** 5))
        paths = int(self.spec.overshoot.get("paths", 10 ** 5))
        seed = int(self.spec.overshoot.get("seed", self.spec.seed))
        values = {}
        for config in self.spec.scenarios:
            built = build(config)
            base = built.metadata.get("base_increment")
            if base is None or not built.metadata.get("limit_supported"):
                continue
            self._notify(f"[OVERSHOOT] Estimating E[-S_tau] for '{config.label}' (H={horizon}, paths={paths})...")
            est = estimate_overshoot(base, 0.0, horizon, paths, seed, workers=self.workers)
            if est.truncation_fraction > 1e-3:
                self._notify(f"[WARNING] {est.truncation_fraction:.2e} of overshoot paths survived the horizon")
            values[config.label] = est.result.estimate
        return values

    def _execute_jobs(self, jobs: List[Tuple[ScenarioConfig, int, str]], overshoots: Dict[str, float]) -> List[Dict]:
        if self.spec.engine == "both":
            runnable = []
            for config, n, engine in jobs:
                if engine == "exact" and not build(config).exact_solvable:
                    logger.warning("Skipping exact engine for '%s' n=%d (not exactly solvable)", config.label, n)
                    continue
                runnable.append((config, n, engine))
            jobs = runnable
        payloads = [(config, n, engine, self.spec, overshoots.get(config.label)) for config, n, engine in jobs]
        if self.workers <= 1 or len(payloads) <= 1:
            return [_compute_job(p) for p in payloads]
        with ProcessPoolExecutor(max_workers=self.workers) as pool:
            return list(pool.map(_compute_job, payloads))

    def run(self) -> List[Dict]:
        """Validate, run all jobs, write the configured outputs."""
        self.validate()
        jobs = self.spec.jobs()
        self._notify(f"[RUN] {len(jobs)} job(s) on {self.workers} worker(s), engine={self.spec.engine}")
        if self.run_logger:
            self.run_logger.log_run_start([s.label for s in self.spec.scenarios], self.spec.n_grid, self.spec.engine)

        overshoots = self._overshoots()
        self.rows = self._execute_jobs(jobs, overshoots)
        for row in self.rows:
            self._notify(f"[ROW] {row['scenario']} n={row['n']} {row['engine']}: "
                         f"P={row['P']:.6g} E_n={row['E_n']:.6g} ratio={row['ratio']:.6g}")
            if self.run_logger:
                self.run_logger.log_row(row)

        if self.spec.outputs:
            FileGenerator(self.spec.include_timing).write_all(self.rows, self.spec.outputs, self.spec.raw)
        if self.run_logger:
            self.run_logger.log_run_end(len(self.rows))
            self.run_logger.close()
        return self.rows


def ratio_rate_fit(rows: List[Dict], engine: str = "exact") -> RateFit:
    """Decay exponent of |ratio - 1| in rho over the rows of one engine."""
    points = [(row["rho"], abs(row["ratio"] - 1.0)) for row in rows
              if row["engine"] == engine and math.isfinite(row["ratio"])]
    return rate_fit(points)


def sweep_spec(kind: str, n_grid: List[int], engine: str, params: Dict, paths: int, seed: int,
               output_dir: Optional[str]) -> RunSpec:
    """In-memory RunSpec for the `sweep` shorthand."""
    data = {
        "scenarios": [{"kind": kind, "params": params, "name": f"{kind}-sweep"}],
        "n_grid": n_grid,
        "engine": engine,
        "mc": {"paths": paths, "seed": seed},
    }
    if output_dir:
        data["output"] = {
            "csv": os.path.join(output_dir, f"{kind}_sweep.csv"),
            "plot_data": os.path.join(output_dir, f"{kind}_sweep_plot.csv"),
        }
    return RunSpec.from_dict(data)
