"""
Monte Carlo estimation of survival probabilities, E_n, the ratio
P(T_n > n) / (sqrt(2/pi) E_n) and overshoot functionals.

Path i draws from its own Philox stream keyed by (seed, i) and step k
consumes the k-th uniform of that stream, so a path's trajectory depends
only on the seed and its index. Paths are grouped in blocks for scheduling
only; blocks return per-path values, which are summed with one exactly
rounded fsum. Estimates are therefore bit-identical for any block size and
any number of workers.
"""
import os
import math
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from errors import ConfigError
from increments import IncrementSpec, SQRT_2_OVER_PI, from_uniform
from results import EstimatorResult, ExitResult
from row_model import RowModel

logger = logging.getLogger(__name__)

DEFAULT_BLOCK_SIZE = 4096
MIN_PATHS = 1000
CHUNK_CELLS = 2 ** 20
MASK64 = (1 << 64) - 1


class RngStream:
    """Counter-based stream keyed by (seed, path index) on numpy's Philox."""

    def __init__(self, seed: int, path_index: int):
        self.seed = int(seed)
        self.path_index = int(path_index)
        self._generator = None

    @property
    def key(self) -> int:
        return ((self.seed & MASK64) << 64) | (self.path_index & MASK64)

    @property
    def generator(self) -> np.random.Generator:
        if self._generator is None:
            self._generator = np.random.Generator(np.random.Philox(key=self.key))
        return self._generator


def workers_from_env() -> int:
    return max(1, int(os.getenv("FPT_WORKERS", "1")))


def _blocks(paths: int, block_size: int) -> List[Tuple[int, int]]:
    """(first path index, block paths) for every block."""
    if block_size < 1:
        raise ConfigError(f"block_size must be positive, got {block_size}")
    return [(start, min(block_size, paths - start)) for start in range(0, paths, block_size)]


def _map_blocks(func, jobs: List[tuple], workers: int) -> list:
    if workers <= 1 or len(jobs) <= 1:
        return [func(*job) for job in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        # map keeps submission order, so the merge below is order-fixed
        return list(pool.map(func, *zip(*jobs)))


def _path_streams(seed: int, first_path: int, block_paths: int) -> List[np.random.Generator]:
    return [RngStream(seed, first_path + j).generator for j in range(block_paths)]


def _uniforms(streams: List[np.random.Generator], alive: np.ndarray, length: int) -> np.ndarray:
    """Next `length` uniforms of every live path, one row per path."""
    return np.stack([streams[j].random(length) for j in alive])


def _steps(specs: Sequence[IncrementSpec], u: np.ndarray) -> np.ndarray:
    if all(spec == specs[0] for spec in specs):
        return from_uniform(specs[0], u)
    return np.column_stack([from_uniform(spec, u[:, t]) for t, spec in enumerate(specs)])


def _first_crossing(walk: np.ndarray, levels) -> np.ndarray:
    """Column of the first crossing per row, or the row length if none."""
    crossed = walk <= levels
    return np.where(crossed.any(axis=1), crossed.argmax(axis=1), walk.shape[1])


@dataclass(frozen=True)
class BlockTally:
    survivors: Tuple[int, ...]
    f_values: np.ndarray


def _simulate_exit_block(model: RowModel, seed: int, first_path: int, block_paths: int,
                         checkpoints: Tuple[int, ...]) -> BlockTally:
    streams = _path_streams(seed, first_path, block_paths)
    boundary = np.asarray(model.walk_boundary, dtype=float)
    n = model.n
    counts: Dict[int, int] = {}
    alive = np.arange(block_paths)
    S = np.zeros(block_paths)
    k = 0
    while k < n:
        length = min(n - k, max(16, CHUNK_CELLS // max(S.size, 1)))
        due = [m for m in checkpoints if k < m <= k + length]
        if S.size:
            walk = S[:, None] + np.cumsum(_steps(model.increments[k:k + length], _uniforms(streams, alive, length)),
                                          axis=1)
            # survival means staying strictly above the boundary
            first = _first_crossing(walk, boundary[k:k + length])
            for m in due:
                counts[m] = int((first >= m - k).sum())
            keep = first == length
            S = walk[keep, -1]
            alive = alive[keep]
        else:
            counts.update((m, 0) for m in due)
        k += length
    return BlockTally(
        survivors=tuple(counts[m] for m in checkpoints),
        f_values=(S - boundary[-1]) / model.scale,
    )


@dataclass(frozen=True)
class ExitEstimates:
    """Joint Monte Carlo estimates for one row."""
    n: int
    paths: int
    survival: Dict[int, EstimatorResult]
    e_n: EstimatorResult
    ratio: EstimatorResult

    @property
    def p_survive(self) -> EstimatorResult:
        return self.survival[self.n]

    def to_exit_result(self) -> ExitResult:
        curve = tuple(self.survival[m].estimate if m in self.survival else math.nan for m in range(1, self.n + 1))
        return ExitResult(
            n=self.n,
            survival=curve,
            e_n=self.e_n.estimate,
            engine="mc",
            survival_se={m: r.std_error for m, r in self.survival.items()},
            e_n_se=self.e_n.std_error,
            paths=self.paths,
            extras={"ratio": self.ratio.estimate, "ratio_se": self.ratio.std_error},
        )


def _indicator_estimate(count: int, paths: int, level: float) -> EstimatorResult:
    p = count / paths
    sample_var = p * (1.0 - p) * paths / (paths - 1)
    return EstimatorResult(p, math.sqrt(sample_var / paths), paths, level)


def simulate_exit(model: RowModel, paths: int, seed: int, checkpoints: Optional[Sequence[int]] = None,
                  level: float = 0.99, workers: Optional[int] = None,
                  block_size: int = DEFAULT_BLOCK_SIZE) -> ExitEstimates:
    """
    Estimates of P(T_n > m) at each checkpoint, of E_n, and of the ratio
    P(T_n > n) / (sqrt(2/pi) E_n) with a delta-method standard error.
    Deterministic for fixed (seed, paths); `block_size` and `workers` only
    change scheduling.
    """
    if paths < MIN_PATHS:
        raise ConfigError(f"simulate_exit needs at least {MIN_PATHS} paths, got {paths}")
    n = model.n
    checkpoints = tuple(sorted(set(checkpoints or ()) | {n}))
    if checkpoints[0] < 1 or checkpoints[-1] > n:
        raise ConfigError(f"checkpoints must lie in 1..{n}")
    workers = workers or workers_from_env()

    jobs = [(model, seed, first, size, checkpoints) for first, size in _blocks(paths, block_size)]
    logger.info("MC exit: n=%d paths=%d blocks=%d workers=%d", n, paths, len(jobs), workers)
    tallies = _map_blocks(_simulate_exit_block, jobs, workers)

    survivors = [sum(t.survivors[i] for t in tallies) for i in range(len(checkpoints))]
    f_values = np.concatenate([t.f_values for t in tallies])
    sum_f = math.fsum(f_values.tolist())
    sum_f2 = math.fsum((f_values * f_values).tolist())

    survival = {m: _indicator_estimate(c, paths, level) for m, c in zip(checkpoints, survivors)}
    p_hat = survival[n].estimate
    e_hat = sum_f / paths
    var_f = max(sum_f2 - paths * e_hat * e_hat, 0.0) / (paths - 1)
    var_i = p_hat * (1.0 - p_hat) * paths / (paths - 1)
    # F vanishes off {T > n}, so sum(I * F) = sum(F)
    cov = (sum_f - paths * p_hat * e_hat) / (paths - 1)
    e_n = EstimatorResult(e_hat, math.sqrt(var_f / paths), paths, level)

    if e_hat > 0.0:
        scale = SQRT_2_OVER_PI * e_hat
        ratio = p_hat / scale
        grad_p = 1.0 / scale
        grad_e = -p_hat / (scale * e_hat)
        var_ratio = grad_p * grad_p * var_i + 2.0 * grad_p * grad_e * cov + grad_e * grad_e * var_f
        ratio_est = EstimatorResult(ratio, math.sqrt(max(var_ratio, 0.0) / paths), paths, level, covariance=cov)
    else:
        ratio_est = EstimatorResult(math.nan, math.nan, paths, level, covariance=cov)

    return ExitEstimates(n=n, paths=paths, survival=survival, e_n=e_n, ratio=ratio_est)


@dataclass(frozen=True)
class OvershootEstimate:
    result: EstimatorResult
    truncation_fraction: float


@dataclass(frozen=True)
class OvershootTally:
    depths: np.ndarray
    survivors: int


def _boundary_window(boundary: Union[float, np.ndarray], start: int, length: int) -> Union[float, np.ndarray]:
    if np.ndim(boundary) == 0:
        return float(boundary)
    return boundary[start:start + length]


def _overshoot_block(spec: IncrementSpec, boundary, horizon: int, seed: int, first_path: int,
                     block_paths: int) -> OvershootTally:
    streams = _path_streams(seed, first_path, block_paths)
    alive = np.arange(block_paths)
    S = np.zeros(block_paths)
    depths: List[np.ndarray] = []
    k = 0
    while S.size and k < horizon:
        length = min(horizon - k, max(16, CHUNK_CELLS // S.size))
        walk = S[:, None] + np.cumsum(from_uniform(spec, _uniforms(streams, alive, length)), axis=1)
        first = _first_crossing(walk, _boundary_window(boundary, k, length))
        hit = first < length
        depths.append(-walk[hit, first[hit]])
        S = walk[~hit, -1]
        alive = alive[~hit]
        k += length
    return OvershootTally(
        depths=np.concatenate(depths) if depths else np.zeros(0),
        survivors=int(S.size),
    )


def estimate_overshoot(increments: IncrementSpec, boundary: Union[float, Sequence[float]], horizon: int,
                       paths: int, seed: int, level: float = 0.99, workers: Optional[int] = None,
                       block_size: int = DEFAULT_BLOCK_SIZE) -> OvershootEstimate:
    """
    Estimate E[-S_tau; tau <= H] for the iid walk with steps `increments`
    and tau = inf{k : S_k <= g_k}. Paths alive at H contribute zero and are
    reported as the truncation fraction; the caller judges adequacy.
    """
    if horizon < 1 or paths < 2:
        raise ConfigError("estimate_overshoot needs horizon >= 1 and paths >= 2")
    levels = float(boundary) if np.ndim(boundary) == 0 else np.asarray(boundary, dtype=float)[:horizon]
    if np.ndim(levels) and levels.size < horizon:
        raise ConfigError(f"Boundary has {levels.size} levels for horizon {horizon}")
    workers = workers or workers_from_env()

    jobs = [(increments, levels, horizon, seed, first, size) for first, size in _blocks(paths, block_size)]
    tallies = _map_blocks(_overshoot_block, jobs, workers)

    depth = np.concatenate([t.depths for t in tallies])
    total = math.fsum(depth.tolist())
    total2 = math.fsum((depth * depth).tolist())
    survivors = sum(t.survivors for t in tallies)
    mean = total / paths
    var = max(total2 - paths * mean * mean, 0.0) / (paths - 1)
    truncation = survivors / paths
    if truncation > 0.0:
        logger.info("Overshoot: %.3g of paths still alive at horizon %d", truncation, horizon)
    return OvershootEstimate(EstimatorResult(mean, math.sqrt(var / paths), paths, level), truncation)
