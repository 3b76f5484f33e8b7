import math

import numpy as np
import pytest

from errors import ConfigError
from exact_engine import exit_exact
from increments import IncrementSpec, SQRT_2_OVER_PI
from mc_engine import RngStream, estimate_overshoot, simulate_exit
from row_model import BoundarySpec, RowModel
from scenarios import ScenarioConfig, build


def ssrw(n, g=0.0):
    return RowModel.build([IncrementSpec.rademacher()] * n, BoundarySpec.constant(g, n))


def lind2_row(n, level):
    return RowModel.build([IncrementSpec.three_point(level)] + [IncrementSpec.rademacher()] * (n - 1),
                          BoundarySpec.zero(n))


def within(estimate, target, se, k=4.0):
    return abs(estimate - target) <= k * se


def test_rng_stream_key():
    stream = RngStream(3, 5)
    assert stream.key == (3 << 64) | 5
    first = RngStream(3, 5).generator.random(4)
    assert np.array_equal(first, RngStream(3, 5).generator.random(4))
    assert not np.array_equal(first, RngStream(3, 6).generator.random(4))
    assert not np.array_equal(first, RngStream(4, 5).generator.random(4))


def test_too_few_paths():
    with pytest.raises(ConfigError):
        simulate_exit(ssrw(10), 999, seed=1)


def test_checkpoints_out_of_range():
    with pytest.raises(ConfigError):
        simulate_exit(ssrw(10), 1000, seed=1, checkpoints=[11])


def test_bad_block_size():
    with pytest.raises(ConfigError):
        simulate_exit(ssrw(10), 1000, seed=1, block_size=0)


def test_estimates_do_not_depend_on_worker_count():
    model = ssrw(60, g=-1.0)
    serial = simulate_exit(model, 20000, seed=9, checkpoints=[15, 30], workers=1)
    parallel = simulate_exit(model, 20000, seed=9, checkpoints=[15, 30], workers=3)
    assert serial.e_n.estimate == parallel.e_n.estimate
    assert serial.ratio.estimate == parallel.ratio.estimate
    for m in (15, 30, 60):
        assert serial.survival[m].estimate == parallel.survival[m].estimate


@pytest.mark.parametrize("block_size", [1, 1000, 7777])
def test_estimates_do_not_depend_on_block_size(block_size):
    model = ssrw(60)
    paths = 20000 if block_size > 1 else 2000
    reference = simulate_exit(model, paths, seed=9, checkpoints=[15, 30], workers=1)
    other = simulate_exit(model, paths, seed=9, checkpoints=[15, 30], workers=1, block_size=block_size)
    assert other.e_n.estimate == reference.e_n.estimate
    assert other.e_n.std_error == reference.e_n.std_error
    for m in (15, 30, 60):
        assert other.survival[m].estimate == reference.survival[m].estimate


def test_mixed_row_does_not_depend_on_block_size():
    model = lind2_row(80, 6)
    a = simulate_exit(model, 5000, seed=3, workers=1, block_size=4096)
    b = simulate_exit(model, 5000, seed=3, workers=1, block_size=333)
    assert a.p_survive.estimate == b.p_survive.estimate
    assert a.e_n.estimate == b.e_n.estimate


def test_path_trajectory_is_a_function_of_seed_and_index():
    # a single path is fixed by its own stream: the k-th uniform drives step k
    u = RngStream(21, 1234).generator.random(40)
    steps = np.where(u < 0.5, -1.0, 1.0)
    survived = bool(np.all(np.cumsum(steps) > 0.0))
    est = simulate_exit(ssrw(40), 1235, seed=21, workers=1, block_size=1)
    trimmed = simulate_exit(ssrw(40), 1234, seed=21, workers=1, block_size=500)
    extra = round(est.p_survive.estimate * 1235) - round(trimmed.p_survive.estimate * 1234)
    assert extra == int(survived)


def test_same_seed_same_estimates():
    a = simulate_exit(ssrw(30), 5000, seed=4, workers=1)
    b = simulate_exit(ssrw(30), 5000, seed=4, workers=1)
    c = simulate_exit(ssrw(30), 5000, seed=5, workers=1)
    assert a.p_survive.estimate == b.p_survive.estimate
    assert a.e_n.estimate != c.e_n.estimate


def test_ssrw_estimates_agree_with_exact():
    model = ssrw(100)
    exact = exit_exact(model)
    est = simulate_exit(model, 100000, seed=2018, checkpoints=[25, 50], workers=1)
    for m in (25, 50, 100):
        r = est.survival[m]
        assert within(r.estimate, exact.survival_at(m), r.std_error)
    assert within(est.e_n.estimate, exact.e_n, est.e_n.std_error)
    exact_ratio = exact.p_survive / (SQRT_2_OVER_PI * exact.e_n)
    assert within(est.ratio.estimate, exact_ratio, est.ratio.std_error)
    assert est.ratio.covariance is not None


def test_lind2_estimates_agree_with_exact():
    model = lind2_row(100, 10)
    exact = exit_exact(model)
    est = simulate_exit(model, 200000, seed=11, workers=1)
    assert within(est.p_survive.estimate, exact.p_survive, est.p_survive.std_error)
    assert within(est.e_n.estimate, exact.e_n, est.e_n.std_error)


def test_exit_result_view():
    est = simulate_exit(ssrw(20), 2000, seed=1, checkpoints=[10], workers=1)
    result = est.to_exit_result()
    assert result.engine == "mc"
    assert result.paths == 2000
    assert result.survival_at(10) == est.survival[10].estimate
    assert math.isnan(result.survival_at(5))
    assert result.p_survive == est.p_survive.estimate


def test_ci_is_symmetric_around_estimate():
    est = simulate_exit(ssrw(20), 4000, seed=8, level=0.95, workers=1)
    lo, hi = est.e_n.ci
    assert est.e_n.estimate - lo == pytest.approx(hi - est.e_n.estimate)
    assert est.e_n.half_width == pytest.approx(1.959963984540054 * est.e_n.std_error)
    assert est.e_n.covers(est.e_n.estimate)
    assert not est.e_n.covers(hi + est.e_n.std_error)


def test_ssrw_overshoot_estimate():
    est = estimate_overshoot(IncrementSpec.rademacher(), 0.0, 200, 20000, seed=3, workers=1)
    assert within(est.result.estimate, 0.5, est.result.std_error)


def test_overshoot_does_not_depend_on_block_size():
    spec = IncrementSpec.uniform_symmetric(math.sqrt(3.0))
    a = estimate_overshoot(spec, 0.0, 500, 6000, seed=5, workers=1)
    b = estimate_overshoot(spec, 0.0, 500, 6000, seed=5, workers=1, block_size=999)
    assert a.result.estimate == b.result.estimate
    assert a.truncation_fraction == b.truncation_fraction


def test_uniform_overshoot_matches_ladder_height():
    # symmetric continuous steps with unit variance: E[-S_tau] = 1/sqrt(2)
    spec = IncrementSpec.uniform_symmetric(math.sqrt(3.0))
    est = estimate_overshoot(spec, 0.0, 4000, 20000, seed=12, workers=1)
    assert est.truncation_fraction < 0.05
    assert abs(est.result.estimate - 1.0 / math.sqrt(2.0)) < 4.0 * est.result.std_error + est.truncation_fraction


def test_overshoot_with_moving_boundary():
    # +-1 steps against g = -1 always stop exactly at -1
    boundary = [-1.0] * 50
    est = estimate_overshoot(IncrementSpec.rademacher(), boundary, 50, 5000, seed=1, workers=1)
    assert 0.0 < est.truncation_fraction < 1.0
    assert est.result.estimate == pytest.approx(1.0 - est.truncation_fraction, abs=1e-12)
    with pytest.raises(ConfigError):
        estimate_overshoot(IncrementSpec.rademacher(), boundary, 60, 5000, seed=1)


@pytest.mark.slow
def test_million_path_lind2_acceptance():
    model = lind2_row(400, 20)
    exact = exit_exact(model)
    est = simulate_exit(model, 10 ** 6, seed=20180301, checkpoints=[100, 200], workers=2)
    assert within(est.p_survive.estimate, exact.p_survive, est.p_survive.std_error)
    assert within(est.e_n.estimate, exact.e_n, est.e_n.std_error)
    exact_ratio = exact.p_survive / (SQRT_2_OVER_PI * exact.e_n)
    assert within(est.ratio.estimate, exact_ratio, est.ratio.std_error)


def _solvable_scenarios():
    configs = [ScenarioConfig("scaled_iid", n, {"g": g}) for n in (10, 25, 50, 100) for g in (0.0, -1.0, -3.0)]
    configs += [ScenarioConfig("lind2", n, {"N": level}) for n, level in ((100, 1), (100, 5), (100, 10), (400, 20))]
    configs += [ScenarioConfig("lind", n, {"M": 1.0}) for n in (10, 20)]
    configs += [ScenarioConfig("scaled_iid", n, {"increment": {"kind": "three_point", "N": 2}}) for n in (30, 60)]
    return configs


@pytest.mark.slow
def test_mc_agrees_with_exact_on_solvable_scenarios():
    configs = _solvable_scenarios()
    assert len(configs) == 20
    for i, config in enumerate(configs):
        built = build(config)
        assert built.exact_solvable
        exact = exit_exact(built.model)
        est = simulate_exit(built.model, 10 ** 6, seed=1000 + i, workers=4)
        assert within(est.p_survive.estimate, exact.p_survive, est.p_survive.std_error), config.label
        assert within(est.e_n.estimate, exact.e_n, est.e_n.std_error), config.label


@pytest.mark.slow
def test_ci_coverage_over_seeds():
    model = ssrw(20)
    exact = exit_exact(model).p_survive
    covered = sum(simulate_exit(model, 4000, seed=seed, workers=1).p_survive.covers(exact) for seed in range(200))
    assert covered >= 193


@pytest.mark.slow
def test_standard_error_scales_with_paths():
    model = ssrw(100)
    small = simulate_exit(model, 10 ** 4, seed=31, workers=1)
    large = simulate_exit(model, 10 ** 6, seed=31, workers=4)
    assert 8.0 <= small.p_survive.std_error / large.p_survive.std_error <= 12.5
    assert 8.0 <= small.e_n.std_error / large.e_n.std_error <= 12.5


def _uniform_overshoot(seed):
    spec = IncrementSpec.uniform_symmetric(math.sqrt(3.0))
    est = estimate_overshoot(spec, 0.0, 10 ** 6, 10 ** 5, seed=seed, workers=4)
    assert est.truncation_fraction < 1e-3
    return est.result


@pytest.mark.slow
def test_ar1_normalized_survival_is_stable_and_matches_overshoot():
    normalized = []
    for n in (10 ** 3, 10 ** 4):
        built = build(ScenarioConfig("ar1", n, {"c": 1.0}))
        est = simulate_exit(built.model, 10 ** 6, seed=n, workers=4)
        sigma = built.metadata["limit_normalizer"]
        normalized.append((sigma * est.p_survive.estimate, sigma * est.p_survive.std_error))
    (a, a_se), (b, b_se) = normalized
    assert within(a, b, math.hypot(a_se, b_se), k=3.0)

    overshoot = _uniform_overshoot(seed=77)
    factor = built.metadata["limit_factor"]
    assert within(b, factor * overshoot.estimate, math.hypot(b_se, factor * overshoot.std_error))


@pytest.mark.slow
def test_gaposhkin_affine_weight_matches_overshoot():
    n = 10 ** 4
    built = build(ScenarioConfig("gaposhkin", n, {"f": {"family": "affine", "a": 1.0, "b": 1.0}}))
    est = simulate_exit(built.model, 10 ** 6, seed=2, workers=4)
    root_n = math.sqrt(n)
    overshoot = _uniform_overshoot(seed=78)
    factor = built.metadata["limit_factor"]
    combined = math.hypot(root_n * est.p_survive.std_error, factor * overshoot.std_error)
    assert within(root_n * est.p_survive.estimate, factor * overshoot.estimate, combined)
