import math

import numpy as np
import pytest

from errors import ConfigError
from exact_engine import exit_exact
from increments import IncrementSpec, SQRT_2_OVER_PI
from scenarios import (ScenarioConfig, WeightFunction, ar1_recursion_survival, ar1_transform, build,
                       resolve_level, weighted_sum_survival)
from theory import ar_sigma, regime_ratio


def test_resolve_level_rules():
    assert resolve_level(5, 100) == 5.0
    assert resolve_level({"rule": "fixed", "value": 3}, 100) == 3.0
    assert resolve_level({"rule": "sqrt", "a": 1.0}, 1600) == 40.0
    assert resolve_level({"rule": "sqrt", "a": 0.001}, 100) == 1.0
    assert resolve_level({"rule": "linear", "M": 2.0}, 10) == 21.0
    with pytest.raises(ConfigError):
        resolve_level({"rule": "cubic"}, 10)
    with pytest.raises(ConfigError):
        resolve_level("ten", 10)


def test_scenario_config_rejects_unknown_keys():
    with pytest.raises(ConfigError):
        ScenarioConfig.from_dict({"kind": "lind2", "n": 10, "colour": "red"})
    with pytest.raises(ConfigError):
        ScenarioConfig.from_dict({"kind": "lind2", "n": 10, "params": {"M": 1.0}})
    with pytest.raises(ConfigError):
        ScenarioConfig.from_dict({"kind": "brownian", "n": 10})
    with pytest.raises(ConfigError):
        ScenarioConfig.from_dict({"kind": "lind2"})


def test_scenario_config_dict_round_trip():
    config = ScenarioConfig.from_dict({"kind": "ar1", "n": 50, "params": {"c": 2.0}, "seed": 4, "name": "ar"})
    assert ScenarioConfig.from_dict(config.to_dict()) == config
    assert config.label == "ar"
    assert config.with_n(80).n == 80


def test_lind_above_threshold_matches_identity():
    built = build(ScenarioConfig("lind", 20, {}))
    level = 21.0
    assert built.metadata["N_n"] == level
    assert built.exact_solvable
    result = exit_exact(built.model)
    assert result.p_survive == pytest.approx(built.metadata["predicted_p"], rel=1e-12)
    assert result.e_n == pytest.approx(built.metadata["predicted_e_n"], rel=1e-12)
    assert result.p_survive / result.e_n == pytest.approx(built.metadata["predicted_ratio"], rel=1e-10)


def test_lind_below_threshold():
    built = build(ScenarioConfig("lind", 20, {"N": 5}))
    assert "predicted_p" not in built.metadata
    with pytest.raises(ConfigError):
        build(ScenarioConfig("lind", 20, {"N": 5, "require_identity": True}))


def test_lind_base_law_must_be_bounded_by_M():
    base = IncrementSpec.finite_discrete([(-2.0, 0.125), (0.0, 0.75), (2.0, 0.125)]).to_dict()
    with pytest.raises(ConfigError):
        build(ScenarioConfig("lind", 10, {"base": base, "M": 1.0}))


def test_lind2_ratio_regime():
    built = build(ScenarioConfig("lind2", 1600, {"N": {"rule": "sqrt", "a": 1.0}}))
    assert built.metadata["N_n"] == 40.0
    assert built.metadata["r_n"] == pytest.approx(1.0)
    result = exit_exact(built.model)
    # the surviving mean is p N_n exactly, by the martingale property
    assert result.e_n == pytest.approx(built.metadata["predicted_e_n"], rel=1e-10)
    assert result.p_survive / result.e_n == pytest.approx(0.6827, abs=0.01)


def test_lind2_needs_natural_level():
    with pytest.raises(ConfigError):
        build(ScenarioConfig("lind2", 100, {"N": 2.5}))


def test_scaled_iid_solvability():
    assert build(ScenarioConfig("scaled_iid", 50, {})).exact_solvable
    uniform = {"increment": {"kind": "uniform_symmetric", "b": math.sqrt(3.0)}}
    built = build(ScenarioConfig("scaled_iid", 50, uniform))
    assert not built.exact_solvable
    assert built.metadata["limit_supported"]
    assert built.model.scale == pytest.approx(math.sqrt(50.0))


def test_scaled_iid_boundary():
    built = build(ScenarioConfig("scaled_iid", 16, {"g": -2.0}))
    assert built.model.scaled_boundary.tolist() == [-0.5] * 16
    assert not built.metadata["limit_supported"]


def test_gaposhkin_constant_weight_reduces_to_scaled_iid():
    increment = {"kind": "uniform_symmetric", "b": 1.0}
    gap = build(ScenarioConfig("gaposhkin", 30, {"increment": increment, "f": {"family": "constant", "c": 1.0}}))
    iid = build(ScenarioConfig("scaled_iid", 30, {"increment": increment}))
    assert gap.model.increments == iid.model.increments
    assert gap.model.scale == pytest.approx(iid.model.scale)


def test_gaposhkin_affine_limit_factor():
    built = build(ScenarioConfig("gaposhkin", 100, {"f": {"family": "affine", "a": 1.0, "b": 1.0}}))
    assert built.metadata["sigma_f"] == pytest.approx(math.sqrt(7.0 / 3.0))
    assert built.metadata["limit_factor"] == pytest.approx(SQRT_2_OVER_PI / math.sqrt(7.0 / 3.0))
    # with the unit-variance uniform overshoot 1/sqrt(2)
    assert built.metadata["limit_factor"] / math.sqrt(2.0) == pytest.approx(0.3694, abs=1e-4)


def test_gaposhkin_vanishing_weight_is_uninformative():
    built = build(ScenarioConfig("gaposhkin", 40, {"f": {"family": "power", "alpha": 1.0}}))
    assert built.metadata["limit_factor"] is None
    assert not built.metadata["limit_supported"]


def test_gaposhkin_zero_weights_become_constant_steps():
    built = build(ScenarioConfig("gaposhkin", 4, {"f": {"family": "grid", "values": [1.0, 0.0]}}))
    assert built.model.increments[-1].discrete_atoms() == ((0.0, 1.0),)


def test_weight_function_families():
    assert WeightFunction.from_dict({"family": "grid", "values": [1.0, 3.0]})(0.5) == pytest.approx(2.0)
    assert WeightFunction.from_dict({"family": "power", "alpha": 2.0})(0.5) == pytest.approx(0.25)
    assert WeightFunction.from_dict({"family": "affine", "a": 2.0, "b": -1.0}).f0 == 2.0
    with pytest.raises(ConfigError):
        WeightFunction.from_dict({"family": "power", "alpha": -1.0})
    with pytest.raises(ConfigError):
        WeightFunction.from_dict({"family": "grid", "values": [1.0]})
    with pytest.raises(ConfigError):
        WeightFunction.from_dict({"family": "spline"})


def test_ar1_transform_scale():
    config = ScenarioConfig("ar1", 200, {"c": 1.0})
    model = ar1_transform(config)
    gamma = 1.0 - 1.0 / 200
    assert model.scale == pytest.approx(ar_sigma(gamma, 200))
    assert not model.is_lattice
    built = build(config)
    assert built.metadata["gamma"] == pytest.approx(gamma)
    assert not built.exact_solvable


def test_ar1_gamma_must_be_in_unit_interval():
    with pytest.raises(ConfigError):
        build(ScenarioConfig("ar1", 10, {"c": 10.0}))
    with pytest.raises(ConfigError):
        ar1_transform(ScenarioConfig("lind2", 10, {}))


def test_ar1_recursion_and_weighted_sums_agree():
    rng = np.random.default_rng(5)
    gamma = 1.0 - 1.0 / 50
    innovations = rng.uniform(-1.0, 1.0, size=(2000, 50))
    direct = ar1_recursion_survival(innovations, gamma)
    weighted = weighted_sum_survival(innovations, gamma)
    assert np.array_equal(direct, weighted)
    assert 0 < direct.sum() < 2000


@pytest.mark.parametrize("n", [10, 50, 100])
def test_lind_closed_forms(n):
    built = build(ScenarioConfig("lind", n, {"M": 1.0}))
    level = n + 1.0
    result = exit_exact(built.model)
    p = 1.0 / (2.0 * level * level)
    assert result.p_survive == pytest.approx(p, abs=1e-12)
    assert result.e_n == pytest.approx(p * level / math.sqrt(n), abs=1e-12)
    assert result.p_survive / result.e_n == pytest.approx(math.sqrt(n) / level)
    assert result.p_survive / result.e_n < 1.0


def test_lind2_regimes_at_ten_thousand():
    n = 10 ** 4
    built = build(ScenarioConfig("lind2", n, {"N": {"rule": "sqrt", "a": 1.0}}))
    result = exit_exact(built.model)
    r_n = built.metadata["r_n"]
    assert result.p_survive / result.e_n == pytest.approx(regime_ratio(r_n), rel=0.02)

    built = build(ScenarioConfig("lind2", n, {"N": 1}))
    result = exit_exact(built.model)
    assert built.metadata["r_n"] == pytest.approx(n ** -0.5)
    assert result.p_survive / result.e_n == pytest.approx(SQRT_2_OVER_PI, rel=0.01)
