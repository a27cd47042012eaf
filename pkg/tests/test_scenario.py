import numpy as np
import pytest
import yaml

from qvex.scenario import (
    ScenarioError,
    build_economy,
    echo_scenario,
    load_scenario,
    parse_scenario,
    solver_params,
)

MINIMAL = {
    "schema_version": 1,
    "grid": {"horizon": 1.0, "cells": 2},
    "goods": 1,
    "agents": [
        {"endowment": [1.0], "utility": {"family": "logshift", "weights": [1.0], "shift": 1.0}}
    ],
}


def write(tmp_path, mapping, name="scn.yaml"):
    path = tmp_path / name
    path.write_text(yaml.safe_dump(mapping), encoding="utf-8")
    return path


def test_minimal_scenario_fills_defaults(tmp_path):
    scn = load_scenario(write(tmp_path, MINIMAL))
    assert scn.cap_slack == 1.1
    assert scn.solver.seed == 0
    assert scn.solver.outer_step == 0.5
    assert scn.solver.outer_tol == 1e-7
    assert scn.solver.radius_schedule is None
    assert scn.agents[0].endowment[0].kind == "constant"


def test_unknown_fields_rejected(tmp_path):
    bad = dict(MINIMAL)
    bad["extra_knob"] = 3
    with pytest.raises(ScenarioError, match="unknown field"):
        load_scenario(write(tmp_path, bad))
    bad2 = {**MINIMAL, "solver": {"outer_tolerance": 1e-6}}
    with pytest.raises(ScenarioError, match="unknown field"):
        load_scenario(write(tmp_path, bad2))


def test_schema_version_checked(tmp_path):
    bad = {**MINIMAL, "schema_version": 2}
    with pytest.raises(ScenarioError, match="schema_version"):
        load_scenario(write(tmp_path, bad))


def test_cap_slack_strictness(tmp_path):
    bad = {**MINIMAL, "cap_slack": 0.9}
    with pytest.raises(ScenarioError, match="cap_slack"):
        load_scenario(write(tmp_path, bad))
    ok = {**MINIMAL, "cap_slack": 1.05}
    assert load_scenario(write(tmp_path, ok)).cap_slack == 1.05


def test_endowment_arity_checked(tmp_path):
    bad = {
        **MINIMAL,
        "goods": 2,
        "agents": [
            {"endowment": [1.0], "utility": {"family": "logshift", "weights": [1.0, 1.0]}}
        ],
    }
    with pytest.raises(ScenarioError, match="endowment"):
        load_scenario(write(tmp_path, bad))


def test_curve_validation(tmp_path):
    bad = {
        **MINIMAL,
        "agents": [
            {
                "endowment": [{"kind": "sinusoid", "base": 1.0}],
                "utility": {"family": "logshift", "weights": [1.0]},
            }
        ],
    }
    with pytest.raises(ScenarioError, match="missing field"):
        load_scenario(write(tmp_path, bad))
    bad2 = {
        **MINIMAL,
        "agents": [
            {
                "endowment": [{"kind": "constant", "level": 1.0, "slope": 2.0}],
                "utility": {"family": "logshift", "weights": [1.0]},
            }
        ],
    }
    with pytest.raises(ScenarioError, match="unknown field"):
        load_scenario(write(tmp_path, bad2))


def test_parse_error_carries_path(tmp_path):
    bad = {
        **MINIMAL,
        "agents": [
            {"endowment": [1.0], "utility": {"family": "nope", "weights": [1.0]}}
        ],
    }
    with pytest.raises(ScenarioError, match=r"agents\[0\].utility"):
        load_scenario(write(tmp_path, bad))


def test_radius_schedule_validation(tmp_path):
    bad = {**MINIMAL, "solver": {"radius_schedule": [2.0, 1.0]}}
    with pytest.raises(ScenarioError, match="increasing"):
        load_scenario(write(tmp_path, bad))
    ok = {**MINIMAL, "solver": {"radius_schedule": [1.0, 2.0, 4.0]}}
    assert load_scenario(write(tmp_path, ok)).solver.radius_schedule == (1.0, 2.0, 4.0)


def test_echo_round_trip(tmp_path):
    scn = parse_scenario(MINIMAL)
    echoed = tmp_path / "echo.yaml"
    echoed.write_text(echo_scenario(scn), encoding="utf-8")
    again = load_scenario(echoed)
    assert again == scn
    # echo is canonical: echoing the reloaded scenario is byte-identical
    assert echo_scenario(again) == echo_scenario(scn)


def test_echo_round_trip_rich_scenario(scenario_dir):
    scn = load_scenario(scenario_dir / "sinusoid_seasonal.yaml")
    again = parse_scenario(yaml.safe_load(echo_scenario(scn)))
    assert again == scn


def test_build_economy_samples_midpoints(scenario_dir):
    scn = load_scenario(scenario_dir / "sinusoid_seasonal.yaml")
    eco = build_economy(scn)
    assert eco.grid.cells == 16
    assert eco.n_agents == 2
    t = eco.grid.midpoints()
    expected = 1.0 + 0.4 * np.sin(2 * np.pi * t)
    np.testing.assert_allclose(eco.agents[0].endowment.values[:, 0], expected, atol=1e-12)
    lin = 0.4 + (0.8 - 0.4) * t / scn.horizon
    np.testing.assert_allclose(eco.agents[1].endowment.values[:, 1], lin, atol=1e-12)


def test_negative_sampled_endowment_rejected(tmp_path):
    bad = {
        **MINIMAL,
        "agents": [
            {
                "endowment": [{"kind": "sinusoid", "base": 0.1, "amplitude": 5.0}],
                "utility": {"family": "logshift", "weights": [1.0]},
            }
        ],
    }
    with pytest.raises(ScenarioError, match="negative"):
        build_economy(load_scenario(write(tmp_path, bad)))


def test_solver_params_translation(tmp_path):
    mapping = {
        **MINIMAL,
        "solver": {"seed": 5, "outer_tol": 1e-6, "sequential": False, "max_outer": 77},
    }
    scn = load_scenario(write(tmp_path, mapping))
    params = solver_params(scn)
    assert params.seed == 5
    assert params.outer_tol == 1e-6
    assert params.parallel is True
    assert params.max_outer == 77
    overridden = solver_params(scn, seed=9, parallel=False)
    assert overridden.seed == 9 and overridden.parallel is False


def test_oracle_fixture_parses(scenario_dir):
    scn = load_scenario(scenario_dir / "oracle_cd_quad.yaml")
    eco = build_economy(scn)
    assert eco.goods == 2 and eco.n_agents == 2 and eco.grid.cells == 1
    np.testing.assert_allclose(eco.agents[0].endowment.values, [[1.0, 0.2]])
