import copy

import pytest

from wecpark.scenario import validate_scenario

BASE_SCENARIO = {
    "name": "test-pair",
    "climate": {
        "components": [
            {"spectrum": {"hs_m": 1.53, "tp_s": 5.83},
             "spreading": {"theta0_rad": 0.0, "beta": 2.0}},
        ],
        "depth_m": 50.0,
    },
    "devices": [
        {"x_m": 0.0, "y_m": 0.0, "radius_m": 2.5, "draft_m": 0.5,
         "generator_mass_kg": 2560.0, "generator_stiffness_n_m": 4000.0},
        {"x_m": 9.0, "y_m": 5.0, "radius_m": 2.5, "draft_m": 0.5,
         "generator_mass_kg": 2560.0, "generator_stiffness_n_m": 4000.0},
    ],
    "discretization": {"n_bins": 8, "coverage": 0.999},
    "constraint": {"alpha": 0.5, "positive_stiffness": False},
    "optimizer": {
        "method": "saa-gl",
        "seed": 42,
        "penalty": {"tau_out": 1e-3, "max_outer": 8, "n_check": 8},
        "saa": {"n_nodes": 6, "max_iters": 200},
        "sa": {"window": 20, "max_iters": 400},
    },
    "initial_guess": {"mode": "isolated-optimum"},
}


def scenario_dict(**overrides):
    data = copy.deepcopy(BASE_SCENARIO)
    for key, value in overrides.items():
        if isinstance(value, dict) and isinstance(data.get(key), dict):
            data[key] = {**data[key], **value}
        else:
            data[key] = value
    return data


@pytest.fixture
def pair_scenario():
    return validate_scenario(scenario_dict())


@pytest.fixture
def single_scenario():
    return validate_scenario(scenario_dict(devices=[BASE_SCENARIO["devices"][0]]))
