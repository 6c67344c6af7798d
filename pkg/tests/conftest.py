import pytest

from adaptrial.config import validate_design_config


@pytest.fixture
def four_dose_grid():
    return {"values": [250, 500, 750, 1000], "unit": "mg/m2/day"}


@pytest.fixture
def tpt_config(four_dose_grid):
    return validate_design_config(
        {
            "kind": "three_plus_three",
            "alpha": 0.025,
            "parameters": {"dose_grid": four_dose_grid},
        }
    )


@pytest.fixture
def crm_raw(four_dose_grid):
    return {
        "kind": "crm",
        "alpha": 0.025,
        "seed": 7,
        "parameters": {
            "dose_grid": {"values": [10, 20, 40, 100, 200], "unit": "ng/kg"},
            "skeleton": [0.05, 0.12, 0.20, 0.30, 0.40],
            "target": 0.20,
            "stop_rule": {"n_lookahead": 2, "prob_threshold": 0.90, "max_n": 30},
        },
    }


@pytest.fixture
def crm_config(crm_raw):
    return validate_design_config(crm_raw)
