import numpy as np
import pytest

from petkin import (
    ForwardModel,
    KineticParams,
    default_input_model,
    synth_input,
    wb_fdg_schedule,
)

# organ presets from the bundled "dnn" reference table, used all over
LIVER = KineticParams(0.611, 0.793, 0.014, 0.005)
LUNGS = KineticParams(0.116, 0.683, 0.022, 0.098)


@pytest.fixture(scope="session")
def schedule():
    return wb_fdg_schedule()


@pytest.fixture(scope="session")
def aif(schedule):
    return synth_input(default_input_model(), schedule)


@pytest.fixture(scope="session")
def model(aif, schedule):
    return ForwardModel(aif, schedule)


@pytest.fixture(scope="session")
def liver():
    return LIVER


@pytest.fixture(scope="session")
def lungs():
    return LUNGS
