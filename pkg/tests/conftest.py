import numpy as np
import pytest

SEC5_PMFS = np.array([[0.99, 0.01], [0.7, 0.3]])
SEC5_BUDGET = 2500
SEC5_ETA = 1.0 / 2500


@pytest.fixture(scope="session")
def sec5_pmfs():
    return SEC5_PMFS.copy()


@pytest.fixture(scope="session")
def fixture_csv():
    from importlib import resources

    return resources.files("aps").joinpath("data", "survey_synthetic.csv")
