import numpy as np
import pytest

from supermix import DiscreteMeasure

FIG1_WEIGHTS = np.array([0.36, 0.52, 0.12])
FIG1_LOCS = np.array([-13.1, -0.9, 14.0])


@pytest.fixture
def fig1_truth():
    return DiscreteMeasure(FIG1_WEIGHTS, FIG1_LOCS.reshape(-1, 1))
