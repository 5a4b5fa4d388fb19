import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from ringflux.model import ModelParams


@pytest.fixture
def params32():
    return ModelParams(b=1.0, gamma=1.0, alpha=1.0, kappa=1.0, a=2.0, n=32,
                       beta=1.0, lam=0.0)


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
