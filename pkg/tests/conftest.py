import json
import os

import numpy as np
import pytest
from hypothesis import settings

from acksched.phi import build_phi

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")

HERE = os.path.dirname(os.path.abspath(__file__))


@pytest.fixture(scope="session")
def frozen():
    with open(os.path.join(HERE, "oracles", "frozen.json")) as fh:
        return json.load(fh)


_TABLES = {}


def table(D, resolution=2 ** 16):
    key = (D, resolution)
    if key not in _TABLES:
        _TABLES[key] = build_phi(D, resolution)
    return _TABLES[key]


@pytest.fixture(scope="session")
def phi_for():
    return table


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
