import os
import sys

import pytest

sys.path.append(os.path.dirname(os.path.abspath(__file__)))

from src.services.channel import ChannelConfig
from src.services.lattice import construction_a, scale_to_power


@pytest.fixture
def small_pair():
    """p=3, k=2, n=4 Construction-A pair at unit power"""
    return scale_to_power(construction_a(3, 2, 4, seed=0), 1.0)


@pytest.fixture
def toy_pair():
    """The n=2, p=3, k=1, G=(1 2), gamma=1 lattice used in hand-worked examples"""
    from src.services.lattice import NestedLatticePair

    return NestedLatticePair.from_lattice(construction_a(3, 1, 2, G=[[1, 2]]))


@pytest.fixture
def noiseless_channel():
    return ChannelConfig(P=1.0, sigma_z2=0.0, n=4, seed=7)


@pytest.fixture
def client():
    from fastapi.testclient import TestClient

    from main import app

    with TestClient(app) as test_client:
        yield test_client
