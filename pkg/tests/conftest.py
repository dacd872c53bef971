import math

import pytest

from circle_ifs.certifier import certify_robust_minimality
from circle_ifs.circle_maps import Rotation, SinePerturbed
from circle_ifs.ifs_core import IFS
from circle_ifs.symbolic import BernoulliModel

GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


@pytest.fixture(scope="session")
def golden_rotation():
    return Rotation(GOLDEN)


@pytest.fixture(scope="session")
def sine_map():
    return SinePerturbed(0.0, -0.5)


@pytest.fixture(scope="session")
def golden_sine_ifs(golden_rotation, sine_map):
    return IFS([golden_rotation, sine_map], label="golden-sine")


@pytest.fixture(scope="session")
def fair_coin():
    return BernoulliModel([0.5, 0.5])


@pytest.fixture(scope="session")
def certificate_pair(golden_rotation, sine_map):
    return certify_robust_minimality(golden_rotation, sine_map, label="golden-sine")
