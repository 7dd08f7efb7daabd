import math

import numpy as np
import pytest

from qpholder.cocycle import SchrodingerCocycle
from qpholder.torus import AnalyticTorusFunction, FrequencyVector

GOLDEN = (math.sqrt(5) - 1) / 2
ALPHA2 = (math.sqrt(2) - 1, math.sqrt(3) - 1)


def schrodinger(E, lam=0.05, d=1, alpha=None):
    if alpha is None:
        alpha = (GOLDEN,) if d == 1 else ALPHA2
    V = AnalyticTorusFunction.cosine_potential(len(alpha))
    return SchrodingerCocycle(float(E), lam, V, FrequencyVector(alpha))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
