import math
import random

import pytest

from flowcalc import engine
from flowcalc.dsl import parse


@pytest.fixture
def rng():
    return random.Random(20260818)


@pytest.fixture(scope="session")
def model1():
    return parse(engine.MODEL1_SPEC)


@pytest.fixture(scope="session")
def model2():
    return parse(engine.MODEL2_SPEC)


@pytest.fixture(scope="session")
def witness_scalers():
    """The order-dependence witness: eta1=1, eta2=1.2, eta3=0.8."""
    return 1.0, 1.2, 0.8


@pytest.fixture(scope="session")
def witness_logs():
    """Log coefficients producing the witness scalers at trt1=trt2=1."""
    return math.log(1.2), math.log(0.8)
