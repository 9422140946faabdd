import numpy as np
import pytest

from tiedml.paths import FactorFunction, ProductFunctional


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def pf_basic():
    return ProductFunctional(
        (0.5,), (FactorFunction.parse("exp:1"),), FactorFunction.parse("exp:1")
    )


@pytest.fixture
def pf_two():
    return ProductFunctional(
        (0.3, 0.62),
        (FactorFunction.parse("exp:1.3"), FactorFunction.parse("power:1")),
        FactorFunction.parse("exp:0.7"),
    )


@pytest.fixture
def pf_one():
    one = FactorFunction.parse("one")
    return ProductFunctional((0.5,), (one,), one)
