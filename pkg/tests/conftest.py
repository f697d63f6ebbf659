import numpy as np
import pytest

from paulipml.geometry import BoxDomain
from paulipml.stretching import AbsorptionProfile


@pytest.fixture
def unit_box():
    return BoxDomain((1.0, 1.0, 1.0), inner_fraction=0.5)


@pytest.fixture
def bump_profiles():
    """Polynomial absorption bumps on [0.5, 1] with sigma0 = 4."""
    return tuple(AbsorptionProfile(a=0.5, b=1.0, sigma0=4.0)
                 for _ in range(3))


@pytest.fixture
def zero_profiles():
    return tuple(AbsorptionProfile.zero(1.0) for _ in range(3))


@pytest.fixture
def rng():
    return np.random.default_rng(42)
