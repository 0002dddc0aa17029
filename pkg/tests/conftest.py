import hypothesis
import numpy as np
import pytest

from cccsim import ControllerGains, SafetyParams, VehicleParams

hypothesis.settings.register_profile(
    "default", max_examples=60, deadline=None)
hypothesis.settings.load_profile("default")


@pytest.fixture
def vp():
    return VehicleParams()


@pytest.fixture
def sp():
    return SafetyParams(tau=1.0, a_ego=6.0, a_lead=4.0, gamma=1.0)


@pytest.fixture
def gains():
    return ControllerGains(alpha=0.4, kappa=0.6, betas=(0.5,), v_max=30.0, d_st=5.0)


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
