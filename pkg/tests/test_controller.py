import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cccsim import (ControllerGains, ccc_acceleration, is_plant_stable,
                    range_policy, speed_policy)
from cccsim.controller import characteristic_roots


def test_range_policy_standstill_below_stopping_distance(gains):
    assert range_policy(5.0, gains) == 0.0
    assert range_policy(-3.0, gains) == 0.0


def test_range_policy_saturates_at_free_flow(gains):
    assert range_policy(gains.d_st + gains.v_max / gains.kappa, gains) == gains.v_max
    assert range_policy(1e6, gains) == gains.v_max


def test_range_policy_hand_value(gains):
    # 0.6 * (15 - 5)
    assert range_policy(15.0, gains) == pytest.approx(6.0)


@given(D=st.floats(min_value=-100.0, max_value=300.0),
       bump=st.floats(min_value=0.0, max_value=50.0))
def test_range_policy_bounded_and_monotone(D, bump):
    g = ControllerGains()
    v = range_policy(D, g)
    assert 0.0 <= v <= g.v_max
    assert range_policy(D + bump, g) >= v


def test_speed_policy(gains):
    assert speed_policy(12.0, gains) == 12.0
    assert speed_policy(gains.v_max, gains) == gains.v_max
    assert speed_policy(gains.v_max + 5.0, gains) == gains.v_max


def test_ccc_zero_at_equilibrium(gains):
    v = range_policy(15.0, gains)
    assert ccc_acceleration(15.0, v, [v], gains) == pytest.approx(0.0)


def test_ccc_hand_value(gains):
    # 0.4*(6 - 5) + 0.5*(8 - 5)
    assert ccc_acceleration(15.0, 5.0, [8.0], gains) == pytest.approx(1.9)


def test_ccc_single_lead_is_plain_acc(gains):
    D, v, v1 = 22.0, 7.5, 9.0
    expected = (gains.alpha * (range_policy(D, gains) - v)
                + gains.betas[0] * (speed_policy(v1, gains) - v))
    assert ccc_acceleration(D, v, [v1], gains) == pytest.approx(expected)


def test_ccc_rejects_length_mismatch(gains):
    with pytest.raises(ValueError):
        ccc_acceleration(15.0, 5.0, [8.0, 9.0], gains)


def test_ccc_affine_in_each_gain():
    # output is linear in every beta for fixed state
    D, v, leads = 18.0, 6.0, [7.0, 9.0, 11.0]
    state_args = (D, v, leads)

    def acc(betas):
        return ccc_acceleration(*state_args, ControllerGains(betas=betas))

    b0 = (0.2, 0.4, 0.1)
    b1 = (0.8, 0.4, 0.1)
    mid = tuple((x + y) / 2 for x, y in zip(b0, b1))
    assert acc(mid) == pytest.approx((acc(b0) + acc(b1)) / 2)


def test_plant_stability_examples():
    assert is_plant_stable(ControllerGains(alpha=0.4, kappa=0.6, betas=(0.5,)))
    assert not is_plant_stable(ControllerGains(alpha=0.4, kappa=0.6, betas=(-0.5,)))
    assert not is_plant_stable(ControllerGains(alpha=0.0, kappa=0.6, betas=(0.5,)))


def test_plant_stability_matches_root_finding(rng):
    # on the kappa > 0 domain the set condition is exactly Routh-Hurwitz
    for _ in range(1000):
        n = rng.integers(1, 4)
        g = ControllerGains(alpha=float(rng.uniform(-1.0, 2.0)),
                            kappa=float(rng.uniform(0.05, 2.0)),
                            betas=tuple(rng.uniform(-1.5, 2.0, size=n)))
        roots = characteristic_roots(g)
        assert is_plant_stable(g) == bool(np.all(roots.real < 0.0))


def test_gains_validation():
    with pytest.raises(ValueError):
        ControllerGains(betas=())
    with pytest.raises(ValueError):
        ControllerGains(v_max=0.0)
