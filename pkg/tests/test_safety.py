"""Stopping envelope, barrier gradients and the min-type filter.

The envelope tests lean on two independent oracles: algebraic evaluation
of each branch formula at the printed boundaries (continuity), and
central finite differences (gradients).
"""

import pytest
from hypothesis import given
from hypothesis import strategies as st

from cccsim import (SafetyParams, VehicleParams, barrier, braking_consistent,
                    cbf_acceleration, envelope_gradient, lead_accel_bound_ok,
                    safety_filter, stopping_envelope)
from cccsim.safety import (BRANCH_FULL_STOP, BRANCH_MATCHED_SPEED,
                           BRANCH_TIME_HEADWAY, branch_value,
                           lead_speed_boundaries)


def random_params(rng, ordering):
    """Random safety constants with a prescribed braking-capability ordering."""
    tau = rng.uniform(0.3, 2.5)
    a, b = sorted(rng.uniform(1.0, 9.0, size=2))
    if ordering == "ego_weaker":
        a_ego, a_lead = a, b
    else:
        a_ego, a_lead = b, a
    if a_ego == a_lead:
        a_lead = a_ego * 0.9 if ordering != "ego_weaker" else a_ego
    return SafetyParams(tau=tau, a_ego=a_ego, a_lead=a_lead,
                        gamma=rng.uniform(0.2, 3.0))


def test_envelope_fast_lead_is_time_headway(sp):
    _, onset, _ = lead_speed_boundaries(20.0, sp)
    assert stopping_envelope(20.0, onset + 1.0, sp) == 20.0 * sp.tau


def test_envelope_weaker_ego_boundary_case():
    sp = SafetyParams(tau=1.0, a_ego=4.0, a_lead=6.0, gamma=1.0)
    v = sp.a_ego * sp.tau
    assert stopping_envelope(v, 0.0, sp) == pytest.approx(v * sp.tau)


def test_envelope_split_hand_value(sp):
    # a_ego=6 > a_lead=4, v=20, tau=1, v1 at the lower split 4/6*14:
    # both adjacent branches give 20 + 196*2/72
    v = 20.0
    _, _, f3 = lead_speed_boundaries(v, sp)
    expected = v * sp.tau + 14.0 ** 2 * (sp.a_ego - sp.a_lead) / (2 * sp.a_ego ** 2)
    assert stopping_envelope(v, f3, sp) == pytest.approx(expected, abs=1e-12)
    assert branch_value(BRANCH_MATCHED_SPEED, v, f3, sp) == pytest.approx(expected, abs=1e-12)
    assert branch_value(BRANCH_FULL_STOP, v, f3, sp) == pytest.approx(expected, abs=1e-12)


def test_envelope_continuity_both_orderings(rng):
    for ordering in ("ego_weaker", "ego_stronger"):
        for _ in range(500):
            sp = random_params(rng, ordering)
            v = rng.uniform(sp.a_ego * sp.tau, sp.a_ego * sp.tau + 30.0)
            f1, f2, f3 = lead_speed_boundaries(v, sp)
            if ordering == "ego_weaker":
                pairs = [(f1, BRANCH_TIME_HEADWAY, BRANCH_FULL_STOP)]
            else:
                pairs = [(f2, BRANCH_TIME_HEADWAY, BRANCH_MATCHED_SPEED),
                         (f3, BRANCH_MATCHED_SPEED, BRANCH_FULL_STOP)]
            for v1, above, below in pairs:
                if v1 < 0.0:
                    continue
                assert branch_value(above, v, v1, sp) == pytest.approx(
                    branch_value(below, v, v1, sp), abs=1e-9)


def test_envelope_never_below_time_headway(rng):
    for ordering in ("ego_weaker", "ego_stronger"):
        for _ in range(500):
            sp = random_params(rng, ordering)
            v = rng.uniform(0.0, 40.0)
            v1 = rng.uniform(0.0, 40.0)
            assert stopping_envelope(v, v1, sp) >= v * sp.tau - 1e-12


def test_barrier_boundary_and_signs(sp):
    v = 12.0
    assert barrier(v * sp.tau, v, 40.0, sp) == pytest.approx(0.0)
    assert barrier(0.0, 10.0, 0.0, sp) < 0.0
    _, _, f3 = lead_speed_boundaries(20.0, sp)
    assert barrier(30.0, 20.0, f3, sp) == pytest.approx(30.0 - 25.444444444444443, abs=1e-9)


def test_barrier_nonnegative_implies_time_headway(rng):
    for _ in range(2000):
        sp = random_params(rng, rng.choice(["ego_weaker", "ego_stronger"]))
        v, v1 = rng.uniform(0.0, 40.0, size=2)
        D = rng.uniform(-10.0, 120.0)
        if barrier(D, v, v1, sp) >= 0.0:
            assert D >= v * sp.tau - 1e-12


def test_gradient_time_headway_branch(sp):
    _, onset, _ = lead_speed_boundaries(25.0, sp)
    assert envelope_gradient(25.0, onset + 2.0, sp) == (sp.tau, 0.0)


def test_gradient_hand_value():
    sp = SafetyParams(tau=1.0, a_ego=5.0, a_lead=5.0, gamma=1.0)
    dv, dv1 = envelope_gradient(15.0, 0.0, sp)
    assert dv == pytest.approx(3.0)
    assert dv1 == pytest.approx(0.0)


def _interior_points(rng, count):
    """Random (v, v1, sp) strictly inside one envelope branch."""
    pts = []
    while len(pts) < count:
        sp = random_params(rng, rng.choice(["ego_weaker", "ego_stronger"]))
        v = rng.uniform(0.0, 40.0)
        v1 = rng.uniform(0.0, 40.0)
        f1, f2, f3 = lead_speed_boundaries(v, sp)
        cuts = [f1] if sp.a_ego <= sp.a_lead else [f2, f3]
        margin = 1e-3 * max(1.0, abs(v1))
        if all(abs(v1 - c) > margin for c in cuts) and v1 > margin:
            pts.append((v, v1, sp))
    return pts


def test_gradient_matches_finite_differences(rng):
    eps = 1e-6
    for v, v1, sp in _interior_points(rng, 1000):
        dv, dv1 = envelope_gradient(v, v1, sp)
        fd_v = (stopping_envelope(v + eps, v1, sp)
                - stopping_envelope(v - eps, v1, sp)) / (2 * eps)
        fd_v1 = (stopping_envelope(v, v1 + eps, sp)
                 - stopping_envelope(v, v1 - eps, sp)) / (2 * eps)
        scale = max(1.0, abs(dv))
        assert abs(fd_v - dv) <= 1e-6 * scale
        assert abs(fd_v1 - dv1) <= 1e-6 * max(1.0, abs(dv1))


def test_gradient_speed_slope_at_least_time_headway(rng):
    for _ in range(2000):
        sp = random_params(rng, rng.choice(["ego_weaker", "ego_stronger"]))
        dv, _ = envelope_gradient(rng.uniform(0.0, 40.0), rng.uniform(0.0, 40.0), sp)
        assert dv >= sp.tau - 1e-12


def test_cbf_accel_boundary_equilibrium(sp):
    # riding the time-headway boundary at matched speed needs no margin
    v = 15.0
    assert cbf_acceleration(v * sp.tau, v, v, 0.0, sp) == pytest.approx(0.0)


def test_cbf_accel_grows_with_clearance(sp):
    a1 = cbf_acceleration(30.0, 10.0, 10.0, 0.0, sp)
    a2 = cbf_acceleration(60.0, 10.0, 10.0, 0.0, sp)
    assert a2 - a1 == pytest.approx(sp.gamma * 30.0 / sp.tau)


def test_cbf_accel_hand_value(sp):
    _, _, f3 = lead_speed_boundaries(20.0, sp)
    assert cbf_acceleration(30.0, 20.0, f3, 0.0, sp) == pytest.approx(-1.8333333333, abs=1e-9)


def test_filter_transparent_when_safe(sp):
    assert safety_filter(-1.0, 60.0, 10.0, 10.0, 0.0, sp) == -1.0


def test_filter_overrides_unsafe_command(sp):
    _, _, f3 = lead_speed_boundaries(20.0, sp)
    out = safety_filter(2.0, 30.0, 20.0, f3, 0.0, sp)
    assert out == pytest.approx(-1.8333333333, abs=1e-9)


@given(a=st.floats(min_value=-10.0, max_value=10.0),
       D=st.floats(min_value=-5.0, max_value=80.0),
       v=st.floats(min_value=0.0, max_value=35.0),
       v1=st.floats(min_value=0.0, max_value=35.0),
       a1=st.floats(min_value=-4.0, max_value=3.0))
def test_filter_never_exceeds_nominal(a, D, v, v1, a1):
    sp = SafetyParams()
    assert safety_filter(a, D, v, v1, a1, sp) <= a


def _cbf_from_branch(branch, D, v, v1, a1, sp):
    from cccsim.safety import branch_gradient
    dv, dv1 = branch_gradient(branch, v, v1, sp)
    return (v1 - v - dv1 * a1 + sp.gamma * (D - branch_value(branch, v, v1, sp))) / dv


def test_filter_output_continuous_at_smooth_splits(rng):
    # the envelope is C1 at the stronger-ego splits, so evaluating the
    # filter with either adjacent branch there gives the same command
    for _ in range(300):
        sp = random_params(rng, "ego_stronger")
        v = rng.uniform(sp.a_ego * sp.tau + 0.5, sp.a_ego * sp.tau + 25.0)
        _, f2, f3 = lead_speed_boundaries(v, sp)
        D = rng.uniform(0.5, 2.0) * stopping_envelope(v, f3, sp)
        a1 = rng.uniform(-sp.a_lead, 2.0)
        for split, above, below in ((f2, BRANCH_TIME_HEADWAY, BRANCH_MATCHED_SPEED),
                                    (f3, BRANCH_MATCHED_SPEED, BRANCH_FULL_STOP)):
            if split <= 0.0:
                continue
            assert _cbf_from_branch(above, D, v, split, a1, sp) == pytest.approx(
                _cbf_from_branch(below, D, v, split, a1, sp), abs=1e-6)
            assert cbf_acceleration(D, v, split, a1, sp) == pytest.approx(
                _cbf_from_branch(below, D, v, split, a1, sp), abs=1e-6)


def test_lead_accel_bound(sp):
    assert lead_accel_bound_ok([0.5, 0.0, 1.2], sp)
    assert lead_accel_bound_ok([0.0, -sp.a_lead], sp)
    assert not lead_accel_bound_ok([0.0, -(sp.a_lead + 1.0)], sp)


def test_braking_consistency(sp):
    assert braking_consistent(sp, VehicleParams())
    assert not braking_consistent(SafetyParams(a_ego=8.0), VehicleParams())
